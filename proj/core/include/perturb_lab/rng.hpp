#pragma once

#include <cstdint>
#include <random>

namespace perturb_lab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `index` of `base`. Each (base, index) pair yields an
/// independent, individually reproducible stream, so adding runs never
/// disturbs earlier ones.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return mix64(mix64(base) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// Stream tags used when deriving per-purpose seeds.
namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kGrid = 2;
inline constexpr std::uint64_t kTest = 3;
inline constexpr std::uint64_t kHoldout = 4;
inline constexpr std::uint64_t kSubsample = 5;
inline constexpr std::uint64_t kInit = 11;
inline constexpr std::uint64_t kEmbedding = 12;
inline constexpr std::uint64_t kShuffle = 13;
inline constexpr std::uint64_t kNoise = 14;
}  // namespace stream

}  // namespace perturb_lab

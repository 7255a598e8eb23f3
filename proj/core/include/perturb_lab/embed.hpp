#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "perturb_lab/corpus.hpp"
#include "perturb_lab/matrix.hpp"

namespace perturb_lab {

/// V x d word vectors; row 0 is the UNK vector.
struct EmbeddingMatrix {
    Matrix weights;
    bool trainable = true;

    std::size_t vocab_size() const noexcept { return weights.rows(); }
    std::size_t dim() const noexcept { return weights.cols(); }

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

/// Rows of an embedding matrix gathered for one token sequence.
struct EmbeddedSequence {
    Matrix values;
    std::vector<TokenId> token_indices;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t dim() const noexcept { return values.cols(); }
};

inline constexpr double kPretrainedFallbackScale = 0.25;

EmbeddingMatrix init_random(std::size_t vocab_size, std::size_t dim, double scale, std::uint64_t seed);

struct PretrainedLoad {
    EmbeddingMatrix embeddings;
    double coverage = 0.0;  // fraction of vocabulary rows found in the file
    std::size_t matched = 0;
};

/// Loads `<token> <v1> ... <vd>` lines. Rows for tokens absent from the file
/// (UNK included) are uniform in [-fallback_scale, fallback_scale].
PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed, double fallback_scale = kPretrainedFallbackScale);

EmbeddedSequence lookup(const EmbeddingMatrix& emb, std::span<const TokenId> tokens);

/// weights[tokens[i]] -= lr * grad[i]; repeated indices accumulate.
void accumulate_update(EmbeddingMatrix& emb, std::span<const TokenId> tokens, const Matrix& grad, double lr);

}  // namespace perturb_lab

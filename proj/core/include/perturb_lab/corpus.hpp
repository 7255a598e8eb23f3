#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace perturb_lab {

using TokenId = std::uint32_t;

inline constexpr TokenId kUnk = 0;
inline constexpr std::string_view kUnkToken = "<unk>";

/// Token <-> index mapping. Index 0 is always UNK.
class Vocabulary {
public:
    Vocabulary();

    /// Build from an ordered token list that excludes UNK; tokens get indices 1.. in order.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    std::size_t size() const noexcept { return index_to_token_.size(); }

    /// Index of `token`, or kUnk if absent.
    TokenId index_of(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token_at(TokenId index) const;

    const std::vector<std::string>& tokens() const noexcept { return index_to_token_; }

private:
    std::unordered_map<std::string, TokenId> token_to_index_;
    std::vector<std::string> index_to_token_;
};

struct LabeledExample {
    std::vector<TokenId> tokens;
    std::size_t label = 0;

    friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct Dataset {
    std::vector<LabeledExample> examples;
    std::size_t num_classes = 2;
    std::string name;

    std::size_t size() const noexcept { return examples.size(); }
    bool empty() const noexcept { return examples.empty(); }

    /// Dataset holding the examples at `indices`, in that order.
    Dataset select(std::span<const std::size_t> indices) const;
};

/// Label name -> class index.
using LabelMap = std::map<std::string, std::size_t>;

struct Fold {
    Dataset train;
    Dataset dev;
    std::vector<std::size_t> dev_indices;
};

/// Lowercase and split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// UNK at 0, then tokens with count >= min_count by descending frequency,
/// ties broken lexicographically.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count);

std::vector<TokenId> encode(const Vocabulary& vocab, std::span<const std::string> tokens);

/// Raw TSV rows before encoding.
struct TsvRow {
    std::string label;
    std::string text;
    std::size_t line = 0;
};

/// Parses `<label>\t<text>` lines, skipping blank and '#' lines.
std::vector<TsvRow> read_tsv(const std::filesystem::path& path);

/// Label map assigning indices to the sorted distinct labels of `rows`.
LabelMap infer_label_map(std::span<const TsvRow> rows);

Dataset load_tsv(const std::filesystem::path& path, const Vocabulary& vocab, const LabelMap& label_map);

/// k disjoint dev folds covering the dataset, sizes differing by at most one.
std::vector<Fold> split_cv(const Dataset& dataset, std::size_t k, std::uint64_t seed);

/// Retains ceil(fraction * N) examples, stratified by class.
Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

/// Random stratified partition into (rest, held-out) where the held-out part
/// has round(fraction * N) examples.
std::pair<Dataset, Dataset> split_holdout(const Dataset& dataset, double fraction, std::uint64_t seed);

}  // namespace perturb_lab

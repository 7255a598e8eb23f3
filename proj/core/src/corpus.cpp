#include "perturb_lab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "perturb_lab/error.hpp"
#include "perturb_lab/rng.hpp"

namespace perturb_lab {

Vocabulary::Vocabulary() : index_to_token_{std::string(kUnkToken)} {}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary vocab;
    for (const auto& token : tokens) {
        if (token == kUnkToken || vocab.token_to_index_.contains(token)) {
            throw std::invalid_argument("Vocabulary: duplicate or reserved token '" + token + "'");
        }
        vocab.token_to_index_.emplace(token, static_cast<TokenId>(vocab.index_to_token_.size()));
        vocab.index_to_token_.push_back(token);
    }
    return vocab;
}

TokenId Vocabulary::index_of(std::string_view token) const {
    auto it = token_to_index_.find(std::string(token));
    return it == token_to_index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return token_to_index_.contains(std::string(token));
}

const std::string& Vocabulary::token_at(TokenId index) const {
    if (index >= index_to_token_.size()) throw std::out_of_range("Vocabulary: index out of range");
    return index_to_token_[index];
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
    Dataset out;
    out.num_classes = num_classes;
    out.name = name;
    out.examples.reserve(indices.size());
    for (std::size_t i : indices) out.examples.push_back(examples.at(i));
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto uch = static_cast<unsigned char>(ch);
        if (std::isspace(uch)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(uch)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
    if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& sentence : corpus) {
        for (const auto& token : sentence) {
            if (token != kUnkToken) ++counts[token];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [token, count] : counts) {
        if (count >= min_count) kept.emplace_back(token, count);
    }
    // counts is already lexicographic, so a stable sort on frequency keeps ties ordered.
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> ordered;
    ordered.reserve(kept.size());
    for (auto& [token, count] : kept) ordered.push_back(std::move(token));
    return Vocabulary::from_tokens(ordered);
}

std::vector<TokenId> encode(const Vocabulary& vocab, std::span<const std::string> tokens) {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& token : tokens) ids.push_back(vocab.index_of(token));
    return ids;
}

std::vector<TsvRow> read_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    std::vector<TsvRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path.string(), line_no, "expected '<label>\\t<text>'");
        rows.push_back({line.substr(0, tab), line.substr(tab + 1), line_no});
    }
    return rows;
}

LabelMap infer_label_map(std::span<const TsvRow> rows) {
    std::set<std::string> labels;
    for (const auto& row : rows) labels.insert(row.label);
    LabelMap map;
    for (const auto& label : labels) map.emplace(label, map.size());
    return map;
}

Dataset load_tsv(const std::filesystem::path& path, const Vocabulary& vocab, const LabelMap& label_map) {
    Dataset dataset;
    dataset.name = path.stem().string();
    std::size_t max_label = 0;
    for (const auto& [name, index] : label_map) max_label = std::max(max_label, index);
    dataset.num_classes = std::max<std::size_t>(2, max_label + 1);

    for (const auto& row : read_tsv(path)) {
        auto it = label_map.find(row.label);
        if (it == label_map.end()) throw ParseError(path.string(), row.line, "unknown label '" + row.label + "'");
        auto tokens = tokenize(row.text);
        LabeledExample example{encode(vocab, tokens), it->second};
        if (example.tokens.empty()) example.tokens.push_back(kUnk);
        dataset.examples.push_back(std::move(example));
    }
    return dataset;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

// Splits `total` across classes proportionally to their sizes using largest
// remainders; never exceeds a class size.
std::vector<std::size_t> allocate(const std::vector<std::size_t>& class_sizes, std::size_t total) {
    std::size_t n = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
    std::vector<std::size_t> quota(class_sizes.size(), 0);
    if (n == 0) return quota;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        double exact = static_cast<double>(total) * static_cast<double>(class_sizes[c]) / static_cast<double>(n);
        quota[c] = std::min(class_sizes[c], static_cast<std::size_t>(std::floor(exact)));
        assigned += quota[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    while (assigned < total) {
        bool progressed = false;
        for (const auto& [rem, c] : remainders) {
            if (assigned == total) break;
            if (quota[c] < class_sizes[c]) {
                ++quota[c];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break;
    }
    return quota;
}

// Picks quota[c] random members of each class; returns (chosen, rest), both sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_pick(const Dataset& dataset, std::size_t total,
                                                                              std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto label = dataset.examples[i].label;
        if (label >= by_class.size()) by_class.resize(label + 1);
        by_class[label].push_back(i);
    }
    std::vector<std::size_t> sizes;
    for (const auto& members : by_class) sizes.push_back(members.size());
    auto quota = allocate(sizes, total);

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    std::vector<std::size_t> rest;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto members = by_class[c];
        std::shuffle(members.begin(), members.end(), rng);
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
        rest.insert(rest.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
    }
    std::sort(chosen.begin(), chosen.end());
    std::sort(rest.begin(), rest.end());
    return {chosen, rest};
}

}  // namespace

std::vector<Fold> split_cv(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("split_cv: k must be >= 2");
    if (k > dataset.size()) {
        throw std::invalid_argument("split_cv: k=" + std::to_string(k) + " exceeds dataset size " +
                                    std::to_string(dataset.size()));
    }
    auto order = shuffled_indices(dataset.size(), seed);
    std::vector<std::vector<std::size_t>> dev(k);
    for (std::size_t pos = 0; pos < order.size(); ++pos) dev[pos % k].push_back(order[pos]);

    std::vector<Fold> folds;
    folds.reserve(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(dev[f].begin(), dev[f].end());
        std::vector<bool> in_dev(dataset.size(), false);
        for (auto i : dev[f]) in_dev[i] = true;
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (!in_dev[i]) train.push_back(i);
        }
        folds.push_back({dataset.select(train), dataset.select(dev[f]), dev[f]});
    }
    return folds;
}

Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("subsample: fraction must be in (0, 1], got " + std::to_string(fraction));
    }
    // The epsilon keeps products like 0.1 * 500 from rounding up past the exact count.
    auto target = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(dataset.size()) - 1e-9));
    auto [chosen, rest] = stratified_pick(dataset, target, seed);
    return dataset.select(chosen);
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& dataset, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0) {
        throw std::invalid_argument("split_holdout: fraction must be in [0, 1)");
    }
    auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dataset.size())));
    auto [chosen, rest] = stratified_pick(dataset, held, seed);
    return {dataset.select(rest), dataset.select(chosen)};
}

}  // namespace perturb_lab

#include "perturb_lab/embed.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "perturb_lab/error.hpp"
#include "perturb_lab/rng.hpp"

namespace perturb_lab {

namespace {

void fill_uniform(Matrix& m, double scale, Rng& rng) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& v : m.values()) v = dist(rng);
}

bool is_integer(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

EmbeddingMatrix init_random(std::size_t vocab_size, std::size_t dim, double scale, std::uint64_t seed) {
    if (vocab_size < 1 || dim < 1) throw std::invalid_argument("init_random: V and d must be >= 1");
    if (!(scale > 0.0)) throw std::invalid_argument("init_random: scale must be > 0");
    EmbeddingMatrix emb{Matrix(vocab_size, dim), true};
    Rng rng(seed);
    fill_uniform(emb.weights, scale, rng);
    return emb;
}

PretrainedLoad load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed, double fallback_scale) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embeddings " + path.string());

    PretrainedLoad result{init_random(vocab.size(), dim, fallback_scale, seed), 0.0, 0};
    std::vector<bool> filled(vocab.size(), false);

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        fields.clear();
        for (std::string f; ss >> f;) fields.push_back(std::move(f));
        if (fields.empty()) continue;
        if (line_no == 1 && fields.size() == 2 && is_integer(fields[0]) && is_integer(fields[1])) continue;

        const std::string& token = fields.front();
        if (fields.size() - 1 != dim) {
            throw ParseError(path.string(), line_no,
                             "token '" + token + "' has " + std::to_string(fields.size() - 1) +
                                 " values, expected " + std::to_string(dim));
        }
        auto key = lowercase(token);
        if (!vocab.contains(key)) continue;
        TokenId id = vocab.index_of(key);
        if (filled[id]) continue;

        auto row = result.embeddings.weights.row(id);
        for (std::size_t j = 0; j < dim; ++j) {
            const std::string& text = fields[j + 1];
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
                throw ParseError(path.string(), line_no, "token '" + token + "' has bad value '" + text + "'");
            }
            row[j] = v;
        }
        filled[id] = true;
        ++result.matched;
    }
    result.coverage = static_cast<double>(result.matched) / static_cast<double>(vocab.size());
    return result;
}

EmbeddedSequence lookup(const EmbeddingMatrix& emb, std::span<const TokenId> tokens) {
    if (tokens.empty()) throw std::invalid_argument("lookup: empty token sequence");
    EmbeddedSequence seq{Matrix(tokens.size(), emb.dim()), {tokens.begin(), tokens.end()}};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= emb.vocab_size()) {
            throw std::out_of_range("lookup: token index " + std::to_string(tokens[i]) + " >= V=" +
                                    std::to_string(emb.vocab_size()));
        }
        auto src = emb.weights.row(tokens[i]);
        std::copy(src.begin(), src.end(), seq.values.row(i).begin());
    }
    return seq;
}

void accumulate_update(EmbeddingMatrix& emb, std::span<const TokenId> tokens, const Matrix& grad, double lr) {
    if (!emb.trainable) throw std::logic_error("accumulate_update: embeddings are frozen");
    if (grad.rows() != tokens.size() || grad.cols() != emb.dim()) {
        throw std::invalid_argument("accumulate_update: gradient is " + shape_string(grad) + ", expected " +
                                    std::to_string(tokens.size()) + "x" + std::to_string(emb.dim()));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= emb.vocab_size()) throw std::out_of_range("accumulate_update: token index out of range");
        auto dst = emb.weights.row(tokens[i]);
        auto g = grad.row(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= lr * g[j];
    }
}

}  // namespace perturb_lab

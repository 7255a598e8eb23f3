#include "perturb_lab/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace perturb_lab {

namespace {

constexpr std::array<std::string_view, 8> kStrategyNames = {
    "none",         "gaussian",         "bernoulli",    "adversarial",
    "word_dropout", "semantic_dropout", "gaussian_adv", "bernoulli_adv",
};

void check_keep_prob(double p, const char* where) {
    if (!(p > 0.0) || p > 1.0) {
        throw std::invalid_argument(std::string(where) + ": keep probability must be in (0, 1], got " +
                                    std::to_string(p));
    }
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* where) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_string(a) + " vs " +
                                    shape_string(b));
    }
}

Matrix scaled(const Matrix& m, double s) {
    if (s == 1.0) return m;
    Matrix out = m;
    for (double& v : out.values()) v *= s;
    return out;
}

}  // namespace

std::string_view to_string(Strategy s) { return kStrategyNames[static_cast<std::size_t>(s)]; }

Strategy parse_strategy(std::string_view name) {
    for (std::size_t i = 0; i < kStrategyNames.size(); ++i) {
        if (kStrategyNames[i] == name) return static_cast<Strategy>(i);
    }
    throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

bool uses_keep_prob(Strategy s) {
    switch (s) {
        case Strategy::bernoulli:
        case Strategy::word_dropout:
        case Strategy::semantic_dropout:
        case Strategy::bernoulli_adv:
            return true;
        default:
            return false;
    }
}

bool uses_sigma(Strategy s) {
    switch (s) {
        case Strategy::gaussian:
        case Strategy::adversarial:
        case Strategy::gaussian_adv:
            return true;
        default:
            return false;
    }
}

std::string_view to_string(FlipOrder order) { return order == FlipOrder::descending ? "descending" : "ascending"; }

FlipOrder parse_flip_order(std::string_view name) {
    if (name == "descending") return FlipOrder::descending;
    if (name == "ascending") return FlipOrder::ascending;
    throw std::invalid_argument("unknown flip order '" + std::string(name) + "'");
}

void PerturbConfig::validate() const {
    check_keep_prob(p, "PerturbConfig");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("PerturbConfig: sigma must be finite and >= 0");
    }
}

bool PerturbConfig::is_identity() const {
    switch (strategy) {
        case Strategy::none:
            return true;
        case Strategy::gaussian:
        case Strategy::adversarial:
        case Strategy::gaussian_adv:
            return sigma == 0.0;
        case Strategy::bernoulli:
        case Strategy::word_dropout:
        case Strategy::semantic_dropout:
        case Strategy::bernoulli_adv:
            return p == 1.0;
    }
    return false;
}

NoiseMask ones_mask(std::size_t l, std::size_t d) { return {Matrix(l, d, 1.0), MaskKind::continuous, std::nullopt}; }

NoiseMask gaussian_mask(std::size_t l, std::size_t d, double sigma, Rng& rng) {
    if (l < 1 || d < 1) throw std::invalid_argument("gaussian_mask: l and d must be >= 1");
    if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_mask: sigma must be >= 0");
    NoiseMask mask = ones_mask(l, d);
    if (sigma == 0.0) return mask;
    std::normal_distribution<double> dist(1.0, sigma);
    for (double& v : mask.values.values()) v = dist(rng);
    return mask;
}

NoiseMask bernoulli_mask(std::size_t l, std::size_t d, double p, Rng& rng) {
    if (l < 1 || d < 1) throw std::invalid_argument("bernoulli_mask: l and d must be >= 1");
    check_keep_prob(p, "bernoulli_mask");
    NoiseMask mask{Matrix(l, d, 1.0), MaskKind::binary, p};
    if (p == 1.0) return mask;
    std::bernoulli_distribution keep(p);
    for (double& v : mask.values.values()) v = keep(rng) ? 1.0 : 0.0;
    return mask;
}

NoiseMask semantic_mask(std::size_t l, std::size_t d, double p, Rng& rng) {
    if (l < 1 || d < 1) throw std::invalid_argument("semantic_mask: l and d must be >= 1");
    check_keep_prob(p, "semantic_mask");
    NoiseMask mask{Matrix(l, d, 1.0), MaskKind::binary, p};
    if (p == 1.0) return mask;
    std::bernoulli_distribution keep(p);
    for (std::size_t j = 0; j < d; ++j) {
        if (keep(rng)) continue;
        for (std::size_t i = 0; i < l; ++i) mask.values(i, j) = 0.0;
    }
    return mask;
}

std::vector<TokenId> word_dropout(std::span<const TokenId> tokens, double p, Rng& rng) {
    check_keep_prob(p, "word_dropout");
    std::vector<TokenId> out(tokens.begin(), tokens.end());
    if (p == 1.0) return out;
    std::bernoulli_distribution keep(p);
    for (auto& t : out) {
        if (!keep(rng)) t = kUnk;
    }
    return out;
}

NoiseMask adversarial_step(const NoiseMask& mask, const Matrix& grad_e, double sigma) {
    check_same_shape(mask.values, grad_e, "adversarial_step");
    if (!(sigma >= 0.0)) throw std::invalid_argument("adversarial_step: sigma must be >= 0");
    if (!all_finite(grad_e.values())) throw std::domain_error("adversarial_step: non-finite gradient");
    const double norm = frobenius_norm(grad_e);
    NoiseMask out = mask;
    if (norm == 0.0 || sigma == 0.0) return out;
    const double step = sigma / norm;
    auto e = out.values.values();
    auto g = grad_e.values();
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += step * g[i];
    return out;
}

std::size_t flip_budget(std::size_t l, std::size_t d, double p) {
    check_keep_prob(p, "flip_budget");
    // 1 - p is inexact for most p (0.9 gives 0.0999...98); the slack keeps
    // exact products such as 10 * 300 * 0.1 from flooring one short.
    const double raw = static_cast<double>(l) * static_cast<double>(d) * (1.0 - p);
    return static_cast<std::size_t>(std::floor(raw + 1e-9));
}

NoiseMask adversarial_dropout(const NoiseMask& mask, const Matrix& grad_e, std::size_t budget, FlipOrder order) {
    check_same_shape(mask.values, grad_e, "adversarial_dropout");
    if (mask.kind != MaskKind::binary) throw std::invalid_argument("adversarial_dropout: mask must be binary");
    NoiseMask out = mask;
    if (budget == 0) return out;

    auto g = grad_e.values();
    std::vector<std::size_t> order_idx(g.size());
    std::iota(order_idx.begin(), order_idx.end(), std::size_t{0});
    if (order == FlipOrder::descending) {
        std::stable_sort(order_idx.begin(), order_idx.end(),
                         [&](std::size_t a, std::size_t b) { return std::abs(g[a]) > std::abs(g[b]); });
    } else {
        std::stable_sort(order_idx.begin(), order_idx.end(),
                         [&](std::size_t a, std::size_t b) { return std::abs(g[a]) < std::abs(g[b]); });
    }

    auto e = out.values.values();
    std::size_t flips = 0;
    for (std::size_t idx : order_idx) {
        if (flips == budget) break;
        if (e[idx] == 1.0 && g[idx] < 0.0) {
            e[idx] = 0.0;
            ++flips;
        } else if (e[idx] == 0.0 && g[idx] > 0.0) {
            e[idx] = 1.0;
            ++flips;
        }
    }
    return out;
}

NoiseMask adversarial_dropout(const NoiseMask& mask, const Matrix& grad_e, double p, FlipOrder order) {
    return adversarial_dropout(mask, grad_e, flip_budget(mask.values.rows(), mask.values.cols(), p), order);
}

Matrix apply_mask(const EmbeddedSequence& x, const NoiseMask& mask) {
    check_same_shape(x.values, mask.values, "apply_mask");
    return scaled(hadamard(x.values, mask.values), mask.scale());
}

Matrix grad_wrt_mask(const EmbeddedSequence& x, const Matrix& grad_input, double scale) {
    check_same_shape(x.values, grad_input, "grad_wrt_mask");
    return scaled(hadamard(grad_input, x.values), scale);
}

Matrix grad_wrt_embedding(const Matrix& multiplier, const Matrix& grad_input) {
    check_same_shape(multiplier, grad_input, "grad_wrt_embedding");
    return hadamard(multiplier, grad_input);
}

Perturbation make_perturbation(const PerturbConfig& cfg, const EmbeddingMatrix& emb, std::span<const TokenId> tokens,
                               const InputGradFn& input_grad, Rng& rng) {
    cfg.validate();
    EmbeddedSequence x = lookup(emb, tokens);
    const std::size_t l = x.length();
    const std::size_t d = x.dim();

    auto from_mask = [&](const NoiseMask& mask) {
        return Perturbation{x.token_indices, apply_mask(x, mask), scaled(mask.values, mask.scale())};
    };

    if (cfg.is_identity()) return {x.token_indices, x.values, Matrix(l, d, 1.0)};

    switch (cfg.strategy) {
        case Strategy::none:
            break;
        case Strategy::gaussian:
            return from_mask(gaussian_mask(l, d, cfg.sigma, rng));
        case Strategy::bernoulli:
            return from_mask(bernoulli_mask(l, d, cfg.p, rng));
        case Strategy::semantic_dropout:
            return from_mask(semantic_mask(l, d, cfg.p, rng));
        case Strategy::word_dropout: {
            auto dropped = word_dropout(tokens, cfg.p, rng);
            EmbeddedSequence xd = lookup(emb, dropped);
            return {std::move(dropped), xd.values, Matrix(l, d, 1.0)};
        }
        case Strategy::adversarial:
        case Strategy::gaussian_adv: {
            NoiseMask e = cfg.strategy == Strategy::adversarial ? ones_mask(l, d) : gaussian_mask(l, d, cfg.sigma, rng);
            Matrix g = grad_wrt_mask(x, input_grad(apply_mask(x, e)), e.scale());
            return from_mask(adversarial_step(e, g, cfg.sigma));
        }
        case Strategy::bernoulli_adv: {
            NoiseMask e = bernoulli_mask(l, d, cfg.p, rng);
            Matrix g = grad_wrt_mask(x, input_grad(apply_mask(x, e)), e.scale());
            return from_mask(adversarial_dropout(e, g, cfg.p, cfg.flip_order));
        }
    }
    return {x.token_indices, x.values, Matrix(l, d, 1.0)};
}

}  // namespace perturb_lab

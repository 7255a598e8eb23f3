#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perturb_lab/embed.hpp"
#include "perturb_lab/matrix.hpp"
#include "perturb_lab/rng.hpp"

namespace perturb_lab {

enum class Strategy {
    none,
    gaussian,
    bernoulli,
    adversarial,
    word_dropout,
    semantic_dropout,
    gaussian_adv,
    bernoulli_adv,
};

inline constexpr std::array kAllStrategies = {
    Strategy::none,         Strategy::gaussian,         Strategy::bernoulli,    Strategy::adversarial,
    Strategy::word_dropout, Strategy::semantic_dropout, Strategy::gaussian_adv, Strategy::bernoulli_adv,
};

std::string_view to_string(Strategy s);
/// Throws std::invalid_argument for unknown names.
Strategy parse_strategy(std::string_view name);

/// Whether the strategy reads p / sigma at all.
bool uses_keep_prob(Strategy s);
bool uses_sigma(Strategy s);

enum class FlipOrder { descending, ascending };

std::string_view to_string(FlipOrder order);
FlipOrder parse_flip_order(std::string_view name);

struct PerturbConfig {
    Strategy strategy = Strategy::none;
    double p = 1.0;      // keep probability, (0, 1]
    double sigma = 0.0;  // noise std / adversarial step size, >= 0
    FlipOrder flip_order = FlipOrder::descending;

    /// Throws std::invalid_argument when p or sigma is out of range.
    void validate() const;

    /// True when this configuration provably leaves every input unchanged,
    /// in which case no randomness is consumed.
    bool is_identity() const;

    friend bool operator==(const PerturbConfig&, const PerturbConfig&) = default;
};

enum class MaskKind { continuous, binary };

/// Multiplicative l x d mask. Binary masks are applied with scale 1/keep_prob.
struct NoiseMask {
    Matrix values;
    MaskKind kind = MaskKind::continuous;
    std::optional<double> keep_prob;

    double scale() const { return kind == MaskKind::binary ? 1.0 / *keep_prob : 1.0; }
};

NoiseMask ones_mask(std::size_t l, std::size_t d);

/// Entries i.i.d. Normal(1, sigma^2).
NoiseMask gaussian_mask(std::size_t l, std::size_t d, double sigma, Rng& rng);

/// Entries i.i.d. Bernoulli(p), applied with scale 1/p.
NoiseMask bernoulli_mask(std::size_t l, std::size_t d, double p, Rng& rng);

/// One Bernoulli(p) decision per embedding dimension, shared by every row.
NoiseMask semantic_mask(std::size_t l, std::size_t d, double p, Rng& rng);

/// Each index kept with probability p, otherwise replaced by UNK. No rescaling.
std::vector<TokenId> word_dropout(std::span<const TokenId> tokens, double p, Rng& rng);

/// e + sigma * g / ||g||_F. Returns the mask unchanged when ||g||_F == 0.
NoiseMask adversarial_step(const NoiseMask& mask, const Matrix& grad_e, double sigma);

/// floor(l * d * (1 - p)).
std::size_t flip_budget(std::size_t l, std::size_t d, double p);

/// Binary adversarial step: visits units by |g| in `order` and flips 1->0
/// where g < 0 and 0->1 where g > 0, stopping after `budget` flips.
NoiseMask adversarial_dropout(const NoiseMask& mask, const Matrix& grad_e, std::size_t budget, FlipOrder order);
NoiseMask adversarial_dropout(const NoiseMask& mask, const Matrix& grad_e, double p, FlipOrder order);

/// X (.) e, times 1/p for binary masks.
Matrix apply_mask(const EmbeddedSequence& x, const NoiseMask& mask);

/// dL/de given dL/d(perturbed input): scale * grad_input (.) X.
Matrix grad_wrt_mask(const EmbeddedSequence& x, const Matrix& grad_input, double scale = 1.0);

/// dL/dX for perturbed = multiplier (.) X, holding the mask fixed.
Matrix grad_wrt_embedding(const Matrix& multiplier, const Matrix& grad_input);

/// Returns dL/d(input) for the given perturbed input matrix.
using InputGradFn = std::function<Matrix(const Matrix& perturbed_input)>;

struct Perturbation {
    std::vector<TokenId> tokens;  // after word dropout; equal to the input otherwise
    Matrix values;                // perturbed l x d input
    Matrix multiplier;            // values == multiplier (.) lookup(tokens)
};

/// Applies the configured strategy to one training sequence.
Perturbation make_perturbation(const PerturbConfig& cfg, const EmbeddingMatrix& emb, std::span<const TokenId> tokens,
                               const InputGradFn& input_grad, Rng& rng);

}  // namespace perturb_lab

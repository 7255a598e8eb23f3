#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perturb_lab/matrix.hpp"

namespace perturb_lab {

enum class Architecture { meanpool_linear, conv_maxpool };

std::string_view to_string(Architecture arch);
/// Accepts "meanpool"/"meanpool_linear" and "conv"/"conv_maxpool".
Architecture parse_architecture(std::string_view name);

struct ModelShape {
    Architecture arch = Architecture::meanpool_linear;
    std::size_t dim = 0;          // embedding width d
    std::size_t num_classes = 2;  // C
    std::size_t filters = 8;      // F (conv only)
    std::size_t width = 3;        // w (conv only)

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Classifier weights.
///
/// meanpool_linear: logits = out_weights^T * mean_rows(X) + out_bias, with
/// out_weights d x C.
///
/// conv_maxpool: filter f produces tanh(<kernels[f], window_t> + kernel_bias[f])
/// at each window position t; the activations are max-pooled over t and fed to
/// the output layer, out_weights F x C. Inputs shorter than the filter width
/// are zero padded.
struct ClassifierParams {
    ModelShape shape;
    Matrix out_weights;
    std::vector<double> out_bias;
    Matrix kernels;                   // F x (w * d), window rows concatenated
    std::vector<double> kernel_bias;  // F

    /// Zero-valued parameters of the given shape.
    static ClassifierParams zeros(const ModelShape& shape);

    /// Visits every parameter array as (name, values). Order is fixed.
    void for_each_array(const std::function<void(std::string_view, std::span<double>)>& fn);
    void for_each_array(const std::function<void(std::string_view, std::span<const double>)>& fn) const;

    std::size_t parameter_count() const;

    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

/// Weights uniform in +-scale, biases zero.
ClassifierParams init_params(const ModelShape& shape, double scale, std::uint64_t seed);

struct ForwardTrace {
    std::vector<double> pooled;
    std::vector<double> logits;
    Matrix activations;                // conv: positions x F tanh outputs
    std::vector<std::size_t> argmax;   // conv: winning position per filter
    std::size_t input_rows = 0;        // l before padding
};

struct ForwardResult {
    std::vector<double> logits;
    ForwardTrace trace;
};

ForwardResult forward(const ClassifierParams& params, const Matrix& x);

std::vector<double> softmax(std::span<const double> logits);

/// Cross-entropy -log softmax(logits)[label].
double loss(std::span<const double> logits, std::size_t label);

struct Gradients {
    ClassifierParams params;  // same layout as the model, holding dL/dtheta
    Matrix input;             // dL/dX, l x d
};

Gradients backward(const ClassifierParams& params, const Matrix& x, std::size_t label, const ForwardTrace& trace);

/// Argmax of logits, lowest index on ties.
std::size_t argmax(std::span<const double> logits);
std::size_t predict(const ClassifierParams& params, const Matrix& x);

/// params += alpha * delta, arraywise.
void axpy(ClassifierParams& params, const ClassifierParams& delta, double alpha);

// Checkpoints: versioned text container holding the shape header followed by
// one `array <name> <count>` record per parameter array.
inline constexpr std::string_view kCheckpointMagic = "perturb-lab-checkpoint";
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const ClassifierParams& params, const std::filesystem::path& path);
ClassifierParams load_checkpoint(const std::filesystem::path& path);

}  // namespace perturb_lab

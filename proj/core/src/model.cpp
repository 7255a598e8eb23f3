#include "perturb_lab/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "perturb_lab/error.hpp"
#include "perturb_lab/rng.hpp"

namespace perturb_lab {

std::string_view to_string(Architecture arch) {
    return arch == Architecture::meanpool_linear ? "meanpool_linear" : "conv_maxpool";
}

Architecture parse_architecture(std::string_view name) {
    if (name == "meanpool" || name == "meanpool_linear") return Architecture::meanpool_linear;
    if (name == "conv" || name == "conv_maxpool") return Architecture::conv_maxpool;
    throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

ClassifierParams ClassifierParams::zeros(const ModelShape& shape) {
    if (shape.dim < 1 || shape.num_classes < 2) throw std::invalid_argument("ClassifierParams: need d >= 1, C >= 2");
    ClassifierParams p;
    p.shape = shape;
    p.out_bias.assign(shape.num_classes, 0.0);
    if (shape.arch == Architecture::meanpool_linear) {
        p.out_weights = Matrix(shape.dim, shape.num_classes);
    } else {
        if (shape.filters < 1 || shape.width < 1) throw std::invalid_argument("ClassifierParams: need F, w >= 1");
        p.kernels = Matrix(shape.filters, shape.width * shape.dim);
        p.kernel_bias.assign(shape.filters, 0.0);
        p.out_weights = Matrix(shape.filters, shape.num_classes);
    }
    return p;
}

void ClassifierParams::for_each_array(const std::function<void(std::string_view, std::span<double>)>& fn) {
    if (shape.arch == Architecture::conv_maxpool) {
        fn("kernels", kernels.values());
        fn("kernel_bias", kernel_bias);
    }
    fn("out_weights", out_weights.values());
    fn("out_bias", out_bias);
}

void ClassifierParams::for_each_array(
    const std::function<void(std::string_view, std::span<const double>)>& fn) const {
    if (shape.arch == Architecture::conv_maxpool) {
        fn("kernels", kernels.values());
        fn("kernel_bias", kernel_bias);
    }
    fn("out_weights", out_weights.values());
    fn("out_bias", out_bias);
}

std::size_t ClassifierParams::parameter_count() const {
    std::size_t n = 0;
    for_each_array([&](std::string_view, std::span<const double> v) { n += v.size(); });
    return n;
}

ClassifierParams init_params(const ModelShape& shape, double scale, std::uint64_t seed) {
    auto params = ClassifierParams::zeros(shape);
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& v : params.out_weights.values()) v = dist(rng);
    for (double& v : params.kernels.values()) v = dist(rng);
    return params;
}

namespace {

void check_input(const ClassifierParams& params, const Matrix& x) {
    if (x.rows() < 1) throw std::invalid_argument("forward: empty input");
    if (x.cols() != params.shape.dim) {
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                                    std::to_string(params.shape.dim));
    }
    if (!all_finite(x.values())) throw std::domain_error("forward: non-finite input");
}

// Row r of x, or zero padding beyond the input.
double padded(const Matrix& x, std::size_t r, std::size_t c) { return r < x.rows() ? x(r, c) : 0.0; }

}  // namespace

ForwardResult forward(const ClassifierParams& params, const Matrix& x) {
    check_input(params, x);
    const auto& shape = params.shape;
    const std::size_t d = shape.dim;
    const std::size_t C = shape.num_classes;
    ForwardTrace trace;
    trace.input_rows = x.rows();

    if (shape.arch == Architecture::meanpool_linear) {
        trace.pooled.assign(d, 0.0);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < d; ++j) trace.pooled[j] += x(i, j);
        }
        for (double& v : trace.pooled) v /= static_cast<double>(x.rows());
    } else {
        const std::size_t F = shape.filters;
        const std::size_t w = shape.width;
        const std::size_t positions = std::max(x.rows(), w) - w + 1;
        trace.activations = Matrix(positions, F);
        trace.pooled.assign(F, 0.0);
        trace.argmax.assign(F, 0);
        for (std::size_t f = 0; f < F; ++f) {
            auto kernel = params.kernels.row(f);
            for (std::size_t t = 0; t < positions; ++t) {
                double a = params.kernel_bias[f];
                for (std::size_t k = 0; k < w; ++k) {
                    if (t + k >= x.rows()) break;
                    for (std::size_t j = 0; j < d; ++j) a += kernel[k * d + j] * x(t + k, j);
                }
                const double h = std::tanh(a);
                trace.activations(t, f) = h;
                if (t == 0 || h > trace.pooled[f]) {
                    trace.pooled[f] = h;
                    trace.argmax[f] = t;
                }
            }
        }
    }

    trace.logits = params.out_bias;
    for (std::size_t j = 0; j < trace.pooled.size(); ++j) {
        for (std::size_t c = 0; c < C; ++c) trace.logits[c] += params.out_weights(j, c) * trace.pooled[j];
    }
    ForwardResult result{trace.logits, std::move(trace)};
    return result;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = std::exp(logits[c] - m);
        z += out[c];
    }
    for (double& v : out) v /= z;
    return out;
}

double loss(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) throw std::out_of_range("loss: label out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return std::log(z) - (logits[label] - m);
}

Gradients backward(const ClassifierParams& params, const Matrix& x, std::size_t label, const ForwardTrace& trace) {
    const auto& shape = params.shape;
    const std::size_t d = shape.dim;
    const std::size_t C = shape.num_classes;
    if (label >= C) throw std::out_of_range("backward: label out of range");
    if (trace.input_rows != x.rows()) throw std::invalid_argument("backward: trace does not match input");

    Gradients grads{ClassifierParams::zeros(shape), Matrix(x.rows(), d)};
    auto dlogits = softmax(trace.logits);
    dlogits[label] -= 1.0;

    grads.params.out_bias = dlogits;
    std::vector<double> dpooled(trace.pooled.size(), 0.0);
    for (std::size_t j = 0; j < trace.pooled.size(); ++j) {
        for (std::size_t c = 0; c < C; ++c) {
            grads.params.out_weights(j, c) = trace.pooled[j] * dlogits[c];
            dpooled[j] += params.out_weights(j, c) * dlogits[c];
        }
    }

    if (shape.arch == Architecture::meanpool_linear) {
        const double inv_l = 1.0 / static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < d; ++j) grads.input(i, j) = dpooled[j] * inv_l;
        }
        return grads;
    }

    const std::size_t w = shape.width;
    for (std::size_t f = 0; f < shape.filters; ++f) {
        const std::size_t t = trace.argmax[f];
        const double h = trace.activations(t, f);
        const double da = dpooled[f] * (1.0 - h * h);
        grads.params.kernel_bias[f] = da;
        auto kernel = params.kernels.row(f);
        auto dkernel = grads.params.kernels.row(f);
        for (std::size_t k = 0; k < w; ++k) {
            for (std::size_t j = 0; j < d; ++j) {
                dkernel[k * d + j] = da * padded(x, t + k, j);
                if (t + k < x.rows()) grads.input(t + k, j) += da * kernel[k * d + j];
            }
        }
    }
    return grads;
}

std::size_t argmax(std::span<const double> logits) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
        if (logits[c] > logits[best]) best = c;
    }
    return best;
}

std::size_t predict(const ClassifierParams& params, const Matrix& x) { return argmax(forward(params, x).logits); }

void axpy(ClassifierParams& params, const ClassifierParams& delta, double alpha) {
    std::vector<std::span<const double>> src;
    delta.for_each_array([&](std::string_view, std::span<const double> v) { src.push_back(v); });
    std::size_t k = 0;
    params.for_each_array([&](std::string_view name, std::span<double> dst) {
        if (k >= src.size() || src[k].size() != dst.size()) {
            throw std::invalid_argument("axpy: layout mismatch at " + std::string(name));
        }
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[k][i];
        ++k;
    });
}

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

void save_checkpoint(const ClassifierParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    const auto& s = params.shape;
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n'
        << "arch " << to_string(s.arch) << '\n'
        << "dim " << s.dim << '\n'
        << "classes " << s.num_classes << '\n'
        << "filters " << s.filters << '\n'
        << "width " << s.width << '\n';
    params.for_each_array([&](std::string_view name, std::span<const double> values) {
        out << "array " << name << ' ' << values.size() << '\n';
        for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << format_double(values[i]);
        out << '\n';
    });
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ClassifierParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    const std::string src = path.string();
    std::size_t line_no = 0;
    std::string line;
    auto next_line = [&]() -> std::istringstream {
        if (!std::getline(in, line)) throw ParseError(src, line_no + 1, "unexpected end of file");
        ++line_no;
        return std::istringstream(line);
    };

    {
        auto ss = next_line();
        std::string magic;
        int version = 0;
        ss >> magic >> version;
        if (magic != kCheckpointMagic) throw ParseError(src, line_no, "not a checkpoint file");
        if (version != kCheckpointVersion) {
            throw ParseError(src, line_no, "unsupported checkpoint version " + std::to_string(version));
        }
    }
    auto field = [&](std::string_view key) {
        auto ss = next_line();
        std::string name, value;
        ss >> name >> value;
        if (name != key) throw ParseError(src, line_no, "expected '" + std::string(key) + "'");
        return value;
    };

    ModelShape shape;
    try {
        shape.arch = parse_architecture(field("arch"));
        shape.dim = std::stoul(field("dim"));
        shape.num_classes = std::stoul(field("classes"));
        shape.filters = std::stoul(field("filters"));
        shape.width = std::stoul(field("width"));
    } catch (const std::invalid_argument& e) {
        throw ParseError(src, line_no, e.what());
    }

    auto params = ClassifierParams::zeros(shape);
    params.for_each_array([&](std::string_view expected, std::span<double> dst) {
        auto header = next_line();
        std::string tag, name;
        std::size_t count = 0;
        header >> tag >> name >> count;
        if (tag != "array" || name != expected || count != dst.size()) {
            throw ParseError(src, line_no, "expected array " + std::string(expected) + " of " +
                                               std::to_string(dst.size()) + " values");
        }
        auto body = next_line();
        for (std::size_t i = 0; i < count; ++i) {
            std::string tok;
            if (!(body >> tok)) throw ParseError(src, line_no, "too few values for " + name);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                throw ParseError(src, line_no, "bad value '" + tok + "'");
            }
            dst[i] = v;
        }
    });
    return params;
}

}  // namespace perturb_lab

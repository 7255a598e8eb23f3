#include "perturb_lab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "perturb_lab/model.hpp"
#include "perturb_lab/perturb.hpp"
#include "perturb_lab/rng.hpp"

namespace perturb_lab::verify {

namespace {

constexpr double kStep = 1e-4;
constexpr double kGradTolerance = 1e-5;
// Denominator floor for relative error; gradients below it are compared absolutely.
constexpr double kRelativeFloor = 1e-4;

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
}

std::string sci(double v) {
    std::ostringstream out;
    out.precision(3);
    out << std::scientific << v;
    return out.str();
}

std::string format_sigma(double sigma) {
    std::ostringstream out;
    out << sigma;
    return out.str();
}

Matrix random_matrix(std::size_t r, std::size_t c, double scale, Rng& rng) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Matrix m(r, c);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

struct Instance {
    ClassifierParams params;
    Matrix x;
    std::size_t label = 0;
};

// Smallest gap between the winning and runner-up pre-activation of any filter.
double maxpool_margin(const ClassifierParams& params, const Matrix& x) {
    if (params.shape.arch != Architecture::conv_maxpool) return 1.0;
    auto trace = forward(params, x).trace;
    double margin = 1.0;
    for (std::size_t f = 0; f < params.shape.filters; ++f) {
        double top = -2.0, second = -2.0;
        for (std::size_t t = 0; t < trace.activations.rows(); ++t) {
            double a = std::atanh(std::clamp(trace.activations(t, f), -1.0 + 1e-15, 1.0 - 1e-15));
            if (a > top) {
                second = top;
                top = a;
            } else if (a > second) {
                second = a;
            }
        }
        if (trace.activations.rows() > 1) margin = std::min(margin, top - second);
    }
    return margin;
}

Instance random_instance(Architecture arch, Rng& rng) {
    std::uniform_int_distribution<std::size_t> l_dist(1, 5), d_dist(1, 6), c_dist(2, 3), f_dist(1, 3), w_dist(1, 3);
    for (;;) {
        ModelShape shape{arch, d_dist(rng), c_dist(rng), f_dist(rng), w_dist(rng)};
        auto params = init_params(shape, 0.8, rng());
        for (double& b : params.out_bias) b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        for (double& b : params.kernel_bias) b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        Matrix x = random_matrix(l_dist(rng), shape.dim, 1.0, rng);
        std::size_t label = std::uniform_int_distribution<std::size_t>(0, shape.num_classes - 1)(rng);
        if (maxpool_margin(params, x) > 1e-2) return {std::move(params), std::move(x), label};
    }
}

double loss_at(const ClassifierParams& params, const Matrix& x, std::size_t label) {
    return loss(forward(params, x).logits, label);
}

// Central difference of f with respect to `slot`.
template <typename F>
double central_difference(double& slot, F&& f) {
    const double saved = slot;
    slot = saved + kStep;
    const double up = f();
    slot = saved - kStep;
    const double down = f();
    slot = saved;
    return (up - down) / (2.0 * kStep);
}

double model_gradient_error(Instance inst) {
    auto trace = forward(inst.params, inst.x).trace;
    auto grads = backward(inst.params, inst.x, inst.label, trace);
    double worst = 0.0;

    std::vector<std::span<const double>> analytic;
    grads.params.for_each_array([&](std::string_view, std::span<const double> v) { analytic.push_back(v); });
    std::size_t a = 0;
    inst.params.for_each_array([&](std::string_view, std::span<double> values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            double numeric = central_difference(values[i], [&] { return loss_at(inst.params, inst.x, inst.label); });
            worst = std::max(worst, relative_error(analytic[a][i], numeric));
        }
        ++a;
    });
    auto xs = inst.x.values();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double numeric = central_difference(xs[i], [&] { return loss_at(inst.params, inst.x, inst.label); });
        worst = std::max(worst, relative_error(grads.input.values()[i], numeric));
    }
    return worst;
}

double mask_gradient_error(const Instance& inst, NoiseMask mask, const Hooks& hooks) {
    EmbeddedSequence seq{inst.x, std::vector<TokenId>(inst.x.rows(), 0)};
    Matrix z = apply_mask(seq, mask);
    auto grads = backward(inst.params, z, inst.label, forward(inst.params, z).trace);
    Matrix analytic = hooks.grad_wrt_mask(seq, grads.input, mask.scale());
    double worst = 0.0;
    auto e = mask.values.values();
    for (std::size_t i = 0; i < e.size(); ++i) {
        double numeric =
            central_difference(e[i], [&] { return loss_at(inst.params, apply_mask(seq, mask), inst.label); });
        worst = std::max(worst, relative_error(analytic.values()[i], numeric));
    }
    return worst;
}

void add(Report& report, std::string group, std::string name, std::string tolerance, bool passed,
         std::string detail) {
    report.checks.push_back({std::move(group), std::move(name), std::move(tolerance), passed, std::move(detail)});
}

void check_model_gradients(Report& report, Architecture arch, std::size_t instances) {
    Rng rng(arch == Architecture::meanpool_linear ? 101 : 202);
    double worst = 0.0;
    for (std::size_t n = 0; n < instances; ++n) worst = std::max(worst, model_gradient_error(random_instance(arch, rng)));
    add(report, arch == Architecture::meanpool_linear ? "gradient_meanpool" : "gradient_conv",
        std::to_string(instances) + " random instances, params and input vs central differences",
        "max rel err < 1e-5 (h=1e-4)", worst < kGradTolerance, "max rel err " + sci(worst));
}

void check_mask_gradient(Report& report, const Hooks& hooks) {
    Rng rng(303);
    double worst = 0.0;
    for (std::size_t n = 0; n < 40; ++n) {
        auto arch = n % 2 ? Architecture::conv_maxpool : Architecture::meanpool_linear;
        auto inst = random_instance(arch, rng);
        const std::size_t l = inst.x.rows(), d = inst.x.cols();
        NoiseMask mask = n % 4 < 2 ? gaussian_mask(l, d, 0.1, rng) : bernoulli_mask(l, d, 0.8, rng);
        if (maxpool_margin(inst.params, apply_mask({inst.x, {}}, mask)) <= 1e-2) continue;
        worst = std::max(worst, mask_gradient_error(inst, mask, hooks));
    }
    add(report, "mask_gradient", "grad_wrt_mask vs central differences in e (Gaussian and 1/p-scaled Bernoulli)",
        "max rel err < 1e-5 (h=1e-4)", worst < kGradTolerance, "max rel err " + sci(worst));
}

void check_mask_statistics(Report& report) {
    constexpr std::size_t kEntries = 100000;
    Rng rng(404);
    for (double p : {0.7, 0.8, 0.9, 0.95}) {
        const double se = std::sqrt((1.0 - p) / p / static_cast<double>(kEntries));
        auto bern = bernoulli_mask(kEntries / 100, 100, p, rng);
        double sum = 0.0;
        for (double v : bern.values.values()) sum += v * bern.scale();
        const double mean_b = sum / kEntries;

        // Semantic masks: columns are the independent units.
        double sum_s = 0.0;
        std::size_t units = 0;
        while (units < kEntries) {
            auto sem = semantic_mask(3, 100, p, rng);
            for (std::size_t j = 0; j < 100; ++j) sum_s += sem.values(0, j) * sem.scale();
            units += 100;
        }
        const double mean_s = sum_s / static_cast<double>(units);
        add(report, "mask_statistics", "applied Bernoulli/semantic mask mean, p=" + std::to_string(p).substr(0, 4),
            "|mean - 1| <= 3 SE", std::abs(mean_b - 1.0) <= 3 * se && std::abs(mean_s - 1.0) <= 3 * se,
            "bernoulli " + std::to_string(mean_b) + ", semantic " + std::to_string(mean_s) + ", SE " + sci(se));
    }
    for (double sigma : {0.001, 0.01, 0.1}) {
        auto g = gaussian_mask(kEntries / 100, 100, sigma, rng);
        double sum = 0.0, sq = 0.0;
        for (double v : g.values.values()) sum += v;
        const double mean = sum / kEntries;
        for (double v : g.values.values()) sq += (v - mean) * (v - mean);
        const double var = sq / (kEntries - 1);
        const double se = sigma / std::sqrt(static_cast<double>(kEntries));
        add(report, "mask_statistics", "Gaussian mask moments, sigma=" + format_sigma(sigma),
            "|mean - 1| <= 3 SE, |var/sigma^2 - 1| <= 0.1",
            std::abs(mean - 1.0) <= 3 * se && std::abs(var / (sigma * sigma) - 1.0) <= 0.1,
            "mean " + std::to_string(mean) + ", var ratio " + std::to_string(var / (sigma * sigma)));
    }
}

void check_adversarial_step(Report& report) {
    Rng rng(505);
    std::uniform_int_distribution<std::size_t> dim(1, 12);
    std::uniform_real_distribution<double> sig(0.0, 1.0);
    double worst = 0.0;
    for (std::size_t n = 0; n < 1000; ++n) {
        const std::size_t l = dim(rng), d = dim(rng);
        NoiseMask e = gaussian_mask(l, d, 0.1, rng);
        Matrix g = random_matrix(l, d, 1.0, rng);
        const double sigma = sig(rng);
        auto stepped = adversarial_step(e, g, sigma);
        Matrix delta(l, d);
        for (std::size_t i = 0; i < delta.size(); ++i) delta.values()[i] = stepped.values.values()[i] - e.values.values()[i];
        worst = std::max(worst, std::abs(frobenius_norm(delta) - sigma));
    }
    add(report, "adversarial_step", "||e' - e||_F == sigma on 1000 random nonzero gradients", "abs err <= 1e-12",
        worst <= 1e-12, "max abs err " + sci(worst));

    NoiseMask e = gaussian_mask(4, 5, 0.1, rng);
    auto unchanged = adversarial_step(e, Matrix(4, 5), 0.5);
    add(report, "adversarial_step", "zero gradient leaves the mask unchanged", "exact",
        unchanged.values == e.values, "");
}

void check_first_order_ascent(Report& report, const Hooks& hooks) {
    Rng rng(606);
    std::size_t ascended = 0;
    constexpr std::size_t kTrials = 1000;
    for (std::size_t n = 0; n < kTrials; ++n) {
        auto inst = random_instance(n % 2 ? Architecture::conv_maxpool : Architecture::meanpool_linear, rng);
        EmbeddedSequence seq{inst.x, std::vector<TokenId>(inst.x.rows(), 0)};
        NoiseMask e = ones_mask(inst.x.rows(), inst.x.cols());
        const double clean = loss_at(inst.params, inst.x, inst.label);
        auto grads = backward(inst.params, inst.x, inst.label, forward(inst.params, inst.x).trace);
        auto stepped = adversarial_step(e, hooks.grad_wrt_mask(seq, grads.input, 1.0), 0.001);
        if (loss_at(inst.params, apply_mask(seq, stepped), inst.label) >= clean) ++ascended;
    }
    const double rate = static_cast<double>(ascended) / kTrials;
    add(report, "first_order_ascent", "loss after one adversarial step (sigma=0.001) >= clean loss",
        ">= 95% of 1000 trials", rate >= 0.95, "rate " + std::to_string(rate));
}

void check_adversarial_dropout(Report& report) {
    Rng rng(707);
    std::uniform_int_distribution<std::size_t> l_dist(1, 10), d_dist(1, 20);
    bool budget_ok = true, sign_ok = true, binary_ok = true, greedy_ok = true;
    for (std::size_t n = 0; n < 500; ++n) {
        const double p = n % 2 ? 0.7 : 0.9;
        const std::size_t l = l_dist(rng), d = d_dist(rng);
        auto e = bernoulli_mask(l, d, p, rng);
        Matrix g = random_matrix(l, d, 1.0, rng);
        auto out = adversarial_dropout(e, g, p, FlipOrder::descending);
        std::size_t flips = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double before = e.values.values()[i], after = out.values.values()[i];
            if (after != 0.0 && after != 1.0) binary_ok = false;
            if (after != before) {
                ++flips;
                if ((after - before) * g.values()[i] <= 0.0) sign_ok = false;
            }
        }
        if (flips > flip_budget(l, d, p)) budget_ok = false;

        auto one = adversarial_dropout(e, g, std::size_t{1}, FlipOrder::descending);
        double best = -1.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double ev = e.values.values()[i], gv = g.values()[i];
            if ((ev == 1.0 && gv < 0.0) || (ev == 0.0 && gv > 0.0)) best = std::max(best, std::abs(gv));
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (one.values.values()[i] != e.values.values()[i] && std::abs(g.values()[i]) != best) greedy_ok = false;
        }
    }
    add(report, "adversarial_dropout", "flip count <= floor(l*d*(1-p))", "500 instances", budget_ok, "");
    add(report, "adversarial_dropout", "every flip increases first-order loss: sign(de)*g > 0", "500 instances",
        sign_ok, "");
    add(report, "adversarial_dropout", "output mask stays in {0,1}", "500 instances", binary_ok, "");
    add(report, "adversarial_dropout", "budget 1, descending: flipped unit has max |g| among eligible",
        "brute-force scan", greedy_ok, "");
}

void check_word_dropout(Report& report) {
    Rng rng(808);
    std::vector<TokenId> tokens(100000);
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<TokenId>(1 + i % 50);
    auto out = word_dropout(tokens, 0.9, rng);
    const double unk = static_cast<double>(std::count(out.begin(), out.end(), kUnk)) / static_cast<double>(out.size());
    add(report, "word_dropout", "UNK fraction at p=0.9 over 1e5 positions, length preserved", "0.1 +- 0.003",
        out.size() == tokens.size() && std::abs(unk - 0.1) <= 0.003, "UNK fraction " + std::to_string(unk));
}

}  // namespace

Hooks default_hooks() {
    return {[](const EmbeddedSequence& x, const Matrix& g, double scale) { return grad_wrt_mask(x, g, scale); }};
}

bool Report::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::size_t Report::group_count() const {
    std::set<std::string> groups;
    for (const auto& c : checks) groups.insert(c.group);
    return groups.size();
}

Report run_all(const Hooks& hooks) {
    Report report;
    check_model_gradients(report, Architecture::meanpool_linear, 100);
    check_model_gradients(report, Architecture::conv_maxpool, 100);
    check_mask_gradient(report, hooks);
    check_mask_statistics(report);
    check_adversarial_step(report);
    check_first_order_ascent(report, hooks);
    check_adversarial_dropout(report);
    check_word_dropout(report);
    return report;
}

void print(const Report& report, std::ostream& out) {
    for (const auto& c : report.checks) {
        out << (c.passed ? "PASS" : "FAIL") << "  [" << c.group << "] " << c.name << "  (" << c.tolerance << ")";
        if (!c.detail.empty()) out << "  " << c.detail;
        out << '\n';
    }
    const auto failed = std::count_if(report.checks.begin(), report.checks.end(), [](const auto& c) { return !c.passed; });
    out << report.checks.size() - static_cast<std::size_t>(failed) << "/" << report.checks.size() << " checks passed in "
        << report.group_count() << " groups\n";
}

int cmd_verify(std::ostream& out, const Hooks& hooks) {
    auto report = run_all(hooks);
    print(report, out);
    return report.all_passed() ? 0 : 1;
}

}  // namespace perturb_lab::verify

#include <benchmark/benchmark.h>

#include <random>

#include "perturb_lab/model.hpp"
#include "perturb_lab/perturb.hpp"

using namespace perturb_lab;

namespace {

Matrix random_input(std::size_t l, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix x(l, d);
    for (double& v : x.values()) v = u(rng);
    return x;
}

Architecture arch_of(const benchmark::State& state) {
    return state.range(0) == 0 ? Architecture::meanpool_linear : Architecture::conv_maxpool;
}

void BM_Forward(benchmark::State& state) {
    const auto params = init_params({arch_of(state), 32, 2, 8, 3}, 0.1, 1);
    const Matrix x = random_input(static_cast<std::size_t>(state.range(1)), 32, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward(params, x));
}
BENCHMARK(BM_Forward)->ArgsProduct({{0, 1}, {12, 48}});

void BM_ForwardBackward(benchmark::State& state) {
    const auto params = init_params({arch_of(state), 32, 2, 8, 3}, 0.1, 1);
    const Matrix x = random_input(static_cast<std::size_t>(state.range(1)), 32, 2);
    for (auto _ : state) {
        auto fr = forward(params, x);
        benchmark::DoNotOptimize(backward(params, x, 1, fr.trace));
    }
}
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{0, 1}, {12, 48}});

void BM_Mask(benchmark::State& state) {
    Rng rng(3);
    for (auto _ : state) {
        switch (state.range(0)) {
            case 0: benchmark::DoNotOptimize(gaussian_mask(12, 32, 0.1, rng)); break;
            case 1: benchmark::DoNotOptimize(bernoulli_mask(12, 32, 0.9, rng)); break;
            default: benchmark::DoNotOptimize(semantic_mask(12, 32, 0.9, rng)); break;
        }
    }
}
BENCHMARK(BM_Mask)->DenseRange(0, 2);

void BM_AdversarialDropout(benchmark::State& state) {
    const auto l = static_cast<std::size_t>(state.range(0));
    Rng rng(4);
    const auto mask = bernoulli_mask(l, 32, 0.9, rng);
    const Matrix g = random_input(l, 32, 5);
    for (auto _ : state) benchmark::DoNotOptimize(adversarial_dropout(mask, g, 0.9, FlipOrder::descending));
}
BENCHMARK(BM_AdversarialDropout)->Arg(12)->Arg(48);

void BM_MakePerturbation(benchmark::State& state) {
    const auto strategy = kAllStrategies[static_cast<std::size_t>(state.range(0))];
    const auto params = init_params({Architecture::conv_maxpool, 32, 2, 8, 3}, 0.1, 1);
    EmbeddingMatrix emb = init_random(200, 32, 0.25, 6);
    std::vector<TokenId> tokens(12);
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<TokenId>(1 + 13 * i % 199);
    InputGradFn grad = [&](const Matrix& z) { return backward(params, z, 0, forward(params, z).trace).input; };
    Rng rng(7);
    for (auto _ : state) benchmark::DoNotOptimize(make_perturbation({strategy, 0.9, 0.01}, emb, tokens, grad, rng));
    state.SetLabel(std::string(to_string(strategy)));
}
BENCHMARK(BM_MakePerturbation)->DenseRange(0, static_cast<int>(kAllStrategies.size()) - 1);

}  // namespace

BENCHMARK_MAIN();

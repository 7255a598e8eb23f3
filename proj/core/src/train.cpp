#include "perturb_lab/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "perturb_lab/error.hpp"
#include "perturb_lab/rng.hpp"

namespace perturb_lab {

namespace {

// Runs fn(0..n-1) on up to `threads` workers. Results must be written by
// index, so the outcome does not depend on scheduling. The exception from the
// lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto guarded = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) guarded(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) guarded(i);
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct PendingEmbeddingUpdate {
    std::vector<TokenId> tokens;
    Matrix grad;
};

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: lr must be finite and >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

double evaluate(const ClassifierParams& params, const EmbeddingMatrix& emb, const Dataset& dataset) {
    if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
    std::size_t correct = 0;
    for (const auto& ex : dataset.examples) {
        if (predict(params, lookup(emb, ex.tokens).values) == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

RunResult train_one(const Splits& data, const ClassifierParams& init, const EmbeddingMatrix& emb,
                    const PerturbConfig& perturb, const TrainConfig& cfg) {
    cfg.validate();
    perturb.validate();
    if (data.train.empty()) throw std::invalid_argument("train_one: empty training set");
    if (data.dev.empty()) throw std::invalid_argument("train_one: empty dev set");

    RunResult result;
    result.perturb = perturb;
    result.train = cfg;

    ClassifierParams params = init;
    EmbeddingMatrix embeddings = emb;
    Rng shuffle_rng(derive_seed(cfg.seed, stream::kShuffle));
    Rng noise_rng(derive_seed(cfg.seed, stream::kNoise));

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best_dev = -1.0;
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            ++step;
            auto accum = ClassifierParams::zeros(params.shape);
            std::vector<PendingEmbeddingUpdate> pending;

            try {
                for (std::size_t pos = start; pos < end; ++pos) {
                    const auto& ex = data.train.examples[order[pos]];
                    auto input_grad = [&](const Matrix& z) {
                        auto fr = forward(params, z);
                        return backward(params, z, ex.label, fr.trace).input;
                    };
                    auto pert = make_perturbation(perturb, embeddings, ex.tokens, input_grad, noise_rng);
                    auto fr = forward(params, pert.values);
                    const double l = loss(fr.logits, ex.label);
                    if (!std::isfinite(l)) throw DivergenceError(epoch, step);
                    loss_sum += l;
                    auto grads = backward(params, pert.values, ex.label, fr.trace);
                    axpy(accum, grads.params, 1.0);
                    if (embeddings.trainable) {
                        pending.push_back({std::move(pert.tokens), grad_wrt_embedding(pert.multiplier, grads.input)});
                    }
                }
            } catch (const std::domain_error&) {
                throw DivergenceError(epoch, step);
            }

            const double scale = cfg.lr / static_cast<double>(end - start);
            axpy(params, accum, -scale);
            for (const auto& update : pending) accumulate_update(embeddings, update.tokens, update.grad, scale);
        }

        const double dev = evaluate(params, embeddings, data.dev);
        result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), dev});
        if (dev > best_dev) {
            best_dev = dev;
            result.best_epoch = epoch;
            result.params = params;
            result.embeddings = embeddings;
        }
    }

    result.dev_metric = best_dev;
    if (!data.test.empty()) result.test_metric = evaluate(result.params, result.embeddings, data.test);
    return result;
}

RunResult run_seeded(const Splits& data, const PerturbConfig& perturb, const ExperimentSettings& settings,
                     std::uint64_t run_seed) {
    ModelShape shape = settings.model;
    if (shape.num_classes == 0) shape.num_classes = data.train.num_classes;

    EmbeddingMatrix emb;
    if (settings.pretrained) {
        emb = *settings.pretrained;
    } else {
        if (settings.vocab_size == 0) throw std::invalid_argument("run_seeded: vocab_size required");
        if (shape.dim == 0) throw std::invalid_argument("run_seeded: embedding dim required");
        emb = init_random(settings.vocab_size, shape.dim, settings.embedding_scale,
                          derive_seed(run_seed, stream::kEmbedding));
        emb.trainable = settings.train_embeddings;
    }
    shape.dim = emb.dim();

    auto init = init_params(shape, settings.init_scale, derive_seed(run_seed, stream::kInit));
    TrainConfig cfg = settings.train;
    cfg.seed = run_seed;
    return train_one(data, init, emb, perturb, cfg);
}

std::vector<PerturbConfig> grid_points(Strategy strategy, const Grid& grid, FlipOrder order) {
    std::vector<double> ps = uses_keep_prob(strategy) ? grid.p_values : std::vector<double>{1.0};
    std::vector<double> sigmas = uses_sigma(strategy) ? grid.sigma_values : std::vector<double>{0.0};
    if (ps.empty() || sigmas.empty()) throw std::invalid_argument("grid_points: empty grid");
    std::vector<PerturbConfig> points;
    for (double p : ps) {
        for (double s : sigmas) {
            PerturbConfig cfg{strategy, p, s, order};
            cfg.validate();
            points.push_back(cfg);
        }
    }
    return points;
}

GridSearchResult grid_search(const Dataset& pool, Strategy strategy, const ExperimentSettings& settings) {
    const auto points = grid_points(strategy, settings.grid, settings.flip_order);
    const std::uint64_t base = settings.train.seed;
    const std::uint64_t grid_base = derive_seed(base, stream::kGrid);

    std::vector<Splits> splits;
    if (settings.cv_folds >= 2) {
        for (auto& fold : split_cv(pool, settings.cv_folds, derive_seed(base, stream::kSplit))) {
            splits.push_back({std::move(fold.train), std::move(fold.dev), {}});
        }
    } else {
        auto [train, dev] = split_holdout(pool, settings.dev_fraction, derive_seed(base, stream::kSplit));
        splits.push_back({std::move(train), std::move(dev), {}});
    }

    const std::size_t runs = std::max<std::size_t>(settings.runs_per_point, 1);
    const std::size_t per_point = runs * splits.size();
    std::vector<double> dev_metrics(points.size() * per_point);
    parallel_for(dev_metrics.size(), settings.threads, [&](std::size_t job) {
        const std::size_t point = job / per_point;
        const std::size_t r = (job % per_point) / splits.size();
        const std::size_t s = job % splits.size();
        dev_metrics[job] = run_seeded(splits[s], points[point], settings, derive_seed(grid_base, r)).dev_metric;
    });

    GridSearchResult result;
    std::size_t best = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < per_point; ++j) sum += dev_metrics[i * per_point + j];
        result.table.push_back({points[i].p, points[i].sigma, sum / static_cast<double>(per_point), per_point});
        if (i == 0) continue;
        const auto& cand = result.table[i];
        const auto& cur = result.table[best];
        if (cand.mean_dev > cur.mean_dev ||
            (cand.mean_dev == cur.mean_dev && (cand.p > cur.p || (cand.p == cur.p && cand.sigma < cur.sigma)))) {
            best = i;
        }
    }
    result.best = points[best];
    return result;
}

std::vector<Strategy> normalize_strategies(const std::vector<Strategy>& strategies) {
    std::vector<Strategy> out{Strategy::none};
    for (auto s : strategies) {
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    return out;
}

Summary summarize(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("summarize: no values");
    Summary s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

StrategyRow run_strategy(const Dataset& pool, const Dataset& test, Strategy strategy,
                         const ExperimentSettings& settings) {
    if (test.empty()) throw std::invalid_argument("run_strategy: empty test set");
    if (settings.n_runs < 1) throw std::invalid_argument("run_strategy: n_runs must be >= 1");
    auto search = grid_search(pool, strategy, settings);

    const std::uint64_t base = settings.train.seed;
    auto [train, dev] = split_holdout(pool, settings.dev_fraction, derive_seed(base, stream::kSplit));
    const Splits data{std::move(train), std::move(dev), test};
    const std::uint64_t test_base = derive_seed(base, stream::kTest);

    StrategyRow row;
    row.strategy = strategy;
    row.chosen = search.best;
    row.grid = std::move(search.table);
    row.n_runs = settings.n_runs;
    row.test_metrics.resize(settings.n_runs);
    parallel_for(settings.n_runs, settings.threads, [&](std::size_t k) {
        row.test_metrics[k] = *run_seeded(data, row.chosen, settings, derive_seed(test_base, k)).test_metric;
    });
    auto s = summarize(row.test_metrics);
    row.mean = s.mean;
    row.std = s.std;
    row.min = s.min;
    row.max = s.max;
    return row;
}

ExperimentResult run_experiment(const Dataset& pool, const Dataset& test, const std::vector<Strategy>& strategies,
                                const ExperimentSettings& settings) {
    ExperimentResult result;
    for (auto s : normalize_strategies(strategies)) result.rows.push_back(run_strategy(pool, test, s, settings));
    return result;
}

ExperimentResult run_experiment(const Dataset& dataset, const std::vector<Strategy>& strategies,
                                const ExperimentSettings& settings) {
    auto [pool, test] = split_holdout(dataset, settings.test_fraction, derive_seed(settings.train.seed, stream::kHoldout));
    return run_experiment(pool, test, strategies, settings);
}

std::vector<SweepRow> fraction_sweep(const Dataset& pool, const Dataset& test, const std::vector<Strategy>& strategies,
                                     const std::vector<double>& fractions, const ExperimentSettings& settings) {
    if (fractions.empty()) throw std::invalid_argument("fraction_sweep: no fractions");
    std::vector<double> sorted = fractions;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::vector<SweepRow> rows;
    for (double f : sorted) {
        auto sub = subsample(pool, f, derive_seed(settings.train.seed, stream::kSubsample));
        auto result = run_experiment(sub, test, strategies, settings);
        auto ordered = result.rows;
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const auto& a, const auto& b) { return a.strategy < b.strategy; });
        for (const auto& r : ordered) rows.push_back({f, r.strategy, r.mean, r.std, r.n_runs, sub.size()});
    }
    return rows;
}

std::vector<SweepRow> fraction_sweep(const Dataset& dataset, const std::vector<Strategy>& strategies,
                                     const std::vector<double>& fractions, const ExperimentSettings& settings) {
    auto [pool, test] = split_holdout(dataset, settings.test_fraction, derive_seed(settings.train.seed, stream::kHoldout));
    return fraction_sweep(pool, test, strategies, fractions, settings);
}

}  // namespace perturb_lab

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "perturb_lab/corpus.hpp"
#include "perturb_lab/embed.hpp"
#include "perturb_lab/model.hpp"
#include "perturb_lab/perturb.hpp"

namespace perturb_lab {

struct TrainConfig {
    std::size_t epochs = 30;
    double lr = 0.05;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_accuracy = 0.0;

    friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct Splits {
    Dataset train;
    Dataset dev;
    Dataset test;  // may be empty
};

struct RunResult {
    double dev_metric = 0.0;              // best dev accuracy over epochs
    std::optional<double> test_metric;    // at the best-dev epoch; empty when no test split
    std::size_t best_epoch = 0;
    std::vector<EpochStats> history;
    PerturbConfig perturb;
    TrainConfig train;
    ClassifierParams params;              // snapshot at the best-dev epoch
    EmbeddingMatrix embeddings;           // snapshot at the best-dev epoch

    friend bool operator==(const RunResult&, const RunResult&) = default;
};

/// Fraction of examples classified correctly, without any perturbation.
double evaluate(const ClassifierParams& params, const EmbeddingMatrix& emb, const Dataset& dataset);

/// Minibatch SGD where every training example is perturbed per `perturb`
/// before the forward pass. Dev and test evaluation never perturb.
RunResult train_one(const Splits& data, const ClassifierParams& init, const EmbeddingMatrix& emb,
                    const PerturbConfig& perturb, const TrainConfig& cfg);

struct Grid {
    std::vector<double> p_values{0.7, 0.8, 0.9, 0.95};
    std::vector<double> sigma_values{0.001, 0.01, 0.1};

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Everything needed to build and train one model besides the data.
struct ExperimentSettings {
    TrainConfig train;
    ModelShape model;  // dim and num_classes are filled from the data when zero
    double init_scale = 0.1;
    double embedding_scale = 0.25;
    bool train_embeddings = true;
    std::optional<EmbeddingMatrix> pretrained;  // replaces random embeddings when set
    Grid grid;
    FlipOrder flip_order = FlipOrder::descending;
    std::size_t runs_per_point = 5;
    std::size_t n_runs = 5;
    double dev_fraction = 0.2;
    std::size_t cv_folds = 0;  // >= 2 switches grid search to k-fold CV
    double test_fraction = 0.2;
    std::size_t threads = 1;
    std::size_t vocab_size = 0;  // required when no pretrained embeddings
};

/// Trains a fresh model from the seed-derived init.
RunResult run_seeded(const Splits& data, const PerturbConfig& perturb, const ExperimentSettings& settings,
                     std::uint64_t run_seed);

struct GridPoint {
    double p = 1.0;
    double sigma = 0.0;
    double mean_dev = 0.0;
    std::size_t runs = 0;
};

struct GridSearchResult {
    PerturbConfig best;
    std::vector<GridPoint> table;
};

/// The (p, sigma) points a strategy is searched over. Axes the strategy does
/// not read collapse to a single neutral value.
std::vector<PerturbConfig> grid_points(Strategy strategy, const Grid& grid, FlipOrder order);

/// Mean dev accuracy over seeded runs per grid point; best by mean, ties to
/// larger p then smaller sigma.
GridSearchResult grid_search(const Dataset& pool, Strategy strategy, const ExperimentSettings& settings);

struct StrategyRow {
    Strategy strategy = Strategy::none;
    PerturbConfig chosen;
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n_runs = 0;
    std::vector<double> test_metrics;
    std::vector<GridPoint> grid;
};

struct ExperimentResult {
    std::vector<StrategyRow> rows;
};

/// Strategy list with `none` first and duplicates removed.
std::vector<Strategy> normalize_strategies(const std::vector<Strategy>& strategies);

/// Grid search on `pool`, then n_runs test evaluations at the chosen point.
StrategyRow run_strategy(const Dataset& pool, const Dataset& test, Strategy strategy,
                         const ExperimentSettings& settings);

ExperimentResult run_experiment(const Dataset& pool, const Dataset& test, const std::vector<Strategy>& strategies,
                                const ExperimentSettings& settings);

/// Splits off `settings.test_fraction` as the test set first.
ExperimentResult run_experiment(const Dataset& dataset, const std::vector<Strategy>& strategies,
                                const ExperimentSettings& settings);

struct SweepRow {
    double fraction = 1.0;
    Strategy strategy = Strategy::none;
    double mean = 0.0;
    double std = 0.0;
    std::size_t n_runs = 0;
    std::size_t train_pool_size = 0;
};

/// run_experiment on subsample(pool, fraction) for every fraction; the test
/// set stays fixed. Rows sorted by (fraction, strategy).
std::vector<SweepRow> fraction_sweep(const Dataset& pool, const Dataset& test, const std::vector<Strategy>& strategies,
                                     const std::vector<double>& fractions, const ExperimentSettings& settings);

std::vector<SweepRow> fraction_sweep(const Dataset& dataset, const std::vector<Strategy>& strategies,
                                     const std::vector<double>& fractions, const ExperimentSettings& settings);

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
    double min = 0.0;
    double max = 0.0;
};

Summary summarize(const std::vector<double>& values);

}  // namespace perturb_lab

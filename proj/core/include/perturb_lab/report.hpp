#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "perturb_lab/corpus.hpp"
#include "perturb_lab/model.hpp"
#include "perturb_lab/perturb.hpp"
#include "perturb_lab/train.hpp"

namespace perturb_lab {

/// Fully resolved run configuration.
struct RunSpec {
    std::filesystem::path dataset;
    std::optional<LabelMap> label_map;  // inferred from the dataset when absent
    std::optional<std::filesystem::path> embeddings;
    std::vector<Strategy> strategies;
    Grid grid;
    TrainConfig train;
    Architecture arch = Architecture::conv_maxpool;
    std::size_t dim = 32;
    std::size_t filters = 8;
    std::size_t filter_width = 3;
    double init_scale = 0.1;
    double embedding_scale = 0.25;
    bool train_embeddings = true;
    std::size_t min_count = 1;
    std::size_t runs = 5;
    std::size_t runs_per_point = 5;
    std::vector<double> fractions{0.1, 0.3, 1.0};
    double dev_fraction = 0.2;
    double test_fraction = 0.2;
    std::size_t cv_folds = 0;
    FlipOrder flip_order = FlipOrder::descending;
    double arrow_threshold = 0.003;
    std::size_t threads = 1;
    std::filesystem::path out;  // empty: command default

    friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

using ConfigValues = std::map<std::string, std::string>;

inline constexpr const char* kSeedEnvVar = "PERTURB_LAB_SEED";
inline constexpr std::uint64_t kDefaultSeed = 20180101;

/// Parses `key = value` lines ('#' comments). Throws ConfigError naming the key.
ConfigValues read_config_file(const std::filesystem::path& path);

/// Resolves a RunSpec from file values overridden by `overrides`. The seed
/// falls back to `env_seed`, then kDefaultSeed. Validates every value and
/// that referenced paths exist.
RunSpec parse_config(const ConfigValues& file_values, const ConfigValues& overrides,
                     const std::optional<std::string>& env_seed = std::nullopt);

RunSpec parse_config(const std::optional<std::filesystem::path>& config_path, const ConfigValues& overrides);

/// Canonical `key = value` text; parse_config(to_config_text(s)) == s.
std::string to_config_text(const RunSpec& spec);

/// FNV-1a over the canonical config text without `out` and `threads`, as 16
/// hex digits.
std::string config_hash(const RunSpec& spec);

struct ToyCorpusInfo {
    std::size_t examples = 0;
    std::size_t positive_markers = 0;
    std::size_t negative_markers = 0;
    std::size_t distractors = 0;
};

/// Synthetic balanced 2-class TSV. Each sentence carries strictly more marker
/// tokens of its own class than of the other, so counting markers labels every
/// line correctly.
ToyCorpusInfo gen_toy_corpus(std::size_t n_examples, std::size_t vocab_size, std::uint64_t seed,
                             const std::filesystem::path& out_path);

struct ReportMetadata {
    std::string dataset_name;
    std::string architecture;
    std::string config_hash;
    std::string timestamp;  // console only; files stay byte-reproducible
};

struct ExperimentReport {
    std::vector<StrategyRow> rows;
    ReportMetadata metadata;
};

/// Encoded dataset plus the settings derived from a RunSpec.
struct LoadedData {
    Dataset dataset;
    Vocabulary vocab;
    ExperimentSettings settings;
};

LoadedData load_inputs(const RunSpec& spec, std::ostream& log);

/// "↑" / "↓" / "" relative to the baseline mean.
std::string trend_marker(double mean, double baseline_mean, double threshold);

std::string format_report_csv(const ExperimentReport& report);
std::string format_report_table(const ExperimentReport& report, const RunSpec& spec);
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

/// Output file paths derived from the CSV path.
struct OutputPaths {
    std::filesystem::path csv;
    std::filesystem::path table;
    std::filesystem::path config;
};

OutputPaths output_paths(const std::filesystem::path& csv_path);

/// Runs every strategy and writes CSV, human table and resolved config. On
/// failure the rows finished so far plus a FAILED row are flushed before
/// rethrowing.
ExperimentReport cmd_experiment(const RunSpec& spec, std::ostream& log);

std::vector<SweepRow> cmd_sweep(const RunSpec& spec, std::ostream& log);

}  // namespace perturb_lab

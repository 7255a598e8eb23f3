#include "perturb_lab/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "perturb_lab/error.hpp"
#include "perturb_lab/rng.hpp"

namespace perturb_lab {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::string item;
    std::istringstream ss(value);
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) items.push_back(t);
    }
    return items;
}

std::string format_number(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string join_numbers(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_number(values[i]);
    return out;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// Typed readers that report the key on failure.
class ValueReader {
public:
    ValueReader(const std::string& key, const std::string& value) : key_(key), value_(value) {}

    double real() const {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
        if (ec != std::errc() || ptr != value_.data() + value_.size() || !std::isfinite(v)) {
            throw ConfigError(key_, "expected a number, got '" + value_ + "'");
        }
        return v;
    }

    std::uint64_t unsigned_int() const {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
        if (ec != std::errc() || ptr != value_.data() + value_.size()) {
            throw ConfigError(key_, "expected a non-negative integer, got '" + value_ + "'");
        }
        return v;
    }

    bool boolean() const {
        if (value_ == "true" || value_ == "1" || value_ == "yes") return true;
        if (value_ == "false" || value_ == "0" || value_ == "no") return false;
        throw ConfigError(key_, "expected true/false, got '" + value_ + "'");
    }

    std::vector<double> reals() const {
        std::vector<double> out;
        for (const auto& item : split_list(value_)) out.push_back(ValueReader(key_, item).real());
        if (out.empty()) throw ConfigError(key_, "expected a non-empty list");
        return out;
    }

    template <typename Fn>
    auto parsed(Fn&& fn) const {
        try {
            return fn(value_);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key_, e.what());
        }
    }

    const std::string& text() const { return value_; }

    void require(bool ok, const std::string& what) const {
        if (!ok) throw ConfigError(key_, what + ", got '" + value_ + "'");
    }

private:
    const std::string& key_;
    const std::string& value_;
};

using Setter = std::function<void(RunSpec&, const ValueReader&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset", [](RunSpec& s, const ValueReader& v) { s.dataset = v.text(); }},
        {"label_map",
         [](RunSpec& s, const ValueReader& v) {
             LabelMap map;
             std::set<std::size_t> used;
             for (const auto& item : split_list(v.text())) {
                 auto colon = item.rfind(':');
                 v.require(colon != std::string::npos && colon > 0, "expected name:index pairs");
                 auto index = ValueReader("label_map", item.substr(colon + 1)).unsigned_int();
                 v.require(map.emplace(item.substr(0, colon), index).second && used.insert(index).second,
                           "duplicate label or index");
             }
             v.require(map.size() >= 2, "need at least two labels");
             s.label_map = map;
         }},
        {"embeddings", [](RunSpec& s, const ValueReader& v) { s.embeddings = v.text(); }},
        {"strategies",
         [](RunSpec& s, const ValueReader& v) {
             s.strategies.clear();
             for (const auto& name : split_list(v.text())) {
                 s.strategies.push_back(v.parsed([&](const std::string&) { return parse_strategy(name); }));
             }
             v.require(!s.strategies.empty(), "expected at least one strategy");
         }},
        {"p",
         [](RunSpec& s, const ValueReader& v) {
             s.grid.p_values = v.reals();
             for (double p : s.grid.p_values) v.require(p > 0.0 && p <= 1.0, "values must be in (0, 1]");
         }},
        {"sigma",
         [](RunSpec& s, const ValueReader& v) {
             s.grid.sigma_values = v.reals();
             for (double x : s.grid.sigma_values) v.require(x >= 0.0, "values must be >= 0");
         }},
        {"epochs",
         [](RunSpec& s, const ValueReader& v) {
             s.train.epochs = v.unsigned_int();
             v.require(s.train.epochs >= 1, "must be >= 1");
         }},
        {"lr",
         [](RunSpec& s, const ValueReader& v) {
             s.train.lr = v.real();
             v.require(s.train.lr > 0.0, "must be > 0");
         }},
        {"batch_size",
         [](RunSpec& s, const ValueReader& v) {
             s.train.batch_size = v.unsigned_int();
             v.require(s.train.batch_size >= 1, "must be >= 1");
         }},
        {"seed", [](RunSpec& s, const ValueReader& v) { s.train.seed = v.unsigned_int(); }},
        {"arch",
         [](RunSpec& s, const ValueReader& v) {
             s.arch = v.parsed([](const std::string& t) { return parse_architecture(t); });
         }},
        {"dim",
         [](RunSpec& s, const ValueReader& v) {
             s.dim = v.unsigned_int();
             v.require(s.dim >= 1, "must be >= 1");
         }},
        {"filters",
         [](RunSpec& s, const ValueReader& v) {
             s.filters = v.unsigned_int();
             v.require(s.filters >= 1, "must be >= 1");
         }},
        {"filter_width",
         [](RunSpec& s, const ValueReader& v) {
             s.filter_width = v.unsigned_int();
             v.require(s.filter_width >= 1, "must be >= 1");
         }},
        {"init_scale",
         [](RunSpec& s, const ValueReader& v) {
             s.init_scale = v.real();
             v.require(s.init_scale > 0.0, "must be > 0");
         }},
        {"embedding_scale",
         [](RunSpec& s, const ValueReader& v) {
             s.embedding_scale = v.real();
             v.require(s.embedding_scale > 0.0, "must be > 0");
         }},
        {"train_embeddings", [](RunSpec& s, const ValueReader& v) { s.train_embeddings = v.boolean(); }},
        {"min_count",
         [](RunSpec& s, const ValueReader& v) {
             s.min_count = v.unsigned_int();
             v.require(s.min_count >= 1, "must be >= 1");
         }},
        {"runs",
         [](RunSpec& s, const ValueReader& v) {
             s.runs = v.unsigned_int();
             v.require(s.runs >= 1, "must be >= 1");
         }},
        {"runs_per_point",
         [](RunSpec& s, const ValueReader& v) {
             s.runs_per_point = v.unsigned_int();
             v.require(s.runs_per_point >= 1, "must be >= 1");
         }},
        {"fractions",
         [](RunSpec& s, const ValueReader& v) {
             s.fractions = v.reals();
             for (double f : s.fractions) v.require(f > 0.0 && f <= 1.0, "values must be in (0, 1]");
         }},
        {"dev_fraction",
         [](RunSpec& s, const ValueReader& v) {
             s.dev_fraction = v.real();
             v.require(s.dev_fraction > 0.0 && s.dev_fraction < 1.0, "must be in (0, 1)");
         }},
        {"test_fraction",
         [](RunSpec& s, const ValueReader& v) {
             s.test_fraction = v.real();
             v.require(s.test_fraction > 0.0 && s.test_fraction < 1.0, "must be in (0, 1)");
         }},
        {"cv_folds",
         [](RunSpec& s, const ValueReader& v) {
             s.cv_folds = v.unsigned_int();
             v.require(s.cv_folds == 0 || s.cv_folds >= 2, "must be 0 (off) or >= 2");
         }},
        {"flip_order",
         [](RunSpec& s, const ValueReader& v) {
             s.flip_order = v.parsed([](const std::string& t) { return parse_flip_order(t); });
         }},
        {"arrow_threshold",
         [](RunSpec& s, const ValueReader& v) {
             s.arrow_threshold = v.real();
             v.require(s.arrow_threshold >= 0.0, "must be >= 0");
         }},
        {"threads",
         [](RunSpec& s, const ValueReader& v) {
             s.threads = v.unsigned_int();
             v.require(s.threads >= 1, "must be >= 1");
         }},
        {"out", [](RunSpec& s, const ValueReader& v) { s.out = v.text(); }},
    };
    return table;
}

void check_path(const std::string& key, const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) throw ConfigError(key, "file not found: " + path.string());
}

}  // namespace

ConfigValues read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    ConfigValues values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError(path.string(), line_no, "expected 'key = value'");
        auto key = trim(t.substr(0, eq));
        if (values.contains(key)) throw ConfigError(key, "given twice");
        values[key] = trim(t.substr(eq + 1));
    }
    return values;
}

RunSpec parse_config(const ConfigValues& file_values, const ConfigValues& overrides,
                     const std::optional<std::string>& env_seed) {
    ConfigValues merged = file_values;
    for (const auto& [k, v] : overrides) merged[k] = v;
    if (!merged.contains("seed") && env_seed && !env_seed->empty()) merged["seed"] = *env_seed;

    RunSpec spec;
    spec.train.seed = kDefaultSeed;
    const auto& table = setters();
    for (const auto& [key, value] : merged) {
        auto it = table.find(key);
        if (it == table.end()) throw ConfigError(key, "unknown key");
        if (value.empty()) throw ConfigError(key, "empty value");
        it->second(spec, ValueReader(key, value));
    }

    if (spec.dataset.empty()) throw ConfigError("dataset", "required key missing");
    if (spec.strategies.empty()) throw ConfigError("strategies", "required key missing");
    check_path("dataset", spec.dataset);
    if (spec.embeddings) check_path("embeddings", *spec.embeddings);
    return spec;
}

RunSpec parse_config(const std::optional<std::filesystem::path>& config_path, const ConfigValues& overrides) {
    ConfigValues file_values;
    if (config_path) file_values = read_config_file(*config_path);
    std::optional<std::string> env;
    if (const char* e = std::getenv(kSeedEnvVar)) env = e;
    return parse_config(file_values, overrides, env);
}

std::string to_config_text(const RunSpec& spec) {
    std::ostringstream out;
    auto put = [&](std::string_view key, const std::string& value) { out << key << " = " << value << '\n'; };
    put("dataset", spec.dataset.string());
    if (spec.label_map) {
        // Ordered by index so the text reads naturally.
        std::vector<std::pair<std::size_t, std::string>> by_index;
        for (const auto& [name, idx] : *spec.label_map) by_index.emplace_back(idx, name);
        std::sort(by_index.begin(), by_index.end());
        std::string s;
        for (std::size_t i = 0; i < by_index.size(); ++i) {
            s += (i ? "," : "") + by_index[i].second + ":" + std::to_string(by_index[i].first);
        }
        put("label_map", s);
    }
    if (spec.embeddings) put("embeddings", spec.embeddings->string());
    std::string strategies;
    for (std::size_t i = 0; i < spec.strategies.size(); ++i) {
        strategies += (i ? "," : "") + std::string(to_string(spec.strategies[i]));
    }
    put("strategies", strategies);
    put("p", join_numbers(spec.grid.p_values));
    put("sigma", join_numbers(spec.grid.sigma_values));
    put("epochs", std::to_string(spec.train.epochs));
    put("lr", format_number(spec.train.lr));
    put("batch_size", std::to_string(spec.train.batch_size));
    put("seed", std::to_string(spec.train.seed));
    put("arch", spec.arch == Architecture::conv_maxpool ? "conv" : "meanpool");
    put("dim", std::to_string(spec.dim));
    put("filters", std::to_string(spec.filters));
    put("filter_width", std::to_string(spec.filter_width));
    put("init_scale", format_number(spec.init_scale));
    put("embedding_scale", format_number(spec.embedding_scale));
    put("train_embeddings", spec.train_embeddings ? "true" : "false");
    put("min_count", std::to_string(spec.min_count));
    put("runs", std::to_string(spec.runs));
    put("runs_per_point", std::to_string(spec.runs_per_point));
    put("fractions", join_numbers(spec.fractions));
    put("dev_fraction", format_number(spec.dev_fraction));
    put("test_fraction", format_number(spec.test_fraction));
    put("cv_folds", std::to_string(spec.cv_folds));
    put("flip_order", std::string(to_string(spec.flip_order)));
    put("arrow_threshold", format_number(spec.arrow_threshold));
    put("threads", std::to_string(spec.threads));
    if (!spec.out.empty()) put("out", spec.out.string());
    return out.str();
}

std::string config_hash(const RunSpec& spec) {
    // Output location and thread count do not affect results.
    RunSpec keyed = spec;
    keyed.out.clear();
    keyed.threads = 1;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_config_text(keyed)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

ToyCorpusInfo gen_toy_corpus(std::size_t n_examples, std::size_t vocab_size, std::uint64_t seed,
                             const std::filesystem::path& out_path) {
    if (n_examples < 10) throw std::invalid_argument("gen_toy_corpus: need at least 10 examples");
    if (vocab_size < 10) throw std::invalid_argument("gen_toy_corpus: vocab_size must be >= 10");

    ToyCorpusInfo info;
    info.examples = n_examples;
    info.positive_markers = std::max<std::size_t>(2, vocab_size / 20);
    info.negative_markers = info.positive_markers;
    info.distractors = vocab_size - info.positive_markers - info.negative_markers;

    Rng rng(seed);
    std::vector<int> labels(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) labels[i] = i < n_examples / 2 ? 0 : 1;
    std::shuffle(labels.begin(), labels.end(), rng);

    std::uniform_int_distribution<std::size_t> length_dist(8, 16);
    std::uniform_int_distribution<std::size_t> own_dist(1, 3);
    std::uniform_int_distribution<std::size_t> pos_pick(0, info.positive_markers - 1);
    std::uniform_int_distribution<std::size_t> neg_pick(0, info.negative_markers - 1);
    std::uniform_int_distribution<std::size_t> distractor_pick(0, info.distractors - 1);

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path.string());
    out << "# perturb-lab toy corpus: n=" << n_examples << " vocab=" << vocab_size << " seed=" << seed
        << " markers=" << info.positive_markers << "+" << info.negative_markers << " distractors=" << info.distractors
        << "\n# label 1 iff the sentence holds more pos* than neg* tokens\n";

    for (int label : labels) {
        const std::size_t length = length_dist(rng);
        const std::size_t own = own_dist(rng);
        const std::size_t other = std::uniform_int_distribution<std::size_t>(0, own - 1)(rng);
        std::vector<std::string> words;
        auto marker = [&](bool positive) {
            return positive ? "pos" + std::to_string(pos_pick(rng)) : "neg" + std::to_string(neg_pick(rng));
        };
        for (std::size_t i = 0; i < own; ++i) words.push_back(marker(label == 1));
        for (std::size_t i = 0; i < other; ++i) words.push_back(marker(label == 0));
        while (words.size() < length) words.push_back("w" + std::to_string(distractor_pick(rng)));
        std::shuffle(words.begin(), words.end(), rng);

        out << label << '\t';
        for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + out_path.string());
    return info;
}

LoadedData load_inputs(const RunSpec& spec, std::ostream& log) {
    LoadedData data;
    auto rows = read_tsv(spec.dataset);
    LabelMap label_map = spec.label_map ? *spec.label_map : infer_label_map(rows);
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(rows.size());
    for (const auto& row : rows) corpus.push_back(tokenize(row.text));
    data.vocab = build_vocab(corpus, spec.min_count);
    data.dataset = load_tsv(spec.dataset, data.vocab, label_map);
    if (data.dataset.size() < 10) throw std::runtime_error("dataset has fewer than 10 examples");

    auto& s = data.settings;
    s.train = spec.train;
    s.model = {spec.arch, spec.dim, data.dataset.num_classes, spec.filters, spec.filter_width};
    s.init_scale = spec.init_scale;
    s.embedding_scale = spec.embedding_scale;
    s.train_embeddings = spec.train_embeddings;
    s.grid = spec.grid;
    s.flip_order = spec.flip_order;
    s.runs_per_point = spec.runs_per_point;
    s.n_runs = spec.runs;
    s.dev_fraction = spec.dev_fraction;
    s.test_fraction = spec.test_fraction;
    s.cv_folds = spec.cv_folds;
    s.threads = spec.threads;
    s.vocab_size = data.vocab.size();
    if (spec.embeddings) {
        auto loaded = load_pretrained(*spec.embeddings, data.vocab, spec.dim,
                                      derive_seed(spec.train.seed, stream::kEmbedding), spec.embedding_scale);
        loaded.embeddings.trainable = spec.train_embeddings;
        log << "embeddings: " << loaded.matched << "/" << data.vocab.size() << " rows from file (coverage "
            << fixed4(loaded.coverage) << ")\n";
        s.pretrained = std::move(loaded.embeddings);
    }
    log << "dataset " << data.dataset.name << ": " << data.dataset.size() << " examples, "
        << data.dataset.num_classes << " classes, vocabulary " << data.vocab.size() << "\n";
    return data;
}

std::string trend_marker(double mean, double baseline_mean, double threshold) {
    // Tolerance absorbs rounding in differences such as 0.804 - 0.801.
    constexpr double kSlack = 1e-12;
    const double diff = mean - baseline_mean;
    if (diff >= threshold - kSlack) return "↑";
    if (-diff >= threshold - kSlack) return "↓";
    return "";
}

std::string format_report_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out << "strategy,p,sigma,mean,std,min,max,n_runs\n";
    for (const auto& r : report.rows) {
        out << to_string(r.strategy) << ',' << (uses_keep_prob(r.strategy) ? format_number(r.chosen.p) : "NA") << ','
            << (uses_sigma(r.strategy) ? format_number(r.chosen.sigma) : "NA") << ',' << format_number(r.mean) << ','
            << format_number(r.std) << ',' << format_number(r.min) << ',' << format_number(r.max) << ','
            << r.n_runs << '\n';
    }
    return out.str();
}

std::string format_report_table(const ExperimentReport& report, const RunSpec& spec) {
    std::ostringstream out;
    out << "dataset: " << report.metadata.dataset_name << "\n"
        << "model: " << report.metadata.architecture << "\n"
        << "config: " << report.metadata.config_hash << "\n\n";

    char line[256];
    std::snprintf(line, sizeof(line), "%-18s %-6s %-6s %-18s %-7s %-7s %-5s %s\n", "strategy", "p", "sigma",
                  "mean +- std", "min", "max", "runs", "");
    out << line;
    const double baseline = report.rows.empty() ? 0.0 : report.rows.front().mean;
    for (const auto& r : report.rows) {
        std::string p = uses_keep_prob(r.strategy) ? format_number(r.chosen.p) : "-";
        std::string sigma = uses_sigma(r.strategy) ? format_number(r.chosen.sigma) : "-";
        std::string marker = r.strategy == Strategy::none ? "" : trend_marker(r.mean, baseline, spec.arrow_threshold);
        std::string mean_std = fixed4(r.mean) + " +- " + fixed4(r.std);
        std::snprintf(line, sizeof(line), "%-18s %-6s %-6s %-18s %-7s %-7s %-5zu %s\n",
                      std::string(to_string(r.strategy)).c_str(), p.c_str(), sigma.c_str(), mean_std.c_str(),
                      fixed4(r.min).c_str(), fixed4(r.max).c_str(), r.n_runs, marker.c_str());
        out << line;
    }
    out << "\n(arrows: |mean - baseline| >= " << fixed4(spec.arrow_threshold) << ")\n";

    out << "\ngrid search (mean dev accuracy):\n";
    for (const auto& r : report.rows) {
        out << "  " << to_string(r.strategy) << ":";
        for (const auto& g : r.grid) {
            out << " [p=" << format_number(g.p) << " sigma=" << format_number(g.sigma) << " " << fixed4(g.mean_dev)
                << "]";
        }
        out << '\n';
    }

    out << "\nresolved configuration:\n";
    std::istringstream cfg(to_config_text(spec));
    for (std::string l; std::getline(cfg, l);) out << "  " << l << '\n';
    return out.str();
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "fraction,strategy,mean,std\n";
    for (const auto& r : rows) {
        out << format_number(r.fraction) << ',' << to_string(r.strategy) << ',' << format_number(r.mean) << ','
            << format_number(r.std) << '\n';
    }
    return out.str();
}

OutputPaths output_paths(const std::filesystem::path& csv_path) {
    OutputPaths paths;
    paths.csv = csv_path;
    auto base = csv_path;
    if (base.extension() == ".csv") base.replace_extension();
    paths.table = base.string() + ".txt";
    paths.config = base.string() + ".cfg";
    return paths;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string now_utc() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void log_row(std::ostream& log, const StrategyRow& row) {
    log << "  " << to_string(row.strategy) << ": mean " << fixed4(row.mean) << " std " << fixed4(row.std);
    if (uses_keep_prob(row.strategy)) log << " p=" << format_number(row.chosen.p);
    if (uses_sigma(row.strategy)) log << " sigma=" << format_number(row.chosen.sigma);
    log << '\n';
}

}  // namespace

ExperimentReport cmd_experiment(const RunSpec& spec, std::ostream& log) {
    auto loaded = load_inputs(spec, log);
    const auto& settings = loaded.settings;
    auto [pool, test] =
        split_holdout(loaded.dataset, settings.test_fraction, derive_seed(settings.train.seed, stream::kHoldout));

    ExperimentReport report;
    report.metadata = {loaded.dataset.name, std::string(to_string(spec.arch)), config_hash(spec), now_utc()};
    const auto paths = output_paths(spec.out.empty() ? std::filesystem::path("report.csv") : spec.out);
    log << "experiment " << report.metadata.config_hash << " started " << report.metadata.timestamp << ": pool "
        << pool.size() << ", test " << test.size() << "\n";

    write_file(paths.config, to_config_text(spec));
    for (auto strategy : normalize_strategies(spec.strategies)) {
        try {
            report.rows.push_back(run_strategy(pool, test, strategy, settings));
            log_row(log, report.rows.back());
        } catch (...) {
            auto csv = format_report_csv(report);
            csv += std::string(to_string(strategy)) + ",NA,NA,FAILED,NA,NA,NA,0\n";
            write_file(paths.csv, csv);
            throw;
        }
    }
    write_file(paths.csv, format_report_csv(report));
    write_file(paths.table, format_report_table(report, spec));
    log << "wrote " << paths.csv.string() << ", " << paths.table.string() << ", " << paths.config.string() << "\n";
    return report;
}

std::vector<SweepRow> cmd_sweep(const RunSpec& spec, std::ostream& log) {
    auto loaded = load_inputs(spec, log);
    const auto& settings = loaded.settings;
    auto [pool, test] =
        split_holdout(loaded.dataset, settings.test_fraction, derive_seed(settings.train.seed, stream::kHoldout));
    const auto paths = output_paths(spec.out.empty() ? std::filesystem::path("sweep.csv") : spec.out);
    log << "sweep " << config_hash(spec) << " started " << now_utc() << ": pool " << pool.size() << ", test "
        << test.size() << "\n";

    write_file(paths.config, to_config_text(spec));
    auto rows = fraction_sweep(pool, test, spec.strategies, spec.fractions, settings);
    for (const auto& r : rows) {
        log << "  fraction " << format_number(r.fraction) << " (" << r.train_pool_size << " examples) "
            << to_string(r.strategy) << ": " << fixed4(r.mean) << " +- " << fixed4(r.std) << '\n';
    }
    write_file(paths.csv, format_sweep_csv(rows));
    log << "wrote " << paths.csv.string() << ", " << paths.config.string() << "\n";
    return rows;
}

}  // namespace perturb_lab

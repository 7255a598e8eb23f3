#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "perturb_lab/error.hpp"
#include "perturb_lab/report.hpp"
#include "perturb_lab/verify.hpp"

namespace {

struct RunFlags {
    std::string config;
    std::map<std::string, std::string> values;
    std::vector<std::string> sets;
};

void add_run_flags(CLI::App& cmd, RunFlags& flags) {
    cmd.add_option("--config", flags.config, "Flat key = value config file")->check(CLI::ExistingFile);
    const std::vector<std::pair<std::string, std::string>> options = {
        {"dataset", "TSV dataset, <label>\\t<text> per line"},
        {"strategies", "Comma-separated strategy list"},
        {"p", "Keep-probability grid, comma-separated"},
        {"sigma", "Sigma grid, comma-separated"},
        {"runs", "Test runs per strategy"},
        {"seed", "Base seed (falls back to $PERTURB_LAB_SEED)"},
        {"fractions", "Training fractions for sweep, comma-separated"},
        {"arch", "meanpool or conv"},
        {"out", "Output CSV path"},
        {"embeddings", "Pretrained vectors, text format"},
    };
    for (const auto& [key, help] : options) {
        cmd.add_option_function<std::string>(
            "--" + key, [&flags, key = key](const std::string& v) { flags.values[key] = v; }, help);
    }
    cmd.add_option("--set", flags.sets, "Override any config key: --set key=value");
}

perturb_lab::RunSpec resolve(const RunFlags& flags) {
    auto overrides = flags.values;
    for (const auto& kv : flags.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw perturb_lab::ConfigError(kv, "--set expects key=value");
        overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    std::optional<std::filesystem::path> path;
    if (!flags.config.empty()) path = flags.config;
    return perturb_lab::parse_config(path, overrides);
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv(perturb_lab::kSeedEnvVar)) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw perturb_lab::ConfigError("seed", std::string("bad ") + perturb_lab::kSeedEnvVar);
        }
    }
    return perturb_lab::kDefaultSeed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Word-embedding perturbation experiments for sentence classification"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-toy", "Write a synthetic two-class TSV corpus");
    std::size_t n_examples = 500;
    std::size_t vocab_size = 200;
    std::optional<std::uint64_t> gen_seed;
    std::string gen_out = "toy.tsv";
    gen->add_option("--n", n_examples, "Number of examples")->capture_default_str();
    gen->add_option("--vocab", vocab_size, "Number of word types")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Seed (falls back to $PERTURB_LAB_SEED)");
    gen->add_option("--out", gen_out, "Output TSV path")->capture_default_str();

    RunFlags experiment_flags;
    auto* experiment = app.add_subcommand("experiment", "Grid-search and evaluate every strategy");
    add_run_flags(*experiment, experiment_flags);

    RunFlags sweep_flags;
    auto* sweep = app.add_subcommand("sweep", "Repeat the experiment over training-set fractions");
    add_run_flags(*sweep, sweep_flags);

    auto* verify = app.add_subcommand("verify", "Run gradient, mask and flip-budget checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto seed = gen_seed ? *gen_seed : default_seed();
            auto info = perturb_lab::gen_toy_corpus(n_examples, vocab_size, seed, gen_out);
            std::cout << "wrote " << gen_out << ": " << info.examples << " examples, " << info.positive_markers
                      << "+" << info.negative_markers << " markers, " << info.distractors << " distractors\n";
            return 0;
        }
        if (*experiment) {
            perturb_lab::cmd_experiment(resolve(experiment_flags), std::cout);
            return 0;
        }
        if (*sweep) {
            perturb_lab::cmd_sweep(resolve(sweep_flags), std::cout);
            return 0;
        }
        if (*verify) return perturb_lab::verify::cmd_verify(std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

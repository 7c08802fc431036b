// splade-lab: train, index, search and evaluate toy SPLADE-style sparse
// retrievers under controlled output vocabularies.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spladelab/experiment.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string workdir;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Experiment config file (key = value sections)")
        ->required();
    cmd->add_option("--workdir", flags.workdir, "Override paths.workdir");
    cmd->add_option("--seed", flags.seed, "Override the top-level seed");
    cmd->add_option("--set", flags.overrides, "Override any config field, e.g. --set train.epochs=1");
}

splade::ExperimentConfig resolve_config(const CommonFlags& flags) {
    splade::ExperimentConfig config = splade::load_experiment_config(flags.config_path);
    if (flags.seed >= 0) {
        splade::apply_override(config, "seed.seed", std::to_string(flags.seed));
    }
    if (!flags.workdir.empty()) {
        splade::apply_override(config, "paths.workdir", flags.workdir);
    }
    for (const auto& item : flags.overrides) {
        std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("--set expects section.key=value, got '" + item + "'");
        }
        splade::apply_override(config, item.substr(0, eq), item.substr(eq + 1));
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splade-lab: learned sparse retrieval with controlled vocabularies"};
    app.require_subcommand(1);
    app.set_version_flag("--version", splade::kVersion);

    CommonFlags flags;
    std::vector<std::string> eval_runs;

    CLI::App* ingest = app.add_subcommand("ingest", "Validate and snapshot the corpus");
    CLI::App* vocab = app.add_subcommand("vocab", "Train the tokenizer and build the controller");
    CLI::App* train = app.add_subcommand("train", "Mine negatives and train the encoder");
    CLI::App* index = app.add_subcommand("index", "Encode the corpus into an impact index");
    CLI::App* search = app.add_subcommand("search", "Run test queries and write a TREC run file");
    CLI::App* eval = app.add_subcommand("eval", "Score run files against qrels");
    CLI::App* analyze =
        app.add_subcommand("analyze", "Expansion statistics and the query-time pruning experiment");
    CLI::App* matrix =
        app.add_subcommand("matrix", "Run the full system grid and emit a combined report");
    CLI::App* synth = app.add_subcommand("synth", "Generate a seeded synthetic corpus and queries");
    for (CLI::App* cmd : {ingest, vocab, train, index, search, eval, analyze, matrix, synth}) {
        add_common(cmd, flags);
    }
    eval->add_option("--run", eval_runs, "Run file(s) to evaluate (default: <workdir>/run.trec)");

    CLI11_PARSE(app, argc, argv);

    try {
        splade::ExperimentConfig config = resolve_config(flags);
        if (ingest->parsed()) splade::run_ingest(config);
        if (vocab->parsed()) splade::run_vocab(config);
        if (train->parsed()) splade::run_train_cmd(config);
        if (index->parsed()) splade::run_index_cmd(config);
        if (search->parsed()) splade::run_search_cmd(config);
        if (eval->parsed()) splade::run_eval_cmd(config, eval_runs);
        if (analyze->parsed()) splade::run_analyze(config);
        if (matrix->parsed()) splade::run_matrix(config);
        if (synth->parsed()) splade::run_synth(config);
    } catch (const std::exception& e) {
        std::cerr << "splade-lab: " << e.what() << '\n';
        return EXIT_FAILURE;
    }
    return EXIT_SUCCESS;
}

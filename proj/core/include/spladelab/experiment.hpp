#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spladelab/controller.hpp"
#include "spladelab/encoder.hpp"
#include "spladelab/eval.hpp"
#include "spladelab/synthetic.hpp"
#include "spladelab/train.hpp"

namespace splade {

inline constexpr const char* kVersion = "0.1.0";

// Parsed from an INI-style "key = value" file with one section per module.
// Unset keys keep their defaults; the fingerprint covers the typed values, so
// a rerun with the same file and seed is bit-reproducible.
struct ExperimentConfig {
    // [paths]
    std::string corpus;
    std::string corpus_format = "tsv";
    std::string train_queries;
    std::string test_queries;
    std::string train_qrels;
    std::string test_qrels;
    std::string stoplist;
    std::string workdir = "runs/exp";

    // [corpus]
    bool title_augment = false;

    // [tokenizer]
    std::uint32_t max_vocab = 4000;
    std::uint32_t min_freq = 1;

    // [controller]
    std::string controller = "full";  // e.g. "stop_only:150"
    std::uint64_t controller_seed = 0;

    // [encoder]
    EncoderConfig encoder;

    // [train]
    TrainConfig train;
    bool train_dense = false;  // also fit the dense baseline on the same triples

    // [search]
    std::uint32_t k = 1000;
    std::string strategy = "maxscore";  // exhaustive | maxscore | bm25 | dense
    std::string tag = "spladelab";
    double bm25_k1 = 0.82;
    double bm25_b = 0.68;

    // [eval]
    std::vector<std::string> metrics = {"rr@10", "ndcg@10", "recall@1000"};
    int rel_threshold = 1;

    // [analyze]
    std::uint32_t prune_top = 100;

    // [matrix]
    std::vector<std::string> systems = {"full",
                                        "no_stop",
                                        "stop_only:150",
                                        "random:150",
                                        "random:768",
                                        "lowfreq:150",
                                        "lowfreq:768",
                                        "added_latent:150",
                                        "added_latent:768",
                                        "latent_only:150",
                                        "latent_only:768"};
    bool include_bm25 = true;
    bool include_dense = true;

    // [synth]
    SyntheticSpec synth;

    std::uint64_t seed = 42;

    // The key = value pairs this config was parsed from; overrides reparse
    // from here so derived defaults (like per-section seeds) stay derived.
    std::map<std::string, std::string> source;

    std::vector<Metric> metric_list() const;
    void validate_common() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::map<std::string, std::string>& kv);
// "section.key=value", same validation as the file path.
void apply_override(ExperimentConfig& config, const std::string& dotted_key, const std::string& value);
// Canonical serialization of every typed field.
std::string config_canonical(const ExperimentConfig& config);
std::uint64_t config_fingerprint(const ExperimentConfig& config);

// Artifact ledger: metadata header plus (relative path, fnv64, bytes) rows.
class Manifest {
  public:
    explicit Manifest(std::string workdir) : workdir_(std::move(workdir)) {}
    void meta(const std::string& key, const std::string& value);
    void add_file(const std::string& relative_path);
    void write(const std::string& relative_path = "manifest.tsv") const;

  private:
    std::string workdir_;
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<std::string> files_;
};

// Subcommand bodies; each writes its artifacts under config.workdir.
void run_ingest(const ExperimentConfig& config);
void run_vocab(const ExperimentConfig& config);
void run_train_cmd(const ExperimentConfig& config);
void run_index_cmd(const ExperimentConfig& config);
void run_search_cmd(const ExperimentConfig& config);
void run_eval_cmd(const ExperimentConfig& config, const std::vector<std::string>& run_files);
void run_analyze(const ExperimentConfig& config);
void run_matrix(const ExperimentConfig& config);
void run_synth(const ExperimentConfig& config);

}  // namespace splade

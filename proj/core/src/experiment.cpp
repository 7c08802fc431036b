#include "spladelab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "spladelab/hash.hpp"
#include "spladelab/index.hpp"
#include "spladelab/rng.hpp"
#include "spladelab/search.hpp"

namespace splade {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::map<std::string, std::string> parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config " + path + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw std::runtime_error("config " + path + ":" + std::to_string(line_no) + ": empty key");
        }
        kv[section.empty() ? key : section + "." + key] = value;
    }
    return kv;
}

class FieldReader {
  public:
    explicit FieldReader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback) {
        mark(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
        mark(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw std::runtime_error("config field " + key + ": '" + it->second +
                                     "' is not an integer");
        }
    }

    std::uint32_t u32(const std::string& key, std::uint32_t fallback) {
        return static_cast<std::uint32_t>(u64(key, fallback));
    }

    double real(const std::string& key, double fallback) {
        mark(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw std::runtime_error("config field " + key + ": '" + it->second + "' is not a number");
        }
    }

    bool flag(const std::string& key, bool fallback) {
        mark(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::runtime_error("config field " + key + ": '" + v + "' is not a boolean");
    }

    std::vector<std::string> list(const std::string& key, std::vector<std::string> fallback) {
        mark(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<std::string> out;
        std::istringstream ls(it->second);
        std::string item;
        while (std::getline(ls, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    void check_unknown() const {
        for (const auto& [key, value] : kv_) {
            if (!seen_.count(key)) throw std::runtime_error("unknown config field: " + key);
        }
    }

  private:
    void mark(const std::string& key) { seen_.insert(key); }
    const std::map<std::string, std::string>& kv_;
    std::set<std::string> seen_;
};

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += ',';
        out += item;
    }
    return out;
}

std::string sanitize_label(const std::string& label) {
    std::string out = label;
    for (auto& c : out) {
        if (c == ':' || c == '/' || c == ' ') c = '_';
    }
    return out;
}

double num(double v) { return v; }

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", num(v));
    return buf;
}

// ---- workdir plumbing ----

std::string wpath(const ExperimentConfig& config, const std::string& rel) {
    return (fs::path(config.workdir) / rel).string();
}

void ensure_workdir(const ExperimentConfig& config, const std::string& sub = "") {
    fs::create_directories(sub.empty() ? fs::path(config.workdir) : fs::path(config.workdir) / sub);
}

Corpus load_corpus_from_config(const ExperimentConfig& config) {
    if (config.corpus.empty()) throw std::runtime_error("config field paths.corpus is required");
    return load_corpus(config.corpus, parse_corpus_format(config.corpus_format),
                       config.title_augment);
}

BaseVocabulary load_vocab_artifact(const ExperimentConfig& config) {
    std::string path = wpath(config, "vocab.txt");
    if (!fs::exists(path)) {
        throw std::runtime_error("missing " + path + " (run 'splade-lab vocab' first)");
    }
    return load_vocabulary(path);
}

VocabularyController load_controller_artifact(const ExperimentConfig& config,
                                              const BaseVocabulary& vocab) {
    std::string path = wpath(config, "controller.txt");
    if (!fs::exists(path)) {
        throw std::runtime_error("missing " + path + " (run 'splade-lab vocab' first)");
    }
    return load_controller(path, vocab);
}

std::uint64_t effective_controller_seed(const ExperimentConfig& config) {
    return config.controller_seed != 0 ? config.controller_seed : config.seed;
}

void write_freq_tsv(const FrequencyTable& freq, const BaseVocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write frequency table: " + path);
    out << "token_id\ttoken\tcount\n";
    for (std::uint32_t id = 0; id < freq.counts.size(); ++id) {
        out << id << '\t' << vocab.token_of(id) << '\t' << freq.counts[id] << '\n';
    }
}

FrequencyTable load_freq_tsv(const std::string& path, const BaseVocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open frequency table: " + path);
    FrequencyTable freq;
    freq.counts.assign(vocab.size(), 0);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::uint32_t id = 0;
        std::string token;
        std::uint64_t count = 0;
        if (!(ls >> id) || !(ls >> token) || !(ls >> count)) {
            throw std::runtime_error("malformed frequency row in " + path);
        }
        if (id >= freq.counts.size()) throw std::runtime_error("frequency id out of range in " + path);
        freq.counts[id] = count;
        freq.total_tokens += count;
    }
    return freq;
}

std::vector<std::string> stoplist_or_empty(const ExperimentConfig& config) {
    if (config.stoplist.empty()) return {};
    return load_stoplist(config.stoplist);
}

void base_manifest_meta(Manifest& manifest, const ExperimentConfig& config) {
    manifest.meta("version", kVersion);
    manifest.meta("seed", std::to_string(config.seed));
    manifest.meta("config_hash", hash_hex(config_fingerprint(config)));
    // Modelling choices that the literature leaves open, recorded for audit.
    manifest.meta("pooling_includes_specials", "true");
    manifest.meta("vocab_mask_point", "mlm_logits");
}

std::vector<Ranking> sparse_search_rankings(const EncoderParams& params,
                                            const VocabularyController& controller,
                                            const InvertedIndex& index,
                                            const std::vector<Query>& queries, std::uint32_t k,
                                            const std::string& strategy) {
    const auto mask = allowed_mask(controller);
    std::vector<Ranking> rankings;
    rankings.reserve(queries.size());
    for (const auto& query : queries) {
        TokenSequence tokens = tokenize(query.text, controller.base, params.config.max_len);
        SparseVector q = encode_tokens(params, mask, tokens);
        rankings.push_back(strategy == "exhaustive" ? search_exhaustive(index, q, k, query.query_id)
                                                    : search_maxscore(index, q, k, query.query_id));
    }
    return rankings;
}

Eigen::MatrixXd dense_corpus_matrix(const EncoderParams& params, const BaseVocabulary& vocab,
                                    const Corpus& corpus) {
    Eigen::MatrixXd docs(corpus.docs.size(), params.config.d_model);
    std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, corpus.docs.size());
    std::vector<std::future<void>> tasks;
    for (std::size_t w = 0; w < workers; ++w) {
        tasks.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < corpus.docs.size(); i += workers) {
                docs.row(static_cast<Eigen::Index>(i)) =
                    encode_dense(params, vocab, corpus.visible_text(i)).transpose();
            }
        }));
    }
    for (auto& task : tasks) task.get();
    return docs;
}

}  // namespace

std::vector<Metric> ExperimentConfig::metric_list() const {
    std::vector<Metric> out;
    for (const auto& name : metrics) out.push_back(parse_metric(name));
    return out;
}

void ExperimentConfig::validate_common() const {
    if (workdir.empty()) throw std::runtime_error("config field paths.workdir must not be empty");
    if (k == 0) throw std::runtime_error("config field search.k must be positive");
    if (strategy != "maxscore" && strategy != "exhaustive" && strategy != "bm25" &&
        strategy != "dense") {
        throw std::runtime_error("config field search.strategy: unknown strategy '" + strategy + "'");
    }
    encoder.validate();
    train.validate();
    metric_list();
    parse_corpus_format(corpus_format);
}

ExperimentConfig parse_experiment_config(const std::map<std::string, std::string>& kv) {
    FieldReader reader(kv);
    ExperimentConfig config;

    config.seed = reader.u64("seed.seed", reader.u64("seed", config.seed));

    config.corpus = reader.str("paths.corpus", config.corpus);
    config.corpus_format = reader.str("paths.corpus_format", config.corpus_format);
    config.train_queries = reader.str("paths.train_queries", config.train_queries);
    config.test_queries = reader.str("paths.test_queries", config.test_queries);
    config.train_qrels = reader.str("paths.train_qrels", config.train_qrels);
    config.test_qrels = reader.str("paths.test_qrels", config.test_qrels);
    config.stoplist = reader.str("paths.stoplist", config.stoplist);
    config.workdir = reader.str("paths.workdir", config.workdir);

    config.title_augment = reader.flag("corpus.title_augment", config.title_augment);

    config.max_vocab = reader.u32("tokenizer.max_vocab", config.max_vocab);
    config.min_freq = reader.u32("tokenizer.min_freq", config.min_freq);

    config.controller = reader.str("controller.kind", config.controller);
    config.controller_seed = reader.u64("controller.seed", config.controller_seed);

    config.encoder.d_model = reader.u32("encoder.d_model", config.encoder.d_model);
    config.encoder.n_layers = reader.u32("encoder.n_layers", config.encoder.n_layers);
    config.encoder.n_heads = reader.u32("encoder.n_heads", config.encoder.n_heads);
    config.encoder.d_ff = reader.u32("encoder.d_ff", config.encoder.d_ff);
    config.encoder.max_len = reader.u32("encoder.max_len", config.encoder.max_len);
    config.encoder.tie_embeddings = reader.flag("encoder.tie_embeddings", config.encoder.tie_embeddings);
    config.encoder.mlm_activation =
        parse_activation(reader.str("encoder.mlm_activation", activation_name(config.encoder.mlm_activation)));

    config.train.batch_size = reader.u32("train.batch_size", config.train.batch_size);
    config.train.n_hard = reader.u32("train.n_hard", config.train.n_hard);
    config.train.learning_rate = reader.real("train.learning_rate", config.train.learning_rate);
    config.train.momentum = reader.real("train.momentum", config.train.momentum);
    config.train.epochs = reader.u32("train.epochs", config.train.epochs);
    config.train.max_steps = reader.u32("train.max_steps", config.train.max_steps);
    config.train.lambda_q = reader.real("train.lambda_q", config.train.lambda_q);
    config.train.lambda_d = reader.real("train.lambda_d", config.train.lambda_d);
    config.train.warmup_steps = reader.u32("train.warmup_steps", config.train.warmup_steps);
    config.train.mine_depth = reader.u32("train.mine_depth", config.train.mine_depth);
    config.train.seed = reader.u64("train.seed", config.seed);
    config.train.rel_threshold = static_cast<int>(reader.u32("train.rel_threshold", 1));
    config.train_dense = reader.flag("train.train_dense", config.train_dense);

    config.k = reader.u32("search.k", config.k);
    config.strategy = reader.str("search.strategy", config.strategy);
    config.tag = reader.str("search.tag", config.tag);
    config.bm25_k1 = reader.real("search.bm25_k1", config.bm25_k1);
    config.bm25_b = reader.real("search.bm25_b", config.bm25_b);

    config.metrics = reader.list("eval.metrics", config.metrics);
    config.rel_threshold = static_cast<int>(reader.u32("eval.rel_threshold", 1));

    config.prune_top = reader.u32("analyze.prune_top", config.prune_top);

    config.systems = reader.list("matrix.systems", config.systems);
    config.include_bm25 = reader.flag("matrix.include_bm25", config.include_bm25);
    config.include_dense = reader.flag("matrix.include_dense", config.include_dense);

    config.synth.seed = reader.u64("synth.seed", config.seed);
    config.synth.n_docs = reader.u32("synth.n_docs", config.synth.n_docs);
    config.synth.n_train_queries = reader.u32("synth.n_train_queries", config.synth.n_train_queries);
    config.synth.n_test_queries = reader.u32("synth.n_test_queries", config.synth.n_test_queries);
    config.synth.n_words = reader.u32("synth.n_words", config.synth.n_words);
    config.synth.doc_len_min = reader.u32("synth.doc_len_min", config.synth.doc_len_min);
    config.synth.doc_len_max = reader.u32("synth.doc_len_max", config.synth.doc_len_max);
    config.synth.query_len_min = reader.u32("synth.query_len_min", config.synth.query_len_min);
    config.synth.query_len_max = reader.u32("synth.query_len_max", config.synth.query_len_max);
    config.synth.zipf_exponent = reader.real("synth.zipf_exponent", config.synth.zipf_exponent);
    config.synth.title_fraction = reader.real("synth.title_fraction", config.synth.title_fraction);
    config.synth.stopword_fraction =
        reader.real("synth.stopword_fraction", config.synth.stopword_fraction);

    reader.check_unknown();
    config.validate_common();
    config.source = kv;
    return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(parse_ini(path));
}

void apply_override(ExperimentConfig& config, const std::string& dotted_key, const std::string& value) {
    std::map<std::string, std::string> kv = config.source;
    kv[dotted_key] = value;
    config = parse_experiment_config(kv);
}

std::string config_canonical(const ExperimentConfig& config) {
    std::ostringstream out;
    out << "seed.seed=" << config.seed << '\n';
    out << "paths.corpus=" << config.corpus << '\n';
    out << "paths.corpus_format=" << config.corpus_format << '\n';
    out << "paths.train_queries=" << config.train_queries << '\n';
    out << "paths.test_queries=" << config.test_queries << '\n';
    out << "paths.train_qrels=" << config.train_qrels << '\n';
    out << "paths.test_qrels=" << config.test_qrels << '\n';
    out << "paths.stoplist=" << config.stoplist << '\n';
    // workdir is deliberately absent: where artifacts land is not part of
    // the experiment's identity.
    out << "corpus.title_augment=" << bool_str(config.title_augment) << '\n';
    out << "tokenizer.max_vocab=" << config.max_vocab << '\n';
    out << "tokenizer.min_freq=" << config.min_freq << '\n';
    out << "controller.kind=" << config.controller << '\n';
    out << "controller.seed=" << config.controller_seed << '\n';
    out << "encoder.d_model=" << config.encoder.d_model << '\n';
    out << "encoder.n_layers=" << config.encoder.n_layers << '\n';
    out << "encoder.n_heads=" << config.encoder.n_heads << '\n';
    out << "encoder.d_ff=" << config.encoder.d_ff << '\n';
    out << "encoder.max_len=" << config.encoder.max_len << '\n';
    out << "encoder.tie_embeddings=" << bool_str(config.encoder.tie_embeddings) << '\n';
    out << "encoder.mlm_activation=" << activation_name(config.encoder.mlm_activation) << '\n';
    out << "train.batch_size=" << config.train.batch_size << '\n';
    out << "train.n_hard=" << config.train.n_hard << '\n';
    out << "train.learning_rate=" << fmt_double(config.train.learning_rate) << '\n';
    out << "train.momentum=" << fmt_double(config.train.momentum) << '\n';
    out << "train.epochs=" << config.train.epochs << '\n';
    out << "train.max_steps=" << config.train.max_steps << '\n';
    out << "train.lambda_q=" << fmt_double(config.train.lambda_q) << '\n';
    out << "train.lambda_d=" << fmt_double(config.train.lambda_d) << '\n';
    out << "train.warmup_steps=" << config.train.warmup_steps << '\n';
    out << "train.mine_depth=" << config.train.mine_depth << '\n';
    out << "train.seed=" << config.train.seed << '\n';
    out << "train.rel_threshold=" << config.train.rel_threshold << '\n';
    out << "train.train_dense=" << bool_str(config.train_dense) << '\n';
    out << "search.k=" << config.k << '\n';
    out << "search.strategy=" << config.strategy << '\n';
    out << "search.tag=" << config.tag << '\n';
    out << "search.bm25_k1=" << fmt_double(config.bm25_k1) << '\n';
    out << "search.bm25_b=" << fmt_double(config.bm25_b) << '\n';
    out << "eval.metrics=" << join(config.metrics) << '\n';
    out << "eval.rel_threshold=" << config.rel_threshold << '\n';
    out << "analyze.prune_top=" << config.prune_top << '\n';
    out << "matrix.systems=" << join(config.systems) << '\n';
    out << "matrix.include_bm25=" << bool_str(config.include_bm25) << '\n';
    out << "matrix.include_dense=" << bool_str(config.include_dense) << '\n';
    out << "synth.seed=" << config.synth.seed << '\n';
    out << "synth.n_docs=" << config.synth.n_docs << '\n';
    out << "synth.n_train_queries=" << config.synth.n_train_queries << '\n';
    out << "synth.n_test_queries=" << config.synth.n_test_queries << '\n';
    out << "synth.n_words=" << config.synth.n_words << '\n';
    out << "synth.doc_len_min=" << config.synth.doc_len_min << '\n';
    out << "synth.doc_len_max=" << config.synth.doc_len_max << '\n';
    out << "synth.query_len_min=" << config.synth.query_len_min << '\n';
    out << "synth.query_len_max=" << config.synth.query_len_max << '\n';
    out << "synth.zipf_exponent=" << fmt_double(config.synth.zipf_exponent) << '\n';
    out << "synth.title_fraction=" << fmt_double(config.synth.title_fraction) << '\n';
    out << "synth.stopword_fraction=" << fmt_double(config.synth.stopword_fraction) << '\n';
    return out.str();
}

std::uint64_t config_fingerprint(const ExperimentConfig& config) {
    return fnv1a64(config_canonical(config));
}

void Manifest::meta(const std::string& key, const std::string& value) {
    meta_.emplace_back(key, value);
}

void Manifest::add_file(const std::string& relative_path) {
    files_.push_back(relative_path);
}

void Manifest::write(const std::string& relative_path) const {
    std::vector<std::string> files = files_;
    std::sort(files.begin(), files.end());
    std::ofstream out((fs::path(workdir_) / relative_path).string());
    if (!out) throw std::runtime_error("cannot write manifest in " + workdir_);
    for (const auto& [key, value] : meta_) out << "# " << key << "=" << value << '\n';
    out << "path\tfnv64\tbytes\n";
    for (const auto& file : files) {
        std::string full = (fs::path(workdir_) / file).string();
        out << file << '\t' << hash_hex(fnv1a64_file(full)) << '\t' << fs::file_size(full) << '\n';
    }
}

void run_ingest(const ExperimentConfig& config) {
    ensure_workdir(config);
    Corpus corpus = load_corpus_from_config(config);
    save_corpus_tsv(corpus, wpath(config, "corpus.tsv"));
    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.meta("documents", std::to_string(corpus.docs.size()));
    manifest.meta("title_augment", bool_str(config.title_augment));
    manifest.add_file("corpus.tsv");
    manifest.write("manifest_ingest.tsv");
}

void run_vocab(const ExperimentConfig& config) {
    ensure_workdir(config);
    Corpus corpus = load_corpus_from_config(config);
    BaseVocabulary vocab = train_tokenizer(corpus, config.max_vocab, config.min_freq);
    save_vocabulary(vocab, wpath(config, "vocab.txt"));
    FrequencyTable freq = token_frequencies(corpus, vocab);
    write_freq_tsv(freq, vocab, wpath(config, "freq.tsv"));
    ControllerSpec spec = parse_controller_spec(config.controller, effective_controller_seed(config));
    VocabularyController controller = build_controller(spec, vocab, freq, stoplist_or_empty(config));
    save_controller(controller, wpath(config, "controller.txt"));

    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.meta("vocab_size", std::to_string(vocab.size()));
    manifest.meta("controller", controller_spec_label(spec));
    manifest.meta("controller_allowed", std::to_string(controller.allowed.size()));
    manifest.meta("controller_output_dim", std::to_string(controller.output_dim));
    manifest.meta("stoplist_overlap", std::to_string(controller.stoplist_overlap));
    manifest.meta("stoplist_truncated", bool_str(controller.stoplist_truncated));
    manifest.add_file("vocab.txt");
    manifest.add_file("freq.tsv");
    manifest.add_file("controller.txt");
    manifest.write("manifest_vocab.tsv");
}

void run_train_cmd(const ExperimentConfig& config) {
    ensure_workdir(config);
    Corpus corpus = load_corpus_from_config(config);
    if (config.train_queries.empty() || config.train_qrels.empty()) {
        throw std::runtime_error("config fields paths.train_queries/paths.train_qrels are required");
    }
    std::vector<Query> queries = load_queries(config.train_queries);
    Qrels qrels = load_qrels(config.train_qrels);
    BaseVocabulary vocab = load_vocab_artifact(config);
    VocabularyController controller = load_controller_artifact(config, vocab);

    TrainResult result = train(config.train, config.encoder, corpus, queries, qrels, controller);
    save_params(result.params, wpath(config, "checkpoint.bin"));
    write_training_log(result.log, wpath(config, "train_log.tsv"));
    save_triples(result.mining.triples, wpath(config, "triples.tsv"));

    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.meta("steps", std::to_string(result.log.size()));
    manifest.meta("triples", std::to_string(result.mining.triples.size()));
    manifest.meta("skipped_queries", std::to_string(result.mining.skipped_query_ids.size()));
    manifest.add_file("checkpoint.bin");
    manifest.add_file("train_log.tsv");
    manifest.add_file("triples.tsv");
    if (config.train_dense) {
        TrainResult dense = train_with_triples(config.train, config.encoder, corpus, queries,
                                               result.mining, controller, ModelKind::dense);
        save_params(dense.params, wpath(config, "dense_checkpoint.bin"));
        write_training_log(dense.log, wpath(config, "dense_train_log.tsv"));
        manifest.add_file("dense_checkpoint.bin");
        manifest.add_file("dense_train_log.tsv");
    }
    manifest.write("manifest_train.tsv");
}

void run_index_cmd(const ExperimentConfig& config) {
    ensure_workdir(config);
    Corpus corpus = load_corpus_from_config(config);
    BaseVocabulary vocab = load_vocab_artifact(config);
    VocabularyController controller = load_controller_artifact(config, vocab);
    EncoderParams params = load_params(wpath(config, "checkpoint.bin"));
    InvertedIndex index = build_index(params, controller, corpus);
    save_index(index, wpath(config, "index.bin"));
    write_index_stats_tsv(index_stats(index, &controller), wpath(config, "index_stats.tsv"));

    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.meta("documents", std::to_string(index.doc_count));
    manifest.meta("postings_lists", std::to_string(index.lists.size()));
    manifest.meta("postings", std::to_string(index.total_postings()));
    manifest.meta("quant_scale", fmt_double(index.quant_scale));
    manifest.add_file("index.bin");
    manifest.add_file("index_stats.tsv");
    manifest.write("manifest_index.tsv");
}

void run_search_cmd(const ExperimentConfig& config) {
    ensure_workdir(config);
    if (config.test_queries.empty()) {
        throw std::runtime_error("config field paths.test_queries is required");
    }
    std::vector<Query> queries = load_queries(config.test_queries);
    std::vector<Ranking> rankings;

    if (config.strategy == "bm25") {
        Corpus corpus = load_corpus_from_config(config);
        BaseVocabulary vocab = load_vocab_artifact(config);
        Bm25Searcher bm25(corpus, vocab);
        for (const auto& query : queries) {
            rankings.push_back(bm25.search_text(query.text, config.k, config.bm25_k1, config.bm25_b,
                                                query.query_id));
        }
    } else if (config.strategy == "dense") {
        Corpus corpus = load_corpus_from_config(config);
        BaseVocabulary vocab = load_vocab_artifact(config);
        EncoderParams params = load_params(wpath(config, "dense_checkpoint.bin"));
        Eigen::MatrixXd docs = dense_corpus_matrix(params, vocab, corpus);
        std::vector<std::string> doc_ids;
        for (const auto& doc : corpus.docs) doc_ids.push_back(doc.doc_id);
        for (const auto& query : queries) {
            Eigen::VectorXd q = encode_dense(params, vocab, query.text);
            rankings.push_back(search_dense_bruteforce(docs, doc_ids, q, config.k, query.query_id));
        }
    } else {
        BaseVocabulary vocab = load_vocab_artifact(config);
        VocabularyController controller = load_controller_artifact(config, vocab);
        EncoderParams params = load_params(wpath(config, "checkpoint.bin"));
        InvertedIndex index = load_index(wpath(config, "index.bin"));
        rankings = sparse_search_rankings(params, controller, index, queries, config.k,
                                          config.strategy);
    }
    write_run(rankings, config.tag, wpath(config, "run.trec"));

    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.meta("strategy", config.strategy);
    manifest.meta("queries", std::to_string(queries.size()));
    manifest.add_file("run.trec");
    manifest.write("manifest_search.tsv");
}

void run_eval_cmd(const ExperimentConfig& config, const std::vector<std::string>& run_files) {
    ensure_workdir(config);
    if (config.test_qrels.empty()) throw std::runtime_error("config field paths.test_qrels is required");
    Qrels qrels = load_qrels(config.test_qrels);
    std::vector<std::string> paths = run_files;
    if (paths.empty()) paths.push_back(wpath(config, "run.trec"));
    EvalReport report = evaluate_run_files(paths, qrels, config.metric_list(), config.rel_threshold);
    write_report_tsv(report, wpath(config, "report.tsv"));
    write_per_query_tsv(report, wpath(config, "perquery.tsv"));

    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.add_file("report.tsv");
    manifest.add_file("perquery.tsv");
    if (report.systems.size() >= 2) {
        for (Metric m : config.metric_list()) {
            std::string name = std::string("significance_") + metric_name(m) + ".tsv";
            write_significance_tsv(report, m, wpath(config, name));
            manifest.add_file(name);
        }
    }
    manifest.write("manifest_eval.tsv");
}

void run_analyze(const ExperimentConfig& config) {
    ensure_workdir(config);
    if (config.test_queries.empty() || config.test_qrels.empty()) {
        throw std::runtime_error("config fields paths.test_queries/paths.test_qrels are required");
    }
    std::vector<Query> queries = load_queries(config.test_queries);
    Qrels qrels = load_qrels(config.test_qrels);
    BaseVocabulary vocab = load_vocab_artifact(config);
    VocabularyController controller = load_controller_artifact(config, vocab);
    EncoderParams params = load_params(wpath(config, "checkpoint.bin"));
    InvertedIndex index = load_index(wpath(config, "index.bin"));

    std::vector<ExpansionStat> stats = expansion_stats(params, controller, queries, index);
    write_expansion_stats_tsv(stats, queries.size(), wpath(config, "expansion_stats.tsv"));

    std::set<std::uint32_t> banned;
    for (const auto& stat : stats) {
        if (banned.size() >= config.prune_top) break;
        banned.insert(stat.term_id);
    }
    {
        std::ofstream out(wpath(config, "banned_terms.tsv"));
        out << "term_id\tterm\n";
        for (std::uint32_t id : banned) out << id << '\t' << controller.dim_name(id) << '\n';
    }

    // Query-time pruning, no re-training: document index stays untouched.
    const auto mask = allowed_mask(controller);
    std::vector<Ranking> full_rankings, pruned_rankings;
    for (const auto& query : queries) {
        TokenSequence tokens = tokenize(query.text, controller.base, params.config.max_len);
        SparseVector q = encode_tokens(params, mask, tokens);
        SparseVector pruned = prune_query_terms(q, banned);
        for (const auto& [dim, impact] : pruned.entries) {
            if (banned.count(dim)) {
                throw std::logic_error("pruned query support intersects the banned set");
            }
        }
        std::string strategy = config.strategy == "exhaustive" ? "exhaustive" : "maxscore";
        full_rankings.push_back(strategy == "exhaustive"
                                    ? search_exhaustive(index, q, config.k, query.query_id)
                                    : search_maxscore(index, q, config.k, query.query_id));
        pruned_rankings.push_back(strategy == "exhaustive"
                                      ? search_exhaustive(index, pruned, config.k, query.query_id)
                                      : search_maxscore(index, pruned, config.k, query.query_id));
    }
    SystemEval full_eval = evaluate_rankings("full", full_rankings, qrels, {Metric::rr10},
                                             config.rel_threshold);
    SystemEval pruned_eval = evaluate_rankings("pruned", pruned_rankings, qrels, {Metric::rr10},
                                               config.rel_threshold);
    double rr_full = full_eval.means.at(Metric::rr10);
    double rr_pruned = pruned_eval.means.at(Metric::rr10);
    {
        std::ofstream out(wpath(config, "prune_report.tsv"));
        char buf[160];
        out << "setting\trr@10\n";
        std::snprintf(buf, sizeof(buf), "full\t%.6f\n", rr_full);
        out << buf;
        std::snprintf(buf, sizeof(buf), "pruned_top%u\t%.6f\n", config.prune_top, rr_pruned);
        out << buf;
        std::snprintf(buf, sizeof(buf), "delta\t%.6f\n", rr_pruned - rr_full);
        out << buf;
    }

    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.meta("banned_terms", std::to_string(banned.size()));
    manifest.meta("rr10_full", fmt_double(rr_full));
    manifest.meta("rr10_pruned", fmt_double(rr_pruned));
    manifest.add_file("expansion_stats.tsv");
    manifest.add_file("banned_terms.tsv");
    manifest.add_file("prune_report.tsv");
    manifest.write("manifest_analyze.tsv");
}

void run_matrix(const ExperimentConfig& config) {
    ensure_workdir(config);
    ensure_workdir(config, "shared");
    if (config.train_queries.empty() || config.test_queries.empty() || config.train_qrels.empty() ||
        config.test_qrels.empty()) {
        throw std::runtime_error("matrix needs paths.train_queries/test_queries/train_qrels/test_qrels");
    }
    Corpus corpus = load_corpus_from_config(config);
    std::vector<Query> train_queries = load_queries(config.train_queries);
    std::vector<Query> test_queries = load_queries(config.test_queries);
    Qrels train_qrels = load_qrels(config.train_qrels);
    Qrels test_qrels = load_qrels(config.test_qrels);

    // Shared backbone artifacts: tokenizer, frequencies, BM25, mined triples.
    BaseVocabulary vocab = train_tokenizer(corpus, config.max_vocab, config.min_freq);
    save_vocabulary(vocab, wpath(config, "shared/vocab.txt"));
    FrequencyTable freq = token_frequencies(corpus, vocab);
    write_freq_tsv(freq, vocab, wpath(config, "shared/freq.tsv"));
    std::vector<std::string> stoplist = stoplist_or_empty(config);
    Bm25Searcher bm25(corpus, vocab);
    MiningResult mining = mine_hard_negatives(bm25, train_queries, train_qrels,
                                              config.train.mine_depth, config.train.n_hard,
                                              Rng(config.train.seed).fork(0x11u).next_u64(),
                                              config.train.rel_threshold);
    save_triples(mining.triples, wpath(config, "shared/triples.tsv"));

    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.add_file("shared/vocab.txt");
    manifest.add_file("shared/freq.tsv");
    manifest.add_file("shared/triples.tsv");

    struct Row {
        std::string label;
        std::string dir;  // workdir-relative
        std::vector<Ranking> rankings;
        std::vector<std::string> artifacts;
        std::vector<std::pair<std::string, std::string>> meta;
    };
    std::vector<Row> rows;
    if (config.include_bm25) rows.push_back(Row{"bm25", "systems/bm25", {}, {}, {}});
    if (config.include_dense) rows.push_back(Row{"dense", "systems/dense", {}, {}, {}});
    for (const auto& system : config.systems) {
        rows.push_back(Row{system, "systems/" + sanitize_label(system), {}, {}, {}});
    }
    for (const auto& row : rows) ensure_workdir(config, row.dir);

    std::string sparse_strategy = config.strategy == "exhaustive" ? "exhaustive" : "maxscore";
    auto run_row = [&](Row& row) {
        if (row.label == "bm25") {
            for (const auto& query : test_queries) {
                row.rankings.push_back(bm25.search_text(query.text, config.k, config.bm25_k1,
                                                        config.bm25_b, query.query_id));
            }
            write_run(row.rankings, "bm25", wpath(config, row.dir + "/run.trec"));
            row.artifacts.push_back(row.dir + "/run.trec");
            return;
        }
        if (row.label == "dense") {
            TrainResult result = train_with_triples(config.train, config.encoder, corpus,
                                                    train_queries, mining,
                                                    build_controller(ControllerSpec{}, vocab, freq,
                                                                     stoplist),
                                                    ModelKind::dense);
            save_params(result.params, wpath(config, row.dir + "/checkpoint.bin"));
            write_training_log(result.log, wpath(config, row.dir + "/train_log.tsv"));
            Eigen::MatrixXd docs = dense_corpus_matrix(result.params, vocab, corpus);
            std::vector<std::string> doc_ids;
            for (const auto& doc : corpus.docs) doc_ids.push_back(doc.doc_id);
            for (const auto& query : test_queries) {
                Eigen::VectorXd q = encode_dense(result.params, vocab, query.text);
                row.rankings.push_back(search_dense_bruteforce(docs, doc_ids, q, config.k,
                                                               query.query_id));
            }
            write_run(row.rankings, "dense", wpath(config, row.dir + "/run.trec"));
            row.artifacts = {row.dir + "/checkpoint.bin", row.dir + "/train_log.tsv",
                             row.dir + "/run.trec"};
            return;
        }
        ControllerSpec spec = parse_controller_spec(row.label, effective_controller_seed(config));
        VocabularyController controller = build_controller(spec, vocab, freq, stoplist);
        save_controller(controller, wpath(config, row.dir + "/controller.txt"));
        TrainResult result = train_with_triples(config.train, config.encoder, corpus, train_queries,
                                                mining, controller, ModelKind::sparse);
        save_params(result.params, wpath(config, row.dir + "/checkpoint.bin"));
        write_training_log(result.log, wpath(config, row.dir + "/train_log.tsv"));
        InvertedIndex index = build_index(result.params, controller, corpus);
        save_index(index, wpath(config, row.dir + "/index.bin"));
        write_index_stats_tsv(index_stats(index, &controller),
                              wpath(config, row.dir + "/index_stats.tsv"));
        row.rankings = sparse_search_rankings(result.params, controller, index, test_queries,
                                              config.k, sparse_strategy);
        write_run(row.rankings, sanitize_label(row.label), wpath(config, row.dir + "/run.trec"));
        row.artifacts = {row.dir + "/controller.txt", row.dir + "/checkpoint.bin",
                         row.dir + "/train_log.tsv", row.dir + "/index.bin",
                         row.dir + "/index_stats.tsv", row.dir + "/run.trec"};
        row.meta.emplace_back("stoplist_overlap", std::to_string(controller.stoplist_overlap));
        row.meta.emplace_back("postings", std::to_string(index.total_postings()));
    };

    // Rows are independent; run a bounded number concurrently. Every row is
    // fully seeded, so scheduling cannot change any output byte.
    std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, rows.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> tasks;
    for (std::size_t w = 0; w < workers; ++w) {
        tasks.push_back(std::async(std::launch::async, [&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= rows.size()) return;
                run_row(rows[i]);
            }
        }));
    }
    for (auto& task : tasks) task.get();

    std::vector<std::pair<std::string, std::vector<Ranking>>> runs;
    for (auto& row : rows) runs.emplace_back(row.label, std::move(row.rankings));
    EvalReport report = evaluate_runs(runs, test_qrels, config.metric_list(), config.rel_threshold);
    write_report_tsv(report, wpath(config, "report.tsv"));
    write_per_query_tsv(report, wpath(config, "perquery.tsv"));
    for (Metric m : config.metric_list()) {
        std::string name = std::string("significance_") + metric_name(m) + ".tsv";
        write_significance_tsv(report, m, wpath(config, name));
        manifest.add_file(name);
    }

    for (const auto& row : rows) {
        for (const auto& artifact : row.artifacts) manifest.add_file(artifact);
        for (const auto& [key, value] : row.meta) manifest.meta(row.label + "." + key, value);
    }
    manifest.add_file("report.tsv");
    manifest.add_file("perquery.tsv");
    manifest.write("manifest.tsv");
}

void run_synth(const ExperimentConfig& config) {
    ensure_workdir(config);
    SyntheticSpec spec = config.synth;
    if (!config.stoplist.empty()) spec.stopwords = load_stoplist(config.stoplist);
    SyntheticData data = generate_synthetic(spec);
    write_synthetic(data, config.workdir);
    Manifest manifest(config.workdir);
    base_manifest_meta(manifest, config);
    manifest.meta("synth_seed", std::to_string(config.synth.seed));
    manifest.add_file("corpus.tsv");
    manifest.add_file("train_queries.tsv");
    manifest.add_file("test_queries.tsv");
    manifest.add_file("train_qrels.txt");
    manifest.add_file("test_qrels.txt");
    manifest.write("manifest_synth.tsv");
}

}  // namespace splade

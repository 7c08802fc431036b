#include "spladelab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "spladelab/rng.hpp"

namespace splade {

namespace {

std::unordered_map<std::string, std::size_t> id_lookup(const Corpus& corpus) {
    std::unordered_map<std::string, std::size_t> lookup;
    lookup.reserve(corpus.docs.size());
    for (std::size_t i = 0; i < corpus.docs.size(); ++i) lookup.emplace(corpus.docs[i].doc_id, i);
    return lookup;
}

}  // namespace

std::vector<int> Batch::positive_indices() const {
    std::vector<int> positives(queries.size());
    for (std::size_t r = 0; r < queries.size(); ++r) {
        positives[r] = static_cast<int>(r * docs_per_query());
    }
    return positives;
}

void Batch::validate() const {
    if (queries.empty()) throw std::runtime_error("batch: no queries");
    if (docs.size() != queries.size() * docs_per_query()) {
        throw std::runtime_error("batch: docs size must be batch_size * (1 + n_hard)");
    }
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::runtime_error("train config: batch_size must be positive");
    if (learning_rate <= 0.0) throw std::runtime_error("train config: learning_rate must be positive");
    if (lambda_q < 0.0 || lambda_d < 0.0) {
        throw std::runtime_error("train config: lambda weights must be nonnegative");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::runtime_error("train config: momentum must be in [0, 1)");
    }
}

MiningResult mine_hard_negatives(const Bm25Searcher& bm25, const std::vector<Query>& queries,
                                 const Qrels& qrels, std::size_t depth, std::size_t n_hard,
                                 std::uint64_t seed, int rel_threshold) {
    MiningResult result;
    Rng rng(seed);
    bool any_judged = false;
    for (const auto& query : queries) {
        std::vector<std::string> positives;
        auto qit = qrels.grades.find(query.query_id);
        if (qit != qrels.grades.end()) {
            for (const auto& [doc_id, grade] : qit->second) {
                if (grade >= rel_threshold) positives.push_back(doc_id);
            }
        }
        if (positives.empty()) {
            result.skipped_query_ids.push_back(query.query_id);
            continue;
        }
        any_judged = true;
        Ranking top = bm25.search_text(query.text, static_cast<std::uint32_t>(depth), 0.82, 0.68,
                                       query.query_id);
        std::vector<std::string> candidates;
        candidates.reserve(top.hits.size());
        for (const auto& hit : top.hits) {
            if (qrels.grade(query.query_id, hit.doc_id) >= rel_threshold) continue;
            candidates.push_back(hit.doc_id);
        }
        if (candidates.size() < n_hard) {
            result.skipped_query_ids.push_back(query.query_id);
            continue;
        }
        TrainingTriple triple;
        triple.query_id = query.query_id;
        triple.positive_doc_id = positives[rng.uniform_int(positives.size())];
        for (auto pick : rng.sample_without_replacement(candidates.size(), n_hard)) {
            triple.hard_negative_doc_ids.push_back(candidates[pick]);
        }
        result.triples.push_back(std::move(triple));
    }
    if (!any_judged) {
        throw std::runtime_error("mine_hard_negatives: no query has usable judgments");
    }
    return result;
}

void save_triples(const std::vector<TrainingTriple>& triples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write triples file: " + path);
    for (const auto& triple : triples) {
        out << triple.query_id << '\t' << triple.positive_doc_id << '\t';
        for (std::size_t i = 0; i < triple.hard_negative_doc_ids.size(); ++i) {
            if (i) out << ',';
            out << triple.hard_negative_doc_ids[i];
        }
        out << '\n';
    }
}

std::vector<TrainingTriple> load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open triples file: " + path);
    std::vector<TrainingTriple> triples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        TrainingTriple triple;
        std::string negatives;
        if (!std::getline(ls, triple.query_id, '\t') ||
            !std::getline(ls, triple.positive_doc_id, '\t') || !std::getline(ls, negatives)) {
            throw std::runtime_error("malformed triple at " + path + ":" + std::to_string(line_no));
        }
        std::istringstream ns(negatives);
        std::string neg;
        while (std::getline(ns, neg, ',')) {
            if (!neg.empty()) triple.hard_negative_doc_ids.push_back(neg);
        }
        triples.push_back(std::move(triple));
    }
    return triples;
}

double lambda_at(double lambda, std::uint32_t warmup_steps, std::uint64_t step) {
    if (warmup_steps == 0 || step >= warmup_steps) return lambda;
    double t = static_cast<double>(step) / static_cast<double>(warmup_steps);
    return lambda * t * t;
}

double contrastive_loss(const Eigen::MatrixXd& scores, const std::vector<int>& positive) {
    if (static_cast<std::size_t>(scores.rows()) != positive.size()) {
        throw std::runtime_error("contrastive_loss: one positive index per row required");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        int pos = positive[static_cast<std::size_t>(r)];
        if (pos < 0 || pos >= scores.cols()) {
            throw std::runtime_error("contrastive_loss: positive index out of range");
        }
        double m = scores.row(r).maxCoeff();
        double lse = m + std::log((scores.row(r).array() - m).exp().sum());
        total += lse - scores(r, pos);
    }
    return total / static_cast<double>(scores.rows());
}

double flops_loss(const std::vector<SparseVector>& reps, std::uint32_t output_dim) {
    if (reps.empty()) return 0.0;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(output_dim);
    for (const auto& rep : reps) {
        for (const auto& [dim, impact] : rep.entries) {
            if (dim >= output_dim) throw std::runtime_error("flops_loss: dimension out of range");
            mean(dim) += impact;
        }
    }
    mean /= static_cast<double>(reps.size());
    return mean.squaredNorm();
}

void write_training_log(const TrainingLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write training log: " + path);
    out << "step\tcontrastive\tflops_q\tflops_d\tnnz_mean\tlambda_q\tlambda_d\n";
    char buf[160];
    for (const auto& report : log) {
        std::snprintf(buf, sizeof(buf), "%llu\t%.6f\t%.6f\t%.6f\t%.2f\t%.6g\t%.6g\n",
                      static_cast<unsigned long long>(report.step), report.contrastive, report.flops_q,
                      report.flops_d, report.nnz_mean, report.lambda_q, report.lambda_d);
        out << buf;
    }
}

StepReport train_step(EncoderParams& params, const Batch& batch, const TrainConfig& config,
                      const std::vector<std::uint8_t>& mask, std::uint64_t step, SgdState& sgd,
                      ModelKind kind) {
    batch.validate();
    ad::Tape tape;
    EncoderVars vars = register_params(tape, params, true);
    Eigen::RowVectorXd mask_row;
    if (kind == ModelKind::sparse) mask_row = mask_to_row(mask);

    auto represent = [&](const TokenSequence& tokens) -> ad::Var {
        ad::Var hidden = transformer_forward(tape, vars, params, tokens);
        if (kind == ModelKind::dense) return tape.slice_rows(hidden, 0, 1);
        ad::Var logits = mlm_logits_forward(tape, vars, params, hidden);
        return pooled_forward(tape, logits, mask_row);
    };

    std::vector<ad::Var> query_rows, doc_rows;
    query_rows.reserve(batch.queries.size());
    doc_rows.reserve(batch.docs.size());
    for (const auto& tokens : batch.queries) query_rows.push_back(represent(tokens));
    for (const auto& tokens : batch.docs) doc_rows.push_back(represent(tokens));

    ad::Var query_mat = tape.vconcat(query_rows);
    ad::Var doc_mat = tape.vconcat(doc_rows);
    ad::Var scores = tape.matmul_nt(query_mat, doc_mat);
    ad::Var ce = tape.cross_entropy_mean(scores, batch.positive_indices());

    StepReport report;
    report.step = step;
    report.lambda_q = kind == ModelKind::sparse ? lambda_at(config.lambda_q, config.warmup_steps, step)
                                                : 0.0;
    report.lambda_d = kind == ModelKind::sparse ? lambda_at(config.lambda_d, config.warmup_steps, step)
                                                : 0.0;

    ad::Var loss = ce;
    if (kind == ModelKind::sparse) {
        ad::Var flops_q = tape.sum_squared_colmeans(query_mat);
        ad::Var flops_d = tape.sum_squared_colmeans(doc_mat);
        loss = tape.add(loss, tape.add(tape.scale(flops_q, report.lambda_q),
                                       tape.scale(flops_d, report.lambda_d)));
        report.flops_q = tape.value(flops_q)(0, 0);
        report.flops_d = tape.value(flops_d)(0, 0);
    }
    report.contrastive = tape.value(ce)(0, 0);

    double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step) +
                                 " (contrastive=" + std::to_string(report.contrastive) +
                                 " flops_q=" + std::to_string(report.flops_q) +
                                 " flops_d=" + std::to_string(report.flops_d) + ")");
    }

    const Eigen::MatrixXd& doc_values = tape.value(doc_mat);
    double nnz = 0.0;
    for (Eigen::Index r = 0; r < doc_values.rows(); ++r) {
        nnz += static_cast<double>((doc_values.row(r).array() > 0.0).count());
    }
    report.nnz_mean = nnz / static_cast<double>(doc_values.rows());

    tape.backward(loss);

    std::vector<Eigen::MatrixXd*> tensors;
    for_each_tensor(params, [&](const char*, Eigen::MatrixXd& m) { tensors.push_back(&m); });
    if (tensors.size() != vars.flat.size()) {
        throw std::logic_error("train_step: tensor enumeration mismatch");
    }
    if (sgd.velocity.empty()) {
        sgd.velocity.reserve(tensors.size());
        for (const auto* t : tensors) sgd.velocity.push_back(Eigen::MatrixXd::Zero(t->rows(), t->cols()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        Eigen::MatrixXd grad = tape.gradient(vars.flat[i]);
        if (config.momentum > 0.0) {
            sgd.velocity[i] = config.momentum * sgd.velocity[i] + grad;
            *tensors[i] -= config.learning_rate * sgd.velocity[i];
        } else {
            *tensors[i] -= config.learning_rate * grad;
        }
    }
    return report;
}

TrainResult train_with_triples(const TrainConfig& config, const EncoderConfig& encoder_config,
                               const Corpus& corpus, const std::vector<Query>& queries,
                               const MiningResult& mining, const VocabularyController& controller,
                               ModelKind kind) {
    config.validate();
    encoder_config.validate();
    TrainResult result;
    result.mining = mining;
    result.params = init_encoder(encoder_config, controller, config.seed);

    const auto doc_of = id_lookup(corpus);
    std::unordered_map<std::string, std::size_t> query_of;
    for (std::size_t i = 0; i < queries.size(); ++i) query_of.emplace(queries[i].query_id, i);

    std::vector<TokenSequence> doc_tokens(corpus.docs.size());
    for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
        doc_tokens[i] = tokenize(corpus.visible_text(i), controller.base, encoder_config.max_len);
    }
    std::vector<TokenSequence> query_tokens(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        query_tokens[i] = tokenize(queries[i].text, controller.base, encoder_config.max_len);
    }

    auto doc_tokens_of = [&](const std::string& doc_id) -> const TokenSequence& {
        auto it = doc_of.find(doc_id);
        if (it == doc_of.end()) throw std::runtime_error("triple references unknown doc " + doc_id);
        return doc_tokens[it->second];
    };

    const auto mask = allowed_mask(controller);
    SgdState sgd;
    Rng shuffle_rng = Rng(config.seed).fork(0x5u);
    std::uint64_t step = 0;
    bool done = false;
    for (std::uint32_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
        std::vector<std::size_t> order(mining.triples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);
        for (std::size_t at = 0; at < order.size() && !done; at += config.batch_size) {
            std::size_t take = std::min<std::size_t>(config.batch_size, order.size() - at);
            Batch batch;
            batch.n_hard = config.n_hard;
            for (std::size_t b = 0; b < take; ++b) {
                const TrainingTriple& triple = mining.triples[order[at + b]];
                auto qit = query_of.find(triple.query_id);
                if (qit == query_of.end()) {
                    throw std::runtime_error("triple references unknown query " + triple.query_id);
                }
                if (triple.hard_negative_doc_ids.size() != config.n_hard) {
                    throw std::runtime_error("triple for query " + triple.query_id + " has " +
                                             std::to_string(triple.hard_negative_doc_ids.size()) +
                                             " negatives, config wants " +
                                             std::to_string(config.n_hard));
                }
                batch.queries.push_back(query_tokens[qit->second]);
                batch.docs.push_back(doc_tokens_of(triple.positive_doc_id));
                for (const auto& neg : triple.hard_negative_doc_ids) {
                    batch.docs.push_back(doc_tokens_of(neg));
                }
            }
            result.log.push_back(train_step(result.params, batch, config, mask, step, sgd, kind));
            ++step;
            if (config.max_steps > 0 && step >= config.max_steps) done = true;
        }
    }
    return result;
}

TrainResult train(const TrainConfig& config, const EncoderConfig& encoder_config, const Corpus& corpus,
                  const std::vector<Query>& queries, const Qrels& qrels,
                  const VocabularyController& controller, ModelKind kind) {
    Bm25Searcher bm25(corpus, controller.base);
    MiningResult mining = mine_hard_negatives(bm25, queries, qrels, config.mine_depth, config.n_hard,
                                              Rng(config.seed).fork(0x11u).next_u64(),
                                              config.rel_threshold);
    return train_with_triples(config, encoder_config, corpus, queries, mining, controller, kind);
}

}  // namespace splade

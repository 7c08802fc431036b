#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spladelab/corpus.hpp"
#include "spladelab/encoder.hpp"
#include "spladelab/eval.hpp"
#include "spladelab/search.hpp"

namespace splade {

struct TrainingTriple {
    std::string query_id;
    std::string positive_doc_id;
    std::vector<std::string> hard_negative_doc_ids;
};

struct MiningResult {
    std::vector<TrainingTriple> triples;
    std::vector<std::string> skipped_query_ids;  // no positives or too few candidates
};

// BM25 top-`depth` minus judged positives, n_hard sampled without
// replacement. Queries that cannot field n_hard candidates are skipped and
// reported, never padded.
MiningResult mine_hard_negatives(const Bm25Searcher& bm25, const std::vector<Query>& queries,
                                 const Qrels& qrels, std::size_t depth, std::size_t n_hard,
                                 std::uint64_t seed, int rel_threshold = 1);

// "query_id<TAB>positive_id<TAB>neg1,neg2,..."
void save_triples(const std::vector<TrainingTriple>& triples, const std::string& path);
std::vector<TrainingTriple> load_triples(const std::string& path);

// One query plus its 1 + n_hard documents, positives at stride offsets 0.
struct Batch {
    std::vector<TokenSequence> queries;
    std::vector<TokenSequence> docs;  // size = queries.size() * (1 + n_hard)
    std::uint32_t n_hard = 0;

    std::size_t size() const { return queries.size(); }
    std::size_t docs_per_query() const { return 1 + static_cast<std::size_t>(n_hard); }
    std::vector<int> positive_indices() const;
    void validate() const;
};

enum class ModelKind { sparse, dense };

struct TrainConfig {
    std::uint32_t batch_size = 8;
    std::uint32_t n_hard = 7;
    double learning_rate = 5e-3;
    double momentum = 0.9;
    std::uint32_t epochs = 3;
    std::uint32_t max_steps = 0;  // 0 = bounded by epochs only
    double lambda_q = 1e-3;
    double lambda_d = 1e-3;
    std::uint32_t warmup_steps = 100;
    std::uint32_t mine_depth = 200;
    std::uint64_t seed = 42;
    int rel_threshold = 1;

    void validate() const;
};

// Quadratic ramp 0 -> lambda over warmup_steps, constant after.
double lambda_at(double lambda, std::uint32_t warmup_steps, std::uint64_t step);

// Mean over rows of -log softmax(row)[positive]; the denominator spans the
// row's own documents plus every other row's documents (in-batch negatives).
double contrastive_loss(const Eigen::MatrixXd& scores, const std::vector<int>& positive);

// Sum over dimensions of the squared mean activation across the batch.
double flops_loss(const std::vector<SparseVector>& reps, std::uint32_t output_dim);

struct StepReport {
    std::uint64_t step = 0;
    double contrastive = 0.0;
    double flops_q = 0.0;
    double flops_d = 0.0;
    double nnz_mean = 0.0;  // mean nonzero count over document representations
    double lambda_q = 0.0;
    double lambda_d = 0.0;
};

using TrainingLog = std::vector<StepReport>;

// Tab-separated: step contrastive flops_q flops_d nnz_mean lambda_q lambda_d.
void write_training_log(const TrainingLog& log, const std::string& path);

struct SgdState {
    std::vector<Eigen::MatrixXd> velocity;
};

// One SGD(+momentum) update on contrastive + lambda_q*FLOPS(q) +
// lambda_d*FLOPS(d). Throws if the loss goes non-finite.
StepReport train_step(EncoderParams& params, const Batch& batch, const TrainConfig& config,
                      const std::vector<std::uint8_t>& mask, std::uint64_t step, SgdState& sgd,
                      ModelKind kind = ModelKind::sparse);

struct TrainResult {
    EncoderParams params;
    TrainingLog log;
    MiningResult mining;
};

TrainResult train(const TrainConfig& config, const EncoderConfig& encoder_config, const Corpus& corpus,
                  const std::vector<Query>& queries, const Qrels& qrels,
                  const VocabularyController& controller, ModelKind kind = ModelKind::sparse);

// Same loop with pre-mined triples (the matrix runner shares one mining pass).
TrainResult train_with_triples(const TrainConfig& config, const EncoderConfig& encoder_config,
                               const Corpus& corpus, const std::vector<Query>& queries,
                               const MiningResult& mining, const VocabularyController& controller,
                               ModelKind kind = ModelKind::sparse);

}  // namespace splade

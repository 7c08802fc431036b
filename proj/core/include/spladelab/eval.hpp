#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spladelab/controller.hpp"
#include "spladelab/encoder.hpp"
#include "spladelab/index.hpp"
#include "spladelab/search.hpp"

namespace splade {

// (query_id, doc_id) -> relevance grade. Binary relevance is grade >= the
// configured threshold (default 1).
struct Qrels {
    std::map<std::string, std::map<std::string, int>> grades;

    int grade(const std::string& query_id, const std::string& doc_id) const;
    bool has_query(const std::string& query_id) const { return grades.count(query_id) != 0; }
    std::size_t relevant_count(const std::string& query_id, int threshold) const;
};

// 4-column TREC format: "qid 0 docid grade", whitespace separated.
Qrels load_qrels(const std::string& path);
void save_qrels(const Qrels& qrels, const std::string& path);

double rr_at_k(const Ranking& ranking, const Qrels& qrels, std::size_t k = 10, int threshold = 1);
double ndcg_at_k(const Ranking& ranking, const Qrels& qrels, std::size_t k = 10);
double recall_at_k(const Ranking& ranking, const Qrels& qrels, std::size_t k = 1000, int threshold = 1);

// Two-sided paired Student's t-test. Degenerate cases: all-zero differences
// give p = 1, zero variance with nonzero mean gives p = 0.
double paired_ttest(const std::vector<double>& a, const std::vector<double>& b);
// Regularized incomplete beta; exposed for the statistics tests.
double incomplete_beta(double a, double b, double x);
double student_t_two_sided_p(double t, double dof);

enum class Metric { rr10, ndcg10, recall1000 };
const char* metric_name(Metric m);
Metric parse_metric(const std::string& name);
double compute_metric(Metric m, const Ranking& ranking, const Qrels& qrels, int threshold);

struct SystemEval {
    std::string system;
    // metric -> (query_id -> value), over queries present in both run and qrels
    std::map<Metric, std::map<std::string, double>> per_query;
    std::map<Metric, double> means;
    std::size_t evaluated_queries = 0;
    std::size_t ignored_run_queries = 0;  // run lines whose query is unjudged
};

struct EvalReport {
    std::vector<SystemEval> systems;
    // significance[metric][i][j] = paired two-sided p between systems i and j
    std::map<Metric, std::vector<std::vector<double>>> significance;
    double significance_alpha = 0.01;
};

SystemEval evaluate_rankings(const std::string& system, const std::vector<Ranking>& rankings,
                             const Qrels& qrels, const std::vector<Metric>& metrics, int threshold = 1);
EvalReport evaluate_runs(const std::vector<std::pair<std::string, std::vector<Ranking>>>& runs,
                         const Qrels& qrels, const std::vector<Metric>& metrics, int threshold = 1);
EvalReport evaluate_run_files(const std::vector<std::string>& run_paths, const Qrels& qrels,
                              const std::vector<Metric>& metrics, int threshold = 1);

void write_report_tsv(const EvalReport& report, const std::string& path);
void write_per_query_tsv(const EvalReport& report, const std::string& path);
void write_significance_tsv(const EvalReport& report, Metric metric, const std::string& path);

// Expansion accounting per Table-1 methodology: a nonzero output dimension
// counts as expanded when its surface token does not occur in the tokenized
// query (latent dimensions always count).
struct ExpansionStat {
    std::uint32_t term_id;
    std::string term;
    std::size_t count;        // queries where this dim was expanded
    double percentage;        // 100 * count / |queries|
    std::size_t list_length;  // postings length in the document index
};

std::vector<ExpansionStat> expansion_stats(const EncoderParams& params,
                                           const VocabularyController& controller,
                                           const std::vector<Query>& queries,
                                           const InvertedIndex& index);
void write_expansion_stats_tsv(const std::vector<ExpansionStat>& stats, std::size_t n_queries,
                               const std::string& path);

// Query-time pruning: drop banned dimensions from the query encoding only.
SparseVector prune_query_terms(const SparseVector& query, const std::set<std::uint32_t>& banned);

}  // namespace splade

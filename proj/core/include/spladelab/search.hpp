#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spladelab/index.hpp"
#include "spladelab/sparse.hpp"
#include "spladelab/tokenizer.hpp"

namespace splade {

struct Hit {
    std::string doc_id;
    double score = 0.0;
};

// Hits ordered by descending score, ties by ascending doc_id.
struct Ranking {
    std::string query_id;
    std::vector<Hit> hits;
    std::uint32_t k = 0;
};

// Exact top-k document-at-a-time over the union of the query's postings.
// Scores are sum_j q_j * dequantize(level_j); query impacts stay exact so the
// quantization error is bounded by nnz(q) * max(q) * scale.
Ranking search_exhaustive(const InvertedIndex& index, const SparseVector& query, std::uint32_t k,
                          const std::string& query_id = "");

// Same results as search_exhaustive; prunes with per-term upper bounds
// (essential/non-essential partition, skip on provably non-viable docs).
Ranking search_maxscore(const InvertedIndex& index, const SparseVector& query, std::uint32_t k,
                        const std::string& query_id = "");

// Term-frequency postings for the BM25 baseline.
class Bm25Searcher {
  public:
    Bm25Searcher(const Corpus& corpus, const BaseVocabulary& vocab);

    Ranking search(const TokenSequence& query_tokens, std::uint32_t k, double k1 = 0.82,
                   double b = 0.68, const std::string& query_id = "") const;
    Ranking search_text(const std::string& query_text, std::uint32_t k, double k1 = 0.82,
                        double b = 0.68, const std::string& query_id = "") const;

    const Bm25Stats& stats() const { return stats_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    double idf(TokenId term) const;
    double score_one(TokenId term, std::uint32_t tf, std::uint32_t doc_len, double k1, double b) const;

  private:
    const BaseVocabulary* vocab_;
    Bm25Stats stats_;
    std::vector<std::string> doc_ids_;
    struct TfList {
        std::vector<std::uint32_t> ordinals;
        std::vector<std::uint32_t> tfs;
    };
    std::vector<TfList> postings_;  // indexed by token id
};

Ranking search_bm25(const Bm25Searcher& searcher, const TokenSequence& query_tokens, std::uint32_t k,
                    double k1 = 0.82, double b = 0.68, const std::string& query_id = "");

// Exact top-k by inner product over a row-per-document matrix.
Ranking search_dense_bruteforce(const Eigen::MatrixXd& doc_matrix,
                                const std::vector<std::string>& doc_ids, const Eigen::VectorXd& query,
                                std::uint32_t k, const std::string& query_id = "");

// TREC interchange: "qid Q0 docid rank score tag".
void write_run(const std::vector<Ranking>& rankings, const std::string& tag, const std::string& path);
std::vector<Ranking> read_run(const std::string& path);

}  // namespace splade

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spladelab/corpus.hpp"
#include "spladelab/eval.hpp"

namespace splade {

// Seeded generator for a desk-scale retrieval task. Documents are bags of
// pseudo-words drawn from a Zipf-like distribution; each query samples a few
// words from one target document, which becomes its single relevant document
// (relevance by lexical-overlap construction).
struct SyntheticSpec {
    std::uint64_t seed = 1;
    std::uint32_t n_docs = 2000;
    std::uint32_t n_train_queries = 500;
    std::uint32_t n_test_queries = 100;
    std::uint32_t n_words = 800;  // distinct pseudo-words
    std::uint32_t doc_len_min = 8;
    std::uint32_t doc_len_max = 16;
    std::uint32_t query_len_min = 2;
    std::uint32_t query_len_max = 4;
    double zipf_exponent = 0.9;
    double title_fraction = 0.25;
    // Function words sprinkled uniformly into documents so stoplist-driven
    // controllers have something to bite on; empty disables mixing.
    std::vector<std::string> stopwords;
    double stopword_fraction = 0.3;
};

struct SyntheticData {
    Corpus corpus;
    std::vector<Query> train_queries;
    std::vector<Query> test_queries;
    Qrels train_qrels;
    Qrels test_qrels;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Writes corpus.tsv, {train,test}_queries.tsv, {train,test}_qrels.txt.
void write_synthetic(const SyntheticData& data, const std::string& dir);

}  // namespace splade

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spladelab/controller.hpp"
#include "spladelab/corpus.hpp"
#include "spladelab/encoder.hpp"
#include "spladelab/sparse.hpp"

namespace splade {

struct PostingsList {
    std::uint32_t term_id = 0;
    std::vector<std::uint32_t> ordinals;  // strictly increasing
    std::vector<std::uint8_t> levels;     // quantized impacts, always >= 1
    std::uint8_t max_level = 0;

    std::size_t length() const { return ordinals.size(); }
};

struct InvertedIndex {
    std::vector<PostingsList> lists;   // sorted by term_id
    std::vector<std::string> doc_ids;  // ordinal -> doc_id
    double quant_scale = 1.0;
    std::uint32_t doc_count = 0;
    std::uint32_t output_dim = 0;
    bool all_empty = false;  // set when every encoding pooled to nothing

    const PostingsList* find_list(std::uint32_t term_id) const;
    std::size_t total_postings() const;
};

struct Bm25Stats {
    std::vector<std::uint32_t> df;       // per token id, specials stay zero
    std::vector<std::uint32_t> doc_len;  // non-special token count per ordinal
    double avg_doc_len = 0.0;
    std::uint32_t doc_count = 0;
};

// level = min(max_level, ceil(impact / scale)); nonzero impacts never land
// on level zero, so no posting is silently dropped.
std::uint8_t quantize(double impact, double scale, unsigned quant_bits = 8);
double dequantize(std::uint8_t level, double scale);

InvertedIndex build_index_from_encodings(const std::vector<SparseVector>& encodings,
                                         std::vector<std::string> doc_ids, std::uint32_t output_dim,
                                         unsigned quant_bits = 8);

// Encodes every document (sharded across threads, merged in ordinal order)
// and quantizes with a global scale of max_impact / max_level.
InvertedIndex build_index(const EncoderParams& params, const VocabularyController& controller,
                          const Corpus& corpus, unsigned quant_bits = 8);

std::vector<SparseVector> encode_corpus(const EncoderParams& params,
                                        const VocabularyController& controller, const Corpus& corpus);

struct TermStat {
    std::uint32_t term_id;
    std::string term;  // surface string, or "latent#k"
    std::size_t list_length;
};

// Per-term list lengths, longest first; namer falls back to the raw id.
std::vector<TermStat> index_stats(const InvertedIndex& index,
                                  const VocabularyController* controller = nullptr);
void write_index_stats_tsv(const std::vector<TermStat>& stats, const std::string& path);

Bm25Stats build_bm25_stats(const Corpus& corpus, const BaseVocabulary& vocab);

void save_index(const InvertedIndex& index, const std::string& path);
InvertedIndex load_index(const std::string& path);

}  // namespace splade

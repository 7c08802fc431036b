#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "spladelab/corpus.hpp"

namespace splade {

using TokenId = std::uint32_t;

// Word-level vocabulary with dense ids. Ids 0..3 are the special tokens;
// everything after is ordered by corpus frequency (ties lexicographic).
class BaseVocabulary {
  public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kCls = 2;
    static constexpr TokenId kSep = 3;
    static constexpr TokenId kNumSpecials = 4;

    BaseVocabulary();
    explicit BaseVocabulary(const std::vector<std::string>& word_tokens);

    TokenId id_of(const std::string& token) const;  // kUnk when absent
    const std::string& token_of(TokenId id) const;
    bool contains(const std::string& token) const;
    bool is_special(TokenId id) const { return id < kNumSpecials; }
    std::uint32_t size() const { return static_cast<std::uint32_t>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const BaseVocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> token_to_id_;
};

struct TokenSequence {
    std::vector<TokenId> ids;  // [CLS] ... [SEP]
    std::size_t length() const { return ids.size(); }
};

struct FrequencyTable {
    std::vector<std::uint64_t> counts;  // indexed by token id
    std::uint64_t total_tokens = 0;
};

constexpr std::size_t kNoLengthCap = std::numeric_limits<std::size_t>::max();

// Lowercase, split on whitespace, detach leading/trailing punctuation as
// standalone tokens ("Velvet!" -> "velvet", "!").
std::vector<std::string> normalize_words(const std::string& text);

// Frequency-ranked vocabulary over the corpus' visible text. max_vocab
// bounds the total size including the 4 specials; min_freq drops rare words.
BaseVocabulary train_tokenizer(const Corpus& corpus, std::uint32_t max_vocab, std::uint32_t min_freq);

// [CLS] + in-vocab ids (UNK for unknown words) + [SEP], truncated to
// max_len with [SEP] kept last.
TokenSequence tokenize(const std::string& text, const BaseVocabulary& vocab,
                       std::size_t max_len = kNoLengthCap);

// Surface strings of the non-special ids, space-joined.
std::string detokenize(const TokenSequence& tokens, const BaseVocabulary& vocab);

// Per-id occurrence counts over the whole corpus, specials excluded.
FrequencyTable token_frequencies(const Corpus& corpus, const BaseVocabulary& vocab);

// One token per line, line number = id.
void save_vocabulary(const BaseVocabulary& vocab, const std::string& path);
BaseVocabulary load_vocabulary(const std::string& path);

}  // namespace splade

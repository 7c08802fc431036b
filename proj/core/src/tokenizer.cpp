#include "spladelab/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace splade {

namespace {

const std::vector<std::string> kSpecialTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

bool is_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

BaseVocabulary::BaseVocabulary() : BaseVocabulary(std::vector<std::string>{}) {}

BaseVocabulary::BaseVocabulary(const std::vector<std::string>& word_tokens) {
    tokens_ = kSpecialTokens;
    tokens_.insert(tokens_.end(), word_tokens.begin(), word_tokens.end());
    token_to_id_.reserve(tokens_.size());
    for (TokenId id = 0; id < tokens_.size(); ++id) {
        if (!token_to_id_.emplace(tokens_[id], id).second) {
            throw std::runtime_error("duplicate token in vocabulary: " + tokens_[id]);
        }
    }
}

TokenId BaseVocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& BaseVocabulary::token_of(TokenId id) const {
    if (id >= tokens_.size()) throw std::out_of_range("token id out of range: " + std::to_string(id));
    return tokens_[id];
}

bool BaseVocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

std::vector<std::string> normalize_words(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i == start) continue;
        std::string word = text.substr(start, i - start);
        for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

        std::size_t lo = 0;
        std::size_t hi = word.size();
        while (lo < hi && is_punct(word[lo])) ++lo;
        while (hi > lo && is_punct(word[hi - 1])) --hi;
        for (std::size_t p = 0; p < lo; ++p) out.push_back(std::string(1, word[p]));
        if (hi > lo) out.push_back(word.substr(lo, hi - lo));
        for (std::size_t p = hi; p < word.size(); ++p) out.push_back(std::string(1, word[p]));
    }
    return out;
}

BaseVocabulary train_tokenizer(const Corpus& corpus, std::uint32_t max_vocab, std::uint32_t min_freq) {
    if (corpus.docs.empty()) throw std::runtime_error("train_tokenizer: empty corpus");
    if (max_vocab < BaseVocabulary::kNumSpecials) {
        throw std::runtime_error("train_tokenizer: max_vocab must be at least " +
                                 std::to_string(BaseVocabulary::kNumSpecials));
    }
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const auto& doc : corpus.docs) {
        for (auto& w : normalize_words(corpus.visible_text(doc))) ++freq[w];
    }
    std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> words;
    words.reserve(ranked.size());
    for (const auto& [word, count] : ranked) {
        if (count < min_freq) continue;
        if (words.size() + BaseVocabulary::kNumSpecials >= max_vocab) break;
        words.push_back(word);
    }
    return BaseVocabulary(words);
}

TokenSequence tokenize(const std::string& text, const BaseVocabulary& vocab, std::size_t max_len) {
    if (max_len < 2) throw std::runtime_error("tokenize: max_len must be at least 2");
    TokenSequence seq;
    seq.ids.push_back(BaseVocabulary::kCls);
    for (const auto& word : normalize_words(text)) {
        if (seq.ids.size() + 1 >= max_len) break;
        seq.ids.push_back(vocab.id_of(word));
    }
    seq.ids.push_back(BaseVocabulary::kSep);
    return seq;
}

std::string detokenize(const TokenSequence& tokens, const BaseVocabulary& vocab) {
    std::string out;
    for (TokenId id : tokens.ids) {
        if (vocab.is_special(id)) continue;
        if (!out.empty()) out += ' ';
        out += vocab.token_of(id);
    }
    return out;
}

FrequencyTable token_frequencies(const Corpus& corpus, const BaseVocabulary& vocab) {
    FrequencyTable table;
    table.counts.assign(vocab.size(), 0);
    for (const auto& doc : corpus.docs) {
        TokenSequence seq = tokenize(corpus.visible_text(doc), vocab);
        for (TokenId id : seq.ids) {
            if (vocab.is_special(id)) continue;
            ++table.counts[id];
            ++table.total_tokens;
        }
    }
    return table;
}

void save_vocabulary(const BaseVocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (const auto& token : vocab.tokens()) out << token << '\n';
}

BaseVocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    if (tokens.size() < BaseVocabulary::kNumSpecials) {
        throw std::runtime_error("vocabulary file too short: " + path);
    }
    for (TokenId i = 0; i < BaseVocabulary::kNumSpecials; ++i) {
        if (tokens[i] != kSpecialTokens[i]) {
            throw std::runtime_error("vocabulary file missing special token " + kSpecialTokens[i] +
                                     " at line " + std::to_string(i + 1));
        }
    }
    return BaseVocabulary(std::vector<std::string>(tokens.begin() + BaseVocabulary::kNumSpecials,
                                                   tokens.end()));
}

}  // namespace splade

#include <doctest.h>

#include <cstdio>

#include "spladelab/rng.hpp"
#include "spladelab/tokenizer.hpp"
#include "test_util.hpp"

using namespace splade;

TEST_CASE("normalization lowercases and detaches punctuation") {
    CHECK(normalize_words("A b!") == std::vector<std::string>{"a", "b", "!"});
    CHECK(normalize_words("Velvet, silk.") == std::vector<std::string>{"velvet", ",", "silk", "."});
    CHECK(normalize_words("(quoted)") == std::vector<std::string>{"(", "quoted", ")"});
    CHECK(normalize_words("don't stop") == std::vector<std::string>{"don't", "stop"});
    CHECK(normalize_words("!!") == std::vector<std::string>{"!", "!"});
    CHECK(normalize_words("  spaced\tout \n") == std::vector<std::string>{"spaced", "out"});
    CHECK(normalize_words("").empty());
}

TEST_CASE("train_tokenizer ranks by frequency with lexicographic ties") {
    auto corpus = testutil::corpus_from_bodies({"a b", "a c"});
    BaseVocabulary vocab = train_tokenizer(corpus, 10, 1);
    CHECK(vocab.size() == 4 + 3);
    // "a" occurs twice: lowest non-special id; b/c tie broken lexicographically.
    CHECK(vocab.id_of("a") == BaseVocabulary::kNumSpecials);
    CHECK(vocab.id_of("b") == BaseVocabulary::kNumSpecials + 1);
    CHECK(vocab.id_of("c") == BaseVocabulary::kNumSpecials + 2);
}

TEST_CASE("min_freq drops rare tokens") {
    auto corpus = testutil::corpus_from_bodies({"x x x"});
    BaseVocabulary vocab = train_tokenizer(corpus, 10, 4);
    CHECK(vocab.size() == BaseVocabulary::kNumSpecials);  // 3 < 4, "x" excluded
    CHECK(vocab.id_of("x") == BaseVocabulary::kUnk);
}

TEST_CASE("max_vocab truncates including specials") {
    auto corpus = testutil::corpus_from_bodies({"e e e d d c b a"});
    BaseVocabulary vocab = train_tokenizer(corpus, 6, 1);
    CHECK(vocab.size() == 6);
    CHECK(vocab.contains("e"));
    CHECK(vocab.contains("d"));
    CHECK_FALSE(vocab.contains("b"));
}

TEST_CASE("tokenizer training is deterministic") {
    auto corpus = testutil::corpus_from_bodies({"the quick brown fox", "jumps over the lazy dog"});
    CHECK(train_tokenizer(corpus, 100, 1) == train_tokenizer(corpus, 100, 1));
    CHECK_THROWS(train_tokenizer(Corpus{}, 100, 1));
    CHECK_THROWS(train_tokenizer(corpus, 3, 1));
}

TEST_CASE("tokenize brackets with CLS/SEP and maps unknowns to UNK") {
    auto tv = testutil::tiny_vocab({"a b !"});
    TokenSequence empty = tokenize("", tv.vocab, 64);
    CHECK(empty.ids == std::vector<TokenId>{BaseVocabulary::kCls, BaseVocabulary::kSep});

    TokenSequence seq = tokenize("A b!", tv.vocab, 64);
    REQUIRE(seq.ids.size() == 5);
    CHECK(seq.ids.front() == BaseVocabulary::kCls);
    CHECK(seq.ids[1] == tv.vocab.id_of("a"));
    CHECK(seq.ids[2] == tv.vocab.id_of("b"));
    CHECK(seq.ids[3] == tv.vocab.id_of("!"));
    CHECK(seq.ids.back() == BaseVocabulary::kSep);

    TokenSequence unk = tokenize("zzz", tv.vocab, 64);
    CHECK(unk.ids == std::vector<TokenId>{BaseVocabulary::kCls, BaseVocabulary::kUnk,
                                          BaseVocabulary::kSep});
}

TEST_CASE("tokenize truncates with SEP always last") {
    auto tv = testutil::tiny_vocab({"a b c d e f g h"});
    TokenSequence seq = tokenize("a b c d e f g h", tv.vocab, 5);
    CHECK(seq.ids.size() == 5);
    CHECK(seq.ids.front() == BaseVocabulary::kCls);
    CHECK(seq.ids.back() == BaseVocabulary::kSep);
}

TEST_CASE("tokenize/detokenize round-trips in-vocab text") {
    auto tv = testutil::tiny_vocab({"alpha beta gamma ! don't"});
    Rng rng(17);
    std::vector<std::string> lexicon = {"alpha", "beta", "gamma", "!", "don't"};
    for (int trial = 0; trial < 50; ++trial) {
        TokenSequence seq;
        seq.ids.push_back(BaseVocabulary::kCls);
        std::size_t n = 1 + rng.uniform_int(6);
        for (std::size_t i = 0; i < n; ++i) {
            seq.ids.push_back(tv.vocab.id_of(lexicon[rng.uniform_int(lexicon.size())]));
        }
        seq.ids.push_back(BaseVocabulary::kSep);
        TokenSequence back = tokenize(detokenize(seq, tv.vocab), tv.vocab, 64);
        CHECK(back.ids == seq.ids);
    }
}

TEST_CASE("token_frequencies counts non-special tokens exactly") {
    auto tv = testutil::tiny_vocab({"a a b"});
    FrequencyTable freq = token_frequencies(tv.corpus, tv.vocab);
    CHECK(freq.counts[tv.vocab.id_of("a")] == 2);
    CHECK(freq.counts[tv.vocab.id_of("b")] == 1);
    CHECK(freq.total_tokens == 3);

    SUBCASE("empty corpus yields a zero table") {
        Corpus empty;
        FrequencyTable zero = token_frequencies(empty, tv.vocab);
        CHECK(zero.total_tokens == 0);
        for (auto count : zero.counts) CHECK(count == 0);
    }
}

TEST_CASE("frequency totals are conserved (property)") {
    Rng rng(23);
    std::vector<std::string> lexicon = {"red", "green", "blue", "cyan", "onyx", "umber"};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> bodies;
        std::size_t docs = 1 + rng.uniform_int(5);
        std::uint64_t emitted = 0;
        for (std::size_t d = 0; d < docs; ++d) {
            std::string body;
            std::size_t n = 1 + rng.uniform_int(12);
            for (std::size_t w = 0; w < n; ++w) {
                if (!body.empty()) body += ' ';
                body += lexicon[rng.uniform_int(lexicon.size())];
                ++emitted;
            }
            bodies.push_back(body);
        }
        auto tv = testutil::tiny_vocab(bodies);
        CHECK(tv.freq.total_tokens == emitted);
        std::uint64_t sum = 0;
        for (auto count : tv.freq.counts) sum += count;
        CHECK(sum == tv.freq.total_tokens);
    }
}

TEST_CASE("vocabulary persists one token per line") {
    auto tv = testutil::tiny_vocab({"gamma beta alpha"});
    save_vocabulary(tv.vocab, "vocab_roundtrip.txt");
    BaseVocabulary loaded = load_vocabulary("vocab_roundtrip.txt");
    CHECK(loaded == tv.vocab);
    std::remove("vocab_roundtrip.txt");
}

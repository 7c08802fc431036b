#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "spladelab/controller.hpp"
#include "spladelab/encoder.hpp"
#include "spladelab/rng.hpp"
#include "spladelab/synthetic.hpp"
#include "spladelab/tokenizer.hpp"

namespace {

using namespace splade;

struct EncodeFixture {
    SyntheticData data;
    BaseVocabulary vocab;
    VocabularyController controller;
    EncoderParams params;
    std::vector<std::uint8_t> mask;
    std::vector<TokenSequence> docs;

    EncodeFixture() {
        SyntheticSpec spec;
        spec.seed = 5;
        spec.n_docs = 256;
        spec.n_train_queries = 8;
        spec.n_test_queries = 8;
        spec.n_words = 700;
        data = generate_synthetic(spec);
        vocab = train_tokenizer(data.corpus, 4000, 1);
        FrequencyTable freq = token_frequencies(data.corpus, vocab);
        controller = build_controller(ControllerSpec{}, vocab, freq, {});
        params = init_encoder(EncoderConfig{}, controller, 3);
        mask = allowed_mask(controller);
        for (std::size_t i = 0; i < data.corpus.docs.size(); ++i) {
            docs.push_back(tokenize(data.corpus.visible_text(i), vocab, 64));
        }
    }
};

EncodeFixture& fixture() {
    static EncodeFixture f;
    return f;
}

void BM_EncodeDocument(benchmark::State& state) {
    auto& f = fixture();
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode_tokens(f.params, f.mask, f.docs[i]));
        i = (i + 1) % f.docs.size();
    }
}
BENCHMARK(BM_EncodeDocument)->Unit(benchmark::kMillisecond);

void BM_Tokenize(benchmark::State& state) {
    auto& f = fixture();
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(tokenize(f.data.corpus.visible_text(i), f.vocab, 64));
        i = (i + 1) % f.data.corpus.docs.size();
    }
}
BENCHMARK(BM_Tokenize);

void BM_PoolSparse(benchmark::State& state) {
    auto& f = fixture();
    Eigen::MatrixXd logits(16, f.controller.output_dim);
    Rng rng(9);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        for (Eigen::Index c = 0; c < logits.cols(); ++c) logits(r, c) = rng.normal();
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(pool_sparse(logits, f.mask));
    }
}
BENCHMARK(BM_PoolSparse);

}  // namespace

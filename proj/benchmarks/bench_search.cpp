#include <benchmark/benchmark.h>

#include <cstdio>
#include <string>
#include <vector>

#include "spladelab/index.hpp"
#include "spladelab/rng.hpp"
#include "spladelab/search.hpp"

namespace {

using namespace splade;

struct SearchFixture {
    InvertedIndex index;
    std::vector<SparseVector> queries;

    SearchFixture() {
        Rng rng(17);
        const std::uint32_t docs = 50000, dims = 400;
        std::vector<SparseVector> encodings(docs);
        std::vector<std::string> ids(docs);
        for (std::uint32_t d = 0; d < docs; ++d) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "d%06u", d);
            ids[d] = buf;
            // Zipf-ish: low dims are common, high dims rare.
            for (std::uint32_t t = 0; t < dims; ++t) {
                double p = 0.12 / (1.0 + 0.05 * t);
                if (rng.uniform() < p) encodings[d].entries.emplace_back(t, 0.05 + 2.0 * rng.uniform());
            }
        }
        index = build_index_from_encodings(encodings, ids, dims);
        for (int q = 0; q < 64; ++q) {
            SparseVector query;
            auto picks = rng.sample_without_replacement(dims, 6);
            std::sort(picks.begin(), picks.end());
            for (auto p : picks) {
                query.entries.emplace_back(static_cast<std::uint32_t>(p), 0.1 + rng.uniform());
            }
            queries.push_back(std::move(query));
        }
    }
};

SearchFixture& fixture() {
    static SearchFixture f;
    return f;
}

void BM_SearchExhaustive(benchmark::State& state) {
    auto& f = fixture();
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(search_exhaustive(f.index, f.queries[i], 10));
        i = (i + 1) % f.queries.size();
    }
}
BENCHMARK(BM_SearchExhaustive)->Unit(benchmark::kMillisecond);

void BM_SearchMaxscore(benchmark::State& state) {
    auto& f = fixture();
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(search_maxscore(f.index, f.queries[i], 10));
        i = (i + 1) % f.queries.size();
    }
}
BENCHMARK(BM_SearchMaxscore)->Unit(benchmark::kMillisecond);

void BM_Quantize(benchmark::State& state) {
    Rng rng(3);
    std::vector<double> impacts(4096);
    for (auto& x : impacts) x = rng.uniform() * 4.0;
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(quantize(impacts[i & 4095], 4.0 / 255.0));
        ++i;
    }
}
BENCHMARK(BM_Quantize);

}  // namespace

#pragma once

#include <cstdint>
#include <vector>

namespace splade {

// Deterministic pseudo-random source. The standard distributions are
// implementation-defined, so every draw here is derived from raw
// splitmix64/xoshiro output to keep seeded runs bit-reproducible across
// compilers and platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();

    // Uniform in [0, n), unbiased (rejection sampling).
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller.
    double normal();

    // Derive an independent child stream; (seed, tag) -> child seed is a
    // pure function, so components can be re-seeded without sharing state.
    Rng fork(std::uint64_t tag) const;

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct values sampled uniformly from [0, n), in selection order.
    std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::uint64_t k);

  private:
    std::uint64_t state_[4];
    std::uint64_t seed_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace splade

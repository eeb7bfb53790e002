#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "maeforge/common.hpp"

namespace maeforge {

// Deterministic random source. The engine is std::mt19937_64, whose output
// stream is fixed by the C++ standard, and all real-valued draws are mapped
// from raw 64-bit words here rather than through std::*_distribution (whose
// output is implementation-defined). Same seed => same stream everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    // Uniform in [0, 1): top 53 bits of one engine word.
    double uniform();
    double uniform(double lo, double hi);

    // Uniform in {0, ..., n-1}, rejection-sampled (no modulo bias).
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller on two uniform draws.
    double normal();
    double normal(double mean, double stddev);

    // Fisher-Yates over indices 0..n-1.
    std::vector<int> permutation(int n);

    // Independent generator derived from (seed, salt); does not consume
    // this generator's stream.
    Rng fork(std::uint64_t salt) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace maeforge

#pragma once

#include <cstdint>
#include <random>

namespace proxnn {

/// Seedable generator used everywhere randomness is needed.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are implemented here rather than taken from
/// <random> because the standard leaves their algorithms unspecified, which
/// would make datasets differ between standard libraries.
///
/// Independent streams are obtained with derive_seed(master, stream), a
/// SplitMix64 mix of the two values; sample i of a dataset seeded with s uses
/// Rng(derive_seed(s, i)).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi] (inclusive), unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Standard normal via the Marsaglia polar method.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Laplace(0, scale) by inversion.
    double laplace(double scale);
    /// Poisson(lambda): Knuth multiplication for small means, PTRS (Hormann 1993) above 30.
    std::int64_t poisson(double lambda);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace proxnn

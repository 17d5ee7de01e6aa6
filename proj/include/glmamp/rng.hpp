#pragma once

#include <cstdint>

namespace glmamp {

/// Deterministic random generator (xoshiro256++ with splitmix64 seeding).
///
/// We own the full sampling path — bit generator and Gaussian transform —
/// so that traces are reproducible bit-for-bit regardless of the standard
/// library in use. std::normal_distribution is implementation-defined and
/// would silently break golden outputs across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed);

    /// Independent substream keyed by (seed, stream). Streams derived from
    /// the same seed with different ids are statistically independent, so
    /// trials/blocks can run in any order (or in parallel) without changing
    /// results.
    static Rng stream(uint64_t seed, uint64_t stream_id);

    uint64_t next_u64();

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform();

    /// Standard normal via the Marsaglia polar method (one spare cached).
    double gaussian();

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n);

private:
    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace glmamp

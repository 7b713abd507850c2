#pragma once

#include <cstdint>
#include <random>

#include "m2gan/tensor.hpp"

namespace m2gan {

// Deterministic random source. Distributions are implemented explicitly
// (instead of std::*_distribution) so that a given seed produces the same
// stream on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Standard normal via Box-Muller; the spare value is cached.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    void fill_normal(Tensor& t, double mean, double stddev);
    void fill_uniform(Tensor& t, double lo, double hi);

    // Derives an independent seed for a sub-stream (per epoch, per image, ...).
    static std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace m2gan

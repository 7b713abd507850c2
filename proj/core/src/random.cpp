#include "m2gan/random.hpp"

#include <cmath>

namespace m2gan {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw PreconditionError(msg("Rng::uniform_int: empty range [", lo, ", ", hi, "]"));
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());  // full 64-bit range
    // Rejection sampling keeps the draw unbiased and deterministic.
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

void Rng::fill_normal(Tensor& t, double mean, double stddev) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = mean + stddev * normal();
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
}

std::uint64_t Rng::derive_seed(std::uint64_t base, std::uint64_t salt) {
    // splitmix64 finalizer over the combined value.
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace m2gan

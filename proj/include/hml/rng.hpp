#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace hml {

// mt19937_64 carrier with hand-rolled sampling so sequences are identical
// across standard library implementations. Every consumer draws from a
// named substream of the master seed, which keeps independently generated
// quantities (data, dropout, baseline trials, ...) order-independent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller; consumes exactly two words per draw (u1 is clamped away
    // from zero rather than redrawn so stream positions stay aligned).
    double normal(double mean = 0.0, double sigma = 1.0) {
        const double u1 = std::max(uniform01(), 0x1.0p-53);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n) via the 128-bit multiply reduction.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    std::mt19937_64 engine_;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

// Derives a stream seed from (master, name, index). Streams with distinct
// names or indices are statistically independent.
inline Rng substream(std::uint64_t master_seed, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t h = detail::splitmix64(master_seed);
    for (const char c : name) h = detail::splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    h = detail::splitmix64(h ^ index);
    return Rng(h);
}

}  // namespace hml

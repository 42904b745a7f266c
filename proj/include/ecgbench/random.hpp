#pragma once

#include <cmath>
#include <cstdint>

namespace ecgbench {

// 64-bit finalizer from SplitMix64. Used to derive independent per-iteration
// seeds so that random streams do not depend on evaluation order.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64_mix(master ^ splitmix64_mix(stream + 0x632BE59BD9B4E019ULL));
}

// Small portable generator. The distributions below are implemented here
// rather than via <random> so that streams are identical across standard
// library implementations.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

    constexpr std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, bound). bound must be > 0. Rejection sampling, unbiased.
    constexpr std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (one value per call, the partner is dropped).
    double normal() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * uniform());
    }

    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~std::uint64_t{0}; }
    result_type operator()() { return next(); }

private:
    std::uint64_t state_;
};

// Fisher-Yates shuffle driven by SplitMix64 (std::shuffle is not portable
// across standard libraries).
template <typename Container>
void shuffle(Container& c, SplitMix64& rng) {
    const auto n = c.size();
    if (n < 2) return;
    for (auto i = n - 1; i > 0; --i) {
        const auto j = rng.below(static_cast<std::uint64_t>(i) + 1);
        using std::swap;
        swap(c[i], c[j]);
    }
}

}  // namespace ecgbench

#pragma once

// Portable seeded randomness. std::mt19937_64 output is fixed by the standard,
// but std:: distributions are not, so the few we need are written out here.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace gammareg {

/// Odd multiplier used to derive per-instance seeds (2^64 / golden ratio).
inline constexpr std::uint64_t kInstanceSeedMultiplier = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct ExperimentSeed {
    std::uint64_t base_seed = 0;
    std::uint64_t instance_index = 0;

    /// base_seed XOR (instance_index * kInstanceSeedMultiplier)
    std::uint64_t instance_seed() const { return base_seed ^ (instance_index * kInstanceSeedMultiplier); }
};

/// Independent named sub-stream of a seed (mdp, mask, noise, dataset, ...).
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag + 0x632BE59BD9B4E019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Exp(1) by inversion.
    double exponential() { return -std::log1p(-uniform()); }

    /// Uniform integer in [0, n) without modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Index drawn from a cumulative distribution (last entry ~ 1).
    template <class Cdf>
    std::size_t categorical(const Cdf& cdf) {
        const double u = uniform() * cdf[cdf.size() - 1];
        std::size_t lo = 0, hi = static_cast<std::size_t>(cdf.size()) - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (u < cdf[mid]) hi = mid;
            else lo = mid + 1;
        }
        return lo;
    }

    /// k distinct elements of `pool`, uniformly without replacement (partial Fisher-Yates).
    template <class T>
    std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace gammareg

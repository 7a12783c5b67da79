#pragma once

// Seeded randomness with named substreams. All randomness in a run flows
// from one root seed; substreams ("gan.chunk0", "cv.fold3", ...) make each
// stage independently reproducible and safe to run concurrently.
//
// Distributions are hand-rolled on top of mt19937_64 so that identical
// seeds give identical streams regardless of standard-library vendor.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace logbal {

namespace detail {
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
} // namespace detail

class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    /// Independent stream derived from this stream's seed and a name.
    Rng substream(std::string_view name) const {
        return Rng(detail::splitmix64(seed_ ^ detail::fnv1a64(name)));
    }

    Rng substream(std::string_view name, uint64_t index) const {
        return substream(std::string(name) + std::to_string(index));
    }

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (spare cached).
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    template <class V>
    void shuffle(V& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Deterministic permutation of 0..n-1.
    std::vector<uint32_t> permutation(uint32_t n) {
        std::vector<uint32_t> p(n);
        for (uint32_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace logbal

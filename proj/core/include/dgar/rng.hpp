#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dgar {

// Deterministic RNG. mt19937_64 has a standard-specified output sequence and
// the transforms below are written out explicitly, so streams are identical
// across platforms and standard libraries (std::normal_distribution is not).
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    int64_t uniform_int(int64_t n) {  // [0, n)
        return static_cast<int64_t>(uniform01() * static_cast<double>(n)) % n;
    }

    // Standard normal via Box-Muller. Two engine draws per pair; the spare
    // is cached so consumption order stays well defined.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double std) { return mean + std * gaussian(); }

    template <class It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            auto j = uniform_int(static_cast<int64_t>(i) + 1);
            std::swap(first[i], first[j]);
        }
    }

    // Derives an independent stream for a sub-task; used to make per-sample
    // generation order-independent.
    static uint64_t mix(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
        uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
        for (uint64_t x : {a, b, c}) {
            h ^= x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            h *= 0xff51afd7ed558ccdull;
            h ^= h >> 33;
        }
        return h;
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dgar

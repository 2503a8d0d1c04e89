#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "plan/matrix.hpp"

namespace plan {

// Deterministic pseudorandom generator: xoshiro256** with splitmix64 seeding.
// The algorithm is fixed here so that a given seed reproduces the same draw
// sequence on every platform and build. Distribution sampling (uniform
// doubles, normals) is implemented explicitly for the same reason; the
// standard library distributions are not bit-stable across implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via the polar (Marsaglia) method; avoids trig calls.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // Unbiased integer in [0, n) by rejection.
    uint64_t uniform_below(uint64_t n) {
        const uint64_t limit = ~uint64_t{0} - ~uint64_t{0} % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Fisher-Yates shuffle driven by this generator.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent generator derived from the *original* seed and a stream id,
    // so the derivation does not depend on how many draws were consumed.
    Rng child(uint64_t stream) const {
        uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ull * (stream + 1));
        x = splitmix64(x);
        return Rng(splitmix64(x));
    }

    uint64_t seed() const { return seed_; }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    static uint64_t splitmix64(uint64_t&& x) {
        uint64_t y = x;
        return splitmix64(y);
    }

    uint64_t seed_;
    uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline Matrix gaussian_matrix(Rng& rng, size_t rows, size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = stddev * rng.normal();
    return m;
}

inline std::vector<double> gaussian_vector(Rng& rng, size_t n, double stddev) {
    std::vector<double> v(n);
    for (double& x : v) x = stddev * rng.normal();
    return v;
}

}  // namespace plan

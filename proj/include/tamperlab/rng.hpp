#pragma once

// Deterministic random number generation: splitmix64 for seeding / stream
// derivation, xoshiro256++ as the bulk generator. All derived distributions
// (uniform doubles, normals) are computed with exactly-rounded IEEE ops and an
// in-repo log so that a given (seed, call sequence) yields the same bytes on
// every platform. Test vectors live in tests/test_rng.cpp.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace tlab {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Independent child seed for a named sub-stream (data samples, module init).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t s = base;
    std::uint64_t a = splitmix64_next(s);
    std::uint64_t t = a ^ (0xD1B54A32D192ED03ull * (salt + 1));
    return splitmix64_next(t);
}

// Natural log built from exact IEEE primitives (frexp, +, *, /) so results do
// not depend on the platform's libm. Accurate to ~1 ulp for x > 0.
inline double det_log(double x) {
    int e = 0;
    double m = std::frexp(x, &e); // m in [0.5, 1)
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    const double t = (m - 1.0) / (m + 1.0); // |t| <= 0.1716
    const double t2 = t * t;
    double sum = 0.0;
    double pow = t;
    for (int k = 1; k <= 25; k += 2) { // fixed depth: converged for double
        sum += pow / static_cast<double>(k);
        pow *= t2;
    }
    return static_cast<double>(e) * 0.69314718055994530942 + 2.0 * sum;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64_next(sm);
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53 random mantissa bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Plain modulo; the bias is < n / 2^64 and the
    // mapping is part of the documented stream contract.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    // Inclusive integer range.
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool chance(double p) { return uniform() < p; }

    // Standard normal via the Marsaglia polar method; consumes pairs of
    // uniforms, caches the spare deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0, v = 0.0, s = 0.0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * det_log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Rng child(std::uint64_t salt) const { return Rng(derive_seed(s_[0] ^ s_[3], salt)); }

    // Serializable state: 4 words of xoshiro state, spare flag, spare bits.
    std::array<std::uint64_t, 6> state() const {
        std::uint64_t spare_bits = 0;
        static_assert(sizeof(spare_bits) == sizeof(spare_));
        std::memcpy(&spare_bits, &spare_, sizeof(spare_bits));
        return {s_[0], s_[1], s_[2], s_[3], has_spare_ ? 1ull : 0ull, spare_bits};
    }

    void restore(const std::array<std::uint64_t, 6>& st) {
        for (int i = 0; i < 4; ++i) s_[i] = st[static_cast<std::size_t>(i)];
        has_spare_ = st[4] != 0;
        std::memcpy(&spare_, &st[5], sizeof(spare_));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over a byte string; used for config hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

} // namespace tlab

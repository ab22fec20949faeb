#pragma once

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <string>
#include <string_view>

namespace jeca {

// Deterministic, portable PRNG (xoshiro256** seeded via splitmix64).
// All randomness in the project flows through this so that runs are
// bit-reproducible across builds of the same binary.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    // Derives an independent stream, e.g. per image or per dataset item.
    static Rng stream(uint64_t master_seed, uint64_t stream_id) {
        uint64_t sm = master_seed;
        splitmix64(sm);
        sm ^= 0x6a09e667f3bcc909ULL + stream_id * 0x9e3779b97f4a7c15ULL;
        return Rng(splitmix64(sm));
    }

    static Rng stream(uint64_t master_seed, std::string_view tag);

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        // Rejection-free modulo is fine here; n is tiny relative to 2^64.
        return next_u64() % n;
    }

    int range(int lo, int hi_inclusive) {
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi_inclusive - lo + 1)));
    }

    double normal() {
        // Box-Muller; consumes two uniforms deterministically.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4]{};
};

// Seed derived from a master seed and a textual tag (FNV-1a + splitmix).
inline uint64_t splitmix_combine(uint64_t master_seed, std::string_view tag) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    uint64_t sm = master_seed;
    splitmix64(sm);
    sm ^= 0x6a09e667f3bcc909ULL + h * 0x9e3779b97f4a7c15ULL;
    return splitmix64(sm);
}

inline Rng Rng::stream(uint64_t master_seed, std::string_view tag) {
    return Rng(splitmix_combine(master_seed, tag));
}

}  // namespace jeca

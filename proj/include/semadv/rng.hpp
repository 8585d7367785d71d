#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace semadv::rng {

// splitmix64; used to spread seed material before feeding mt19937_64.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// A named random stream. Streams with the same (seed, tag) are identical;
// distinct tags decorrelate. All randomness in the project goes through
// explicit streams so that runs are a pure function of the config seed.
class Stream {
public:
    Stream(uint64_t seed, std::string_view tag) {
        uint64_t s = seed ^ fnv1a(tag);
        std::seed_seq seq{splitmix64(s), splitmix64(s), splitmix64(s), splitmix64(s)};
        gen_.seed(seq);
    }

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0,1). Bit construction is pinned here instead of relying on
    // std::uniform_real_distribution, whose output is implementation-defined.
    double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * u01(); }

    // Box-Muller, cached second value.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = u01(), u2 = u01();
        while (u1 <= 0.0) u1 = u01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    // Integer in [0, n).
    uint64_t below(uint64_t n) {
        // rejection sampling to avoid modulo bias
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<uint64_t>(last - first);
        for (uint64_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Process-wide base seed; set once per run before any stream is created.
void seed_all(uint64_t seed);
uint64_t base_seed();

// Stream derived from the process seed.
Stream derive(std::string_view tag);

}  // namespace semadv::rng

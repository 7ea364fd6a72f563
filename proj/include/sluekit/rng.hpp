#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace sluekit {

// Deterministic RNG. std::mt19937_64 is bit-exact across platforms, but the
// standard distributions are not, so the draws below are hand-rolled.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(engine_() % span);
    }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    uint64_t next_u64() { return engine_(); }

    // State round-trips through text, for checkpoints.
    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    std::mt19937_64 engine_;
};

// FNV-1a style seed mixing, used to derive independent streams from one seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (int i = 0; i < 8; ++i) {
        h ^= (salt >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

inline uint64_t mix_seed(uint64_t seed, const std::string& salt) {
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : salt) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

}  // namespace sluekit

#pragma once

#include <cstdint>
#include <vector>

namespace sm {

// splitmix64 step. All randomness in the project is derived from this
// mixer so that streams are identical across platforms and compilers.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Derives a child seed from (parent, index). Used for per-pair dataset
// seeds and per-module parameter seeds: child = mix(master, k).
inline uint64_t mix_seed(uint64_t parent, uint64_t index) {
    uint64_t s = parent ^ (0x9E3779B97F4A7C15ull * (index + 1));
    return splitmix64(s);
}

// Deterministic RNG. uniform/normal/shuffle are implemented explicitly
// (not via <random> distributions, whose output is implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    uint64_t uniform_int(uint64_t n);

    // Standard normal via Box-Muller. Consumes two uniforms per call.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace sm

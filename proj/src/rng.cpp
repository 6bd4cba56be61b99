#include "stylemill/rng.hpp"

#include <cmath>

#include "stylemill/error.hpp"

namespace sm {

uint64_t Rng::uniform_int(uint64_t n) {
    SM_CHECK(n > 0, "uniform_int: n must be positive");
    if (n == 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double Rng::normal() {
    // Box-Muller, cosine branch. u1 is clamped away from zero so the log
    // stays finite.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace sm

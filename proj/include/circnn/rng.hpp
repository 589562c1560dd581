#pragma once

// Deterministic random streams.  Monte-Carlo drivers derive one stream per
// trial from (master seed, trial index) so results do not depend on
// evaluation order; the generators below avoid std::*_distribution, whose
// output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace circnn {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : base_(splitmix64(seed)), engine_(base_) {}

    // Independent stream for a sub-task (trial index, purpose tag, ...).
    Rng stream(std::uint64_t tag) const {
        return Rng(splitmix64(base_ ^ splitmix64(tag ^ 0xa0761d6478bd642fULL)), 0);
    }

    double uniform() { // [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() { // Box-Muller, one cached mate
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double tau = 6.283185307179586476925286766559;
        spare_ = r * std::sin(tau * u2);
        have_spare_ = true;
        return r * std::cos(tau * u2);
    }

    std::vector<double> gaussian_vector(std::size_t n, double sigma = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = sigma * gaussian();
        return v;
    }

    std::vector<double> uniform_vector(std::size_t n, double lo = 0.0, double hi = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = uniform(lo, hi);
        return v;
    }

  private:
    Rng(std::uint64_t mixed, int) : base_(mixed), engine_(mixed) {}

    std::uint64_t base_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace circnn

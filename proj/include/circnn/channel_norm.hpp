#pragma once

// Channel normalization: z' = (z - mean(z)) / sqrt(var(z) + eps) * gamma + beta
// with the biased (1/n) variance, applied per channel over its spatial
// positions.  Modes: learned (gamma, beta trained), fixed (gamma=1, beta=0),
// none.

#include <cmath>
#include <cstddef>
#include <vector>

#include "circnn/errors.hpp"
#include "circnn/types.hpp"

namespace circnn {

enum class NormMode { learned, fixed, none };

struct NormParams {
    double gamma = 1.0;
    double beta = 0.0;
    double epsilon = 1e-6;
};

struct ChannelMoments {
    double mean = 0.0;
    double var = 0.0; // biased
};

inline ChannelMoments moments(const double* z, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += z[i];
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = z[i] - m;
        v += c * c;
    }
    v /= static_cast<double>(n);
    return {m, v};
}

inline ChannelMoments normalize_span(const double* z, double* out, std::size_t n,
                                     const NormParams& p) {
    require(n >= 2, "normalize: need at least 2 positions");
    require(p.epsilon > 0.0, "normalize: epsilon must be positive");
    const auto mo = moments(z, n);
    const double inv = 1.0 / std::sqrt(mo.var + p.epsilon);
    for (std::size_t i = 0; i < n; ++i) out[i] = (z[i] - mo.mean) * inv * p.gamma + p.beta;
    return mo;
}

inline std::vector<double> normalize(const std::vector<double>& z, const NormParams& p) {
    std::vector<double> out(z.size());
    normalize_span(z.data(), out.data(), z.size(), p);
    return out;
}

inline Signal normalize(const Signal& z, const NormParams& p) {
    return Signal(normalize(z.values, p));
}

struct NormVjp {
    std::vector<double> grad_z;
    double grad_gamma = 0.0;
    double grad_beta = 0.0;
};

// Exact vector-Jacobian product of normalize() at z against upstream g.
inline NormVjp normalize_vjp(const std::vector<double>& z, const NormParams& p,
                             const std::vector<double>& g) {
    require(z.size() == g.size(), "normalize_vjp: size mismatch");
    require(z.size() >= 2, "normalize_vjp: need at least 2 positions");
    const std::size_t n = z.size();
    const double dn = static_cast<double>(n);
    const auto mo = moments(z.data(), n);
    const double s = std::sqrt(mo.var + p.epsilon);

    double gsum = 0.0, gdotc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        gsum += g[i];
        gdotc += g[i] * (z[i] - mo.mean);
    }

    NormVjp r;
    r.grad_beta = gsum;
    r.grad_gamma = gdotc / s; // <g, (z - mean)/s>
    r.grad_z.resize(n);
    const double gmean = gsum / dn;
    const double k = gdotc / (dn * s * s * s);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = z[i] - mo.mean;
        r.grad_z[i] = p.gamma * ((g[i] - gmean) / s - c * k);
    }
    return r;
}

} // namespace circnn

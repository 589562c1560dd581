#pragma once

// Losses and gradients.
//
// linear1c has closed forms in the Fourier domain: with s_k the spectrum of
// the product of all layers but k applied after the input circulant, the
// plain-chain gradient of (1/2)||y - f||^2 restricted to the support of
// kernel k is ifft(conj(s_k) * fft(f - y)).  The normalized chain
// f = w_{d+1} g / ||g|| differentiates to a projection: the upstream vector
// seen by layer k is -(w_{d+1}/||g||) (I - uu^T) y with u = g/||g||, so every
// kernel gradient is orthogonal to radial motion of that layer and scaling a
// layer by gamma scales its own gradient by 1/gamma while leaving the others
// unchanged.
//
// The multichannel families use reverse mode through the layerwise engine.
// Loss conventions: linear1c and mcnn1d use (1/2)||y - f||^2, gen2d uses
// ||y - f||^2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "circnn/circulant.hpp"
#include "circnn/errors.hpp"
#include "circnn/fft.hpp"
#include "circnn/network.hpp"
#include "circnn/rng.hpp"
#include "circnn/types.hpp"

namespace circnn {

// ------------------------------------------------------- Fourier residual

// Per-frequency residuals of the plain chain against the target, in unitary
// DFT coordinates: residual_j = fj^H y - n^(d/2) (prod_i fj^H w_i) fj^H x.
// total = (1/2) sum_j |residual_j|^2 equals the spatial loss (1/2)||y - f||^2.
struct FourierLossTerms {
    std::vector<cdouble> residuals;
    double total = 0.0;
};

inline FourierLossTerms fourier_loss(const std::vector<Kernel>& kernels, const Signal& x,
                                     const Signal& y) {
    require(!kernels.empty(), "fourier_loss: empty chain");
    const std::size_t n = x.n();
    require(y.n() == n && kernels.front().ambient == n, "fourier_loss: size mismatch");
    auto fx = fft_real(x.values);
    auto fy = fft_real(y.values);
    std::vector<cdouble> prod(n, cdouble(1.0, 0.0));
    for (const auto& k : kernels) {
        auto fw = spectrum(k).eigenvalues;
        for (std::size_t j = 0; j < n; ++j) prod[j] *= fw[j];
    }
    FourierLossTerms out;
    out.residuals.resize(n);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
        out.residuals[j] = (fy[j] - prod[j] * fx[j]) * inv_sqrt_n;
        out.total += 0.5 * std::norm(out.residuals[j]);
    }
    return out;
}

inline FourierLossTerms fourier_loss(const KernelStack& stack, const Signal& x, const Signal& y) {
    return fourier_loss(stack.kernels, x, y);
}

// ||D(v)|| = ||y - f||, the residual's l2 norm.
inline double displacement_norm(const std::vector<Kernel>& kernels, const Signal& x,
                                const Signal& y) {
    return std::sqrt(2.0 * fourier_loss(kernels, x, y).total);
}

// ----------------------------------------------------- linear1c gradients

namespace detail {

struct ChainSpectra {
    std::vector<std::vector<cdouble>> loo; // loo[k] = prod_{i != k} fft(w_i)
    std::vector<cdouble> all;              // prod_i fft(w_i)
};

inline ChainSpectra chain_spectra(const std::vector<Kernel>& kernels, std::size_t n) {
    const std::size_t d = kernels.size();
    std::vector<std::vector<cdouble>> fw(d);
    for (std::size_t i = 0; i < d; ++i) fw[i] = spectrum(kernels[i]).eigenvalues;
    std::vector<std::vector<cdouble>> pre(d + 1), suf(d + 1);
    pre[0].assign(n, cdouble(1.0, 0.0));
    for (std::size_t i = 0; i < d; ++i) {
        pre[i + 1] = pre[i];
        for (std::size_t j = 0; j < n; ++j) pre[i + 1][j] *= fw[i][j];
    }
    suf[d].assign(n, cdouble(1.0, 0.0));
    for (std::size_t i = d; i-- > 0;) {
        suf[i] = suf[i + 1];
        for (std::size_t j = 0; j < n; ++j) suf[i][j] *= fw[i][j];
    }
    ChainSpectra cs;
    cs.loo.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        cs.loo[k].resize(n);
        for (std::size_t j = 0; j < n; ++j) cs.loo[k][j] = pre[k][j] * suf[k + 1][j];
    }
    cs.all = std::move(pre[d]);
    return cs;
}

// Support-restricted ifft(conj(s_k) * upstream_hat) for each layer, where
// s_k = loo[k] * fft(x).
inline std::vector<std::vector<double>> per_layer_pullback(const std::vector<Kernel>& kernels,
                                                           const ChainSpectra& cs,
                                                           const std::vector<cdouble>& fx,
                                                           const std::vector<cdouble>& up_hat) {
    const std::size_t n = fx.size();
    std::vector<std::vector<double>> grads(kernels.size());
    std::vector<cdouble> buf(n);
    for (std::size_t k = 0; k < kernels.size(); ++k) {
        for (std::size_t j = 0; j < n; ++j) buf[j] = std::conj(cs.loo[k][j] * fx[j]) * up_hat[j];
        fft_inplace(buf, /*inverse=*/true);
        grads[k].resize(kernels[k].p());
        for (std::size_t l = 0; l < grads[k].size(); ++l) grads[k][l] = buf[l].real();
    }
    return grads;
}

} // namespace detail

struct LinearGrads {
    std::vector<std::vector<double>> kernels; // support-restricted, per layer
    double out_scale = 0.0;
    double loss = 0.0;
};

// Gradient of (1/2)||y - W_d...W_1 x||^2 in each kernel's support coordinates.
inline LinearGrads grad_plain_linear(const std::vector<Kernel>& kernels, const Signal& x,
                                     const Signal& y) {
    require(!kernels.empty(), "grad_plain_linear: empty chain");
    const std::size_t n = x.n();
    require(y.n() == n, "grad_plain_linear: size mismatch");
    auto fx = fft_real(x.values);
    auto fy = fft_real(y.values);
    auto cs = detail::chain_spectra(kernels, n);
    std::vector<cdouble> diff_hat(n);
    double loss = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        diff_hat[j] = cs.all[j] * fx[j] - fy[j];
        loss += std::norm(diff_hat[j]);
    }
    LinearGrads out;
    out.loss = 0.5 * loss / static_cast<double>(n);
    out.kernels = detail::per_layer_pullback(kernels, cs, fx, diff_hat);
    return out;
}

// Gradient of (1/2)||y - w_{d+1} g/||g||||^2, g = W_d...W_1 x, including the
// trailing scalar.  Throws DegenerateForward when ||g|| underflows.
inline LinearGrads grad_norm_linear(const KernelStack& stack, const Signal& x, const Signal& y) {
    require(!stack.kernels.empty(), "grad_norm_linear: empty chain");
    const std::size_t n = x.n();
    require(y.n() == n, "grad_norm_linear: size mismatch");
    require(std::abs(mean(x.values)) <= 1e-9 * std::max(1.0, norm2(x.values)),
            "grad_norm_linear: input must be centered");
    auto fx = fft_real(x.values);
    auto cs = detail::chain_spectra(stack.kernels, n);
    std::vector<cdouble> g_hat(n);
    for (std::size_t j = 0; j < n; ++j) g_hat[j] = cs.all[j] * fx[j];
    auto g = ifft_to_real(g_hat);
    const double ng = norm2(g);
    if (ng < 1e-300) throw DegenerateForward("grad_norm_linear: vanishing product norm");

    std::vector<double> u(n);
    for (std::size_t j = 0; j < n; ++j) u[j] = g[j] / ng;
    const double yu = dot(y.values, u);

    LinearGrads out;
    double loss = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double diff = y.values[j] - stack.out_scale * u[j];
        loss += diff * diff;
    }
    out.loss = 0.5 * loss;
    out.out_scale = stack.out_scale - yu;

    // upstream into g: -(w_{d+1}/||g||) (I - uu^T) y
    std::vector<double> dg(n);
    const double scale = -stack.out_scale / ng;
    for (std::size_t j = 0; j < n; ++j) dg[j] = scale * (y.values[j] - yu * u[j]);
    auto dg_hat = fft_real(dg);
    out.kernels = detail::per_layer_pullback(stack.kernels, cs, fx, dg_hat);
    return out;
}

// --------------------------------------------------- reverse-mode wrappers

struct ReverseResult {
    GradientSet grads;
    double loss = 0.0;
};

// linear1c, all norm modes.  The none/fixed paths run the spatial layerwise
// chain (independent of the Fourier closed forms); learned runs the
// finite-epsilon per-layer normalization with trained gamma/beta/out_scale.
inline ReverseResult grad_reverse(const NetworkSpec& spec, const KernelStack& stack,
                                  const Signal& x, const Signal& y) {
    require(spec.family == Family::linear1c, "grad_reverse(Signal): linear1c only");
    spec.validate();
    const std::size_t n = x.n();
    require(y.n() == n, "grad_reverse: size mismatch");
    ReverseResult out;

    KernelStack es = engine::as_engine_stack(stack);
    if (spec.norm == NormMode::learned) {
        auto t = engine::forward_1d(es, x.values, 1, n, NormMode::learned, spec.epsilon, false);
        std::vector<double> dout(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = t.out[j] - y.values[j];
            out.loss += 0.5 * diff * diff;
            dout[j] = diff;
        }
        GradientSet eg;
        engine::backward_1d(es, t, dout, n, NormMode::learned, spec.epsilon, false, eg);
        out.grads.kernels = std::move(eg.layers);
        out.grads.out_scale = eg.mix[0];
        out.grads.gammas = std::move(eg.gammas);
        out.grads.betas = std::move(eg.betas);
        return out;
    }

    es.mix = {1.0}; // raw chain output g
    auto t = engine::forward_1d(es, x.values, 1, n, NormMode::none, spec.epsilon, false);
    std::vector<double> dg(n);
    if (spec.norm == NormMode::none) {
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = t.out[j] - y.values[j];
            out.loss += 0.5 * diff * diff;
            dg[j] = diff;
        }
    } else { // fixed: collapse g through w_{d+1} g/||g||
        const double ng = norm2(t.out);
        if (ng < 1e-300) throw DegenerateForward("grad_reverse: vanishing product norm");
        std::vector<double> u(n);
        for (std::size_t j = 0; j < n; ++j) u[j] = t.out[j] / ng;
        const double yu = dot(y.values, u);
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = y.values[j] - stack.out_scale * u[j];
            out.loss += 0.5 * diff * diff;
        }
        out.grads.out_scale = stack.out_scale - yu;
        const double scale = -stack.out_scale / ng;
        for (std::size_t j = 0; j < n; ++j) dg[j] = scale * (y.values[j] - yu * u[j]);
    }
    GradientSet eg;
    engine::backward_1d(es, t, dg, n, NormMode::none, spec.epsilon, false, eg);
    out.grads.kernels = std::move(eg.layers);
    return out;
}

inline ReverseResult grad_reverse(const NetworkSpec& spec, const KernelStack& stack,
                                  const MultiSignal& x, const Signal& y) {
    require(spec.family == Family::mcnn1d, "grad_reverse(MultiSignal): mcnn1d only");
    spec.validate();
    const std::size_t n = x.length;
    require(y.n() == n, "grad_reverse: size mismatch");
    auto t = engine::forward_1d(stack, x.values, x.channels, n, spec.norm, spec.epsilon, true);
    ReverseResult out;
    std::vector<double> dout(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double diff = t.out[j] - y.values[j];
        out.loss += 0.5 * diff * diff;
        dout[j] = diff;
    }
    engine::backward_1d(stack, t, dout, n, spec.norm, spec.epsilon, true, out.grads);
    return out;
}

inline ReverseResult grad_reverse(const NetworkSpec& spec, const KernelStack& stack,
                                  const Volume& x, const Image& y) {
    require(spec.family == Family::gen2d, "grad_reverse(Volume): gen2d only");
    spec.validate();
    const std::size_t plane = x.height * x.width;
    require(y.values.size() == plane, "grad_reverse: size mismatch");
    auto t = engine::forward_2d(stack, x.values, x.channels, x.height, x.width, spec.norm,
                                spec.epsilon, true);
    ReverseResult out;
    std::vector<double> dout(plane);
    for (std::size_t j = 0; j < plane; ++j) {
        const double diff = t.out[j] - y.values[j];
        out.loss += diff * diff;
        dout[j] = 2.0 * diff;
    }
    engine::backward_2d(stack, t, dout, x.height, x.width, spec.norm, spec.epsilon, true,
                        out.grads);
    return out;
}

// ----------------------------------------------------------- loss values

inline double loss_value(const NetworkSpec& spec, const KernelStack& stack, const Signal& x,
                         const Signal& y) {
    spec.validate();
    require(spec.family == Family::linear1c, "loss_value(Signal): linear1c only");
    Signal f = (spec.norm == NormMode::none)    ? forward_linear_plain(stack, x)
               : (spec.norm == NormMode::fixed) ? forward_linear_norm(stack, x)
                                                : forward_linear_layered(stack, x, spec);
    double s = 0.0;
    for (std::size_t j = 0; j < x.n(); ++j) {
        const double d = f.values[j] - y.values[j];
        s += d * d;
    }
    return 0.5 * s;
}

inline double loss_value(const NetworkSpec& spec, const KernelStack& stack, const MultiSignal& x,
                         const Signal& y) {
    Signal f = forward_mcnn1d(stack, x, spec);
    double s = 0.0;
    for (std::size_t j = 0; j < y.n(); ++j) {
        const double d = f.values[j] - y.values[j];
        s += d * d;
    }
    return 0.5 * s;
}

inline double loss_value(const NetworkSpec& spec, const KernelStack& stack, const Volume& x,
                         const Image& y) {
    Image f = forward_gen2d(stack, x, spec);
    double s = 0.0;
    for (std::size_t j = 0; j < y.values.size(); ++j) {
        const double d = f.values[j] - y.values[j];
        s += d * d;
    }
    return s;
}

// ------------------------------------------------------ finite differences

struct FdReport {
    double max_rel_err = 0.0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_fd = 0.0;
    std::size_t coords_checked = 0;
};

// Central differences against an analytic gradient, errors measured relative
// to max(||analytic||_inf, ||fd||_inf, 1).  Set max_coords to subsample a
// deterministic random subset of coordinates on large parameter vectors.
template <typename LossFn>
FdReport fd_check(LossFn&& loss, const std::vector<double>& at,
                  const std::vector<double>& analytic, double step = 1e-6,
                  std::size_t max_coords = 0, std::uint64_t seed = 1) {
    require(at.size() == analytic.size(), "fd_check: size mismatch");
    std::vector<std::size_t> idx(at.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (max_coords > 0 && max_coords < idx.size()) {
        Rng rng(seed);
        for (std::size_t i = 0; i < max_coords; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(idx.size() - i));
            std::swap(idx[i], idx[std::min(j, idx.size() - 1)]);
        }
        idx.resize(max_coords);
    }
    double ref = 1.0;
    for (double g : analytic) ref = std::max(ref, std::abs(g));

    FdReport rep;
    rep.coords_checked = idx.size();
    std::vector<double> probe = at;
    for (std::size_t i : idx) {
        const double h = step * (1.0 + std::abs(at[i]));
        probe[i] = at[i] + h;
        const double lp = loss(probe);
        probe[i] = at[i] - h;
        const double lm = loss(probe);
        probe[i] = at[i];
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max(ref, std::abs(fd));
        const double err = std::abs(fd - analytic[i]) / denom;
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst_coord = i;
            rep.worst_analytic = analytic[i];
            rep.worst_fd = fd;
        }
    }
    return rep;
}

} // namespace circnn

#pragma once

// Landscape theory for the plain linear circulant chain: a gradient-norm
// bound valid on parameter balls, Gaussian kernel-norm statistics, the
// norm-window conditions under which the bound certifies slow escape, a
// per-frequency suboptimality certificate, and the gradient-descent escape
// clock used to observe the depth scaling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "circnn/autograd.hpp"
#include "circnn/circulant.hpp"
#include "circnn/errors.hpp"
#include "circnn/fft.hpp"
#include "circnn/network.hpp"
#include "circnn/rng.hpp"
#include "circnn/trace.hpp"
#include "circnn/types.hpp"

namespace circnn {

// ------------------------------------------------------------ ball probes

// A parameter ball around a chain of kernels: radius in the stacked l2
// metric sum_k ||v_k - w_k||^2 <= r^2.  alpha and delta are the center's
// leave-one-out product ceiling and smallest layer norm; together they turn
// in-ball membership into layer-norm control via the envelope
// alpha * exp(sqrt(d) r / delta).
struct BallProbe {
    std::vector<Kernel> center;
    double radius = 0.0;
    double alpha = 0.0;
    double delta = 0.0;

    BallProbe(std::vector<Kernel> w, double r) : center(std::move(w)), radius(r) {
        require(!center.empty(), "BallProbe: empty chain");
        require(radius >= 0.0, "BallProbe: negative radius");
        const std::size_t d = center.size();
        std::vector<double> norms(d);
        for (std::size_t i = 0; i < d; ++i) norms[i] = norm2(center[i].support);
        delta = *std::min_element(norms.begin(), norms.end());
        require(delta > 0.0, "BallProbe: zero-norm layer");
        alpha = (d == 1) ? 1.0 : 0.0;
        for (std::size_t k = 0; k < d && d > 1; ++k) {
            double p = 1.0;
            for (std::size_t i = 0; i < d; ++i)
                if (i != k) p *= norms[i];
            alpha = std::max(alpha, p);
        }
    }

    double depth() const { return static_cast<double>(center.size()); }
    double envelope() const { return alpha * std::exp(std::sqrt(depth()) * radius / delta); }
};

inline double ball_distance_sq(const std::vector<Kernel>& v, const std::vector<Kernel>& w) {
    require(v.size() == w.size(), "ball_distance_sq: depth mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        require(v[i].p() == w[i].p(), "ball_distance_sq: support mismatch");
        for (std::size_t l = 0; l < v[i].p(); ++l) {
            const double dlt = v[i].support[l] - w[i].support[l];
            s += dlt * dlt;
        }
    }
    return s;
}

// Uniform sample from the probe's ball: Gaussian direction over the stacked
// support coordinates, length r * u^(1/D) with D the total coordinate count.
inline std::vector<Kernel> sample_in_ball(const BallProbe& probe, Rng& rng) {
    std::size_t D = 0;
    for (const auto& k : probe.center) D += k.p();
    std::vector<double> dir = rng.gaussian_vector(D, 1.0);
    double nn = norm2(dir);
    while (nn == 0.0) { // astronomically unlikely; keeps the scale well defined
        dir = rng.gaussian_vector(D, 1.0);
        nn = norm2(dir);
    }
    const double len = probe.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(D)) / nn;
    std::vector<Kernel> v = probe.center;
    std::size_t o = 0;
    for (auto& k : v)
        for (auto& w : k.support) w += len * dir[o++];
    return v;
}

// -------------------------------------------------- in-ball gradient bound

struct Lemma1Report {
    double residual_norm = 0.0; // ||y - f(v)||
    double grad_norm = 0.0;     // measured, all support coordinates stacked
    double grad_bound = 0.0;    // n^(d/2) ||D(v)|| ||x|| sqrt(d) * envelope
    double product = 0.0;       // prod_i ||v_i||
    double product_bound = 0.0; // envelope * max_k ||v_k||
    bool grad_ok = false;
    bool product_ok = false;
    bool holds() const { return grad_ok && product_ok; }
};

// Evaluates both certified inequalities at a point v of the probe's ball:
//   ||grad L(v)||  <=  n^(d/2) ||D(v)|| ||x|| alpha sqrt(d) exp(sqrt(d) r/delta)
//   prod_i ||v_i|| <=  alpha exp(sqrt(d) r/delta) max_k ||v_k||
// Throws VNotInBall when v lies outside (tiny roundoff slack allowed).
inline Lemma1Report lemma1_bound(const BallProbe& probe, const std::vector<Kernel>& v,
                                 const Signal& x, const Signal& y) {
    const double r2 = probe.radius * probe.radius;
    if (ball_distance_sq(v, probe.center) > r2 * (1.0 + 1e-12) + 1e-300)
        throw VNotInBall("lemma1_bound: point outside the probe ball");
    const std::size_t n = x.n();
    const double d = probe.depth();

    Lemma1Report rep;
    auto g = grad_plain_linear(v, x, y);
    double gsq = 0.0;
    for (const auto& layer : g.kernels)
        for (double w : layer) gsq += w * w;
    rep.grad_norm = std::sqrt(gsq);
    rep.residual_norm = std::sqrt(2.0 * g.loss);

    const double env = probe.envelope();
    rep.grad_bound = std::pow(static_cast<double>(n), d / 2.0) * rep.residual_norm *
                     norm2(x.values) * std::sqrt(d) * env;

    double prod = 1.0, maxn = 0.0;
    for (const auto& k : v) {
        const double nk = norm2(k.support);
        prod *= nk;
        maxn = std::max(maxn, nk);
    }
    rep.product = prod;
    rep.product_bound = env * maxn;

    const double slack = 1.0 + 1e-12;
    rep.grad_ok = rep.grad_norm <= rep.grad_bound * slack;
    rep.product_ok = rep.product <= rep.product_bound * slack;
    return rep;
}

// --------------------------------------------- Gaussian kernel statistics

// Kernels drawn entrywise N(0, 1/(n p)) on p support coordinates.  The norm
// is (1/sqrt(n p)) chi_p, so sqrt(n) E||w|| = sqrt(2/p) Gamma((p+1)/2) /
// Gamma(p/2) and the shrinkage constant c2 = 1 - sqrt(n) E||w|| depends on p
// alone.  The exponential rate is c = -(1/4) log(1 - c2).
inline double expected_kernel_norm(std::size_t n, std::size_t p) {
    const double pd = static_cast<double>(p);
    const double lg = std::lgamma((pd + 1.0) / 2.0) - std::lgamma(pd / 2.0);
    return std::sqrt(2.0 / (static_cast<double>(n) * pd)) * std::exp(lg);
}

inline double shrinkage_c2(std::size_t p) {
    const double pd = static_cast<double>(p);
    const double lg = std::lgamma((pd + 1.0) / 2.0) - std::lgamma(pd / 2.0);
    return 1.0 - std::sqrt(2.0 / pd) * std::exp(lg);
}

inline double rate_constant(std::size_t p) { return -0.25 * std::log1p(-shrinkage_c2(p)); }

struct InitStats {
    std::size_t n = 0, p = 0, trials = 0;
    double mean_theory = 0.0; // closed-form E||w||
    double mc_mean = 0.0;
    double mc_se = 0.0; // standard error of mc_mean
    double c2 = 0.0;
    double c = 0.0;  // -(1/4) log(1 - c2)
    double c1 = 0.0; // small-ball envelope: max_t Phat(||w|| <= t)/t over the grid
    std::vector<double> grid;       // t values, mean_theory * k/10, k = 1..20
    std::vector<double> small_ball; // Phat(||w|| <= t) per grid point
};

// Monte Carlo check of the norm statistics; trials must be at least 1e4 so
// the small-ball grid frequencies have support.
inline InitStats assumption1_stats(std::size_t n, std::size_t p, std::size_t trials, Rng& rng) {
    require(trials >= 10000, "assumption1_stats: need at least 1e4 trials");
    require(p >= 1 && n >= 1, "assumption1_stats: bad shape");
    InitStats st;
    st.n = n;
    st.p = p;
    st.trials = trials;
    st.mean_theory = expected_kernel_norm(n, p);
    st.c2 = shrinkage_c2(p);
    st.c = rate_constant(p);

    const double sigma = 1.0 / std::sqrt(static_cast<double>(n) * static_cast<double>(p));
    st.grid.resize(20);
    for (std::size_t k = 0; k < 20; ++k)
        st.grid[k] = st.mean_theory * static_cast<double>(k + 1) / 10.0;
    std::vector<std::size_t> hits(20, 0);

    double sum = 0.0, sumsq = 0.0;
    std::vector<double> w(p);
    for (std::size_t t = 0; t < trials; ++t) {
        for (auto& v : w) v = sigma * rng.gaussian();
        const double nw = norm2(w);
        sum += nw;
        sumsq += nw * nw;
        for (std::size_t k = 0; k < 20; ++k)
            if (nw <= st.grid[k]) ++hits[k];
    }
    const double T = static_cast<double>(trials);
    st.mc_mean = sum / T;
    const double var = std::max(0.0, sumsq / T - st.mc_mean * st.mc_mean);
    st.mc_se = std::sqrt(var / T);
    st.small_ball.resize(20);
    st.c1 = 0.0;
    for (std::size_t k = 0; k < 20; ++k) {
        st.small_ball[k] = static_cast<double>(hits[k]) / T;
        st.c1 = std::max(st.c1, st.small_ball[k] / st.grid[k]);
    }
    return st;
}

// -------------------------------------------------- norm-window conditions

// The three conditions under which the in-ball bound certifies slow escape:
// a leave-one-out product ceiling scaled by n^(d/2), and the window
// e^(-cd) <= ||w_i|| <= e^(cd) for every layer.
struct NormWindowReport {
    double loo_product = 0.0;
    double loo_ceiling = 0.0;
    double min_norm = 0.0, min_floor = 0.0;
    double max_norm = 0.0, max_ceiling = 0.0;
    bool product_ok = false, floor_ok = false, ceiling_ok = false;
    bool all() const { return product_ok && floor_ok && ceiling_ok; }
};

inline NormWindowReport norm_window_check(const std::vector<Kernel>& w, double c) {
    require(!w.empty(), "norm_window_check: empty chain");
    NormWindowReport rep;
    const double d = static_cast<double>(w.size());
    const double n = static_cast<double>(w.front().ambient);
    std::vector<double> norms(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) norms[i] = norm2(w[i].support);
    rep.min_norm = *std::min_element(norms.begin(), norms.end());
    rep.max_norm = *std::max_element(norms.begin(), norms.end());
    rep.loo_product = (w.size() == 1) ? 1.0 : 0.0;
    for (std::size_t k = 0; k < w.size() && w.size() > 1; ++k) {
        double p = 1.0;
        for (std::size_t i = 0; i < w.size(); ++i)
            if (i != k) p *= norms[i];
        rep.loo_product = std::max(rep.loo_product, p);
    }
    rep.loo_ceiling = std::exp(-2.0 * c * d) / std::pow(n, d / 2.0);
    rep.min_floor = std::exp(-c * d);
    rep.max_ceiling = std::exp(c * d);
    rep.product_ok = rep.loo_product <= rep.loo_ceiling;
    rep.floor_ok = rep.min_norm >= rep.min_floor;
    rep.ceiling_ok = rep.max_norm <= rep.max_ceiling;
    return rep;
}

// ------------------------------------------- per-frequency suboptimality

struct SuboptimalityReport {
    double loss = 0.0;
    double tau = 0.0;
    bool suboptimal = false; // loss > tau
    std::size_t dominant_freq = 0;
    double certified_floor = 0.0; // (1/2) max(0, gap)^2 at the dominant frequency
};

// Certifies loss > tau when possible: at each frequency j the chain output
// magnitude is capped by n^(d/2) prod_i ||v_i|| |xhat_j| (unitary transform),
// so the loss is at least (1/2)(|yhat_j| - cap_j)^2 whenever the cap falls
// short of the target spectrum.
inline SuboptimalityReport suboptimality_check(const std::vector<Kernel>& v, const Signal& x,
                                               const Signal& y, double tau) {
    require(!v.empty(), "suboptimality_check: empty chain");
    const std::size_t n = x.n();
    SuboptimalityReport rep;
    rep.tau = tau;
    rep.loss = fourier_loss(v, x, y).total;
    rep.suboptimal = rep.loss > tau;

    double prod = 1.0;
    for (const auto& k : v) prod *= norm2(k.support);
    const double cap_scale =
        std::pow(static_cast<double>(n), static_cast<double>(v.size()) / 2.0) * prod;
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    auto fx = fft_real(x.values);
    auto fy = fft_real(y.values);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        const double gap = std::abs(fy[j]) * inv_sqrt_n - cap_scale * std::abs(fx[j]) * inv_sqrt_n;
        if (gap > best) {
            best = gap;
            rep.dominant_freq = j;
        }
    }
    rep.certified_floor = 0.5 * std::max(0.0, best) * std::max(0.0, best);
    return rep;
}

inline SuboptimalityReport suboptimality_check(const KernelStack& stack, const Signal& x,
                                               const Signal& y, double tau) {
    return suboptimality_check(stack.kernels, x, y, tau);
}

// ----------------------------------------------------------- escape clock

enum class ExitReason { left_ball, reached_target, step_limit };

struct EscapeResult {
    std::size_t steps_in_ball = 0; // step index at which the iterate first left
    ExitReason reason = ExitReason::step_limit;
    double loss_at_exit = 0.0;
    double min_loss_in_ball = 0.0;
    double final_distance = 0.0;
    bool suboptimal_throughout = false; // min in-ball loss stayed above target
    double eta = 0.0;                   // step size actually used
    TrainTrace trace;                   // recorded when record_stride > 0
};

// Plain-chain projected gradient descent from w0, clocked until the iterate
// leaves the ball of the given radius around w0, the loss reaches
// target_loss, or max_steps updates have been applied.  The input/target
// spectra are computed once; each step costs 2d small transforms.
inline EscapeResult escape_run(const std::vector<Kernel>& w0, const Signal& x, const Signal& y,
                               double eta, double radius, std::size_t max_steps,
                               double target_loss, std::size_t record_stride = 0) {
    require(!w0.empty(), "escape_run: empty chain");
    require(eta > 0.0 && radius > 0.0 && max_steps > 0, "escape_run: bad config");
    const std::size_t n = x.n();
    require(y.n() == n, "escape_run: size mismatch");

    auto fx = fft_real(x.values);
    auto fy = fft_real(y.values);
    std::vector<Kernel> w = w0;
    EscapeResult res;
    res.eta = eta;
    res.min_loss_in_ball = std::numeric_limits<double>::infinity();
    const double r2 = radius * radius;

    for (std::size_t step = 0; step <= max_steps; ++step) {
        auto cs = detail::chain_spectra(w, n);
        std::vector<cdouble> diff_hat(n);
        double loss = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            diff_hat[j] = cs.all[j] * fx[j] - fy[j];
            loss += std::norm(diff_hat[j]);
        }
        loss = 0.5 * loss / static_cast<double>(n);
        res.loss_at_exit = loss;
        res.min_loss_in_ball = std::min(res.min_loss_in_ball, loss);
        res.steps_in_ball = step;
        res.final_distance = std::sqrt(ball_distance_sq(w, w0));
        auto grads = detail::per_layer_pullback(w, cs, fx, diff_hat);
        if (record_stride > 0 && (step % record_stride == 0 || step == max_steps)) {
            TraceRow row;
            row.step = step;
            row.loss = loss;
            row.layer_grad_norms.reserve(grads.size());
            for (const auto& gk : grads) row.layer_grad_norms.push_back(norm2(gk));
            row.dist_from_init = res.final_distance;
            res.trace.rows.push_back(std::move(row));
        }
        if (loss <= target_loss) {
            res.reason = ExitReason::reached_target;
            break;
        }
        if (step == max_steps) {
            res.reason = ExitReason::step_limit;
            break;
        }
        for (std::size_t k = 0; k < w.size(); ++k)
            for (std::size_t l = 0; l < w[k].p(); ++l) w[k].support[l] -= eta * grads[k][l];
        if (ball_distance_sq(w, w0) > r2) {
            res.steps_in_ball = step + 1;
            res.final_distance = std::sqrt(ball_distance_sq(w, w0));
            auto cs2 = detail::chain_spectra(w, n);
            double l2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) l2 += std::norm(cs2.all[j] * fx[j] - fy[j]);
            res.loss_at_exit = 0.5 * l2 / static_cast<double>(n);
            res.reason = ExitReason::left_ball;
            break;
        }
    }
    res.trace.final_loss = res.loss_at_exit;
    res.trace.min_loss = res.min_loss_in_ball;
    res.trace.steps_run = res.steps_in_ball;
    res.suboptimal_throughout = res.min_loss_in_ball > target_loss;
    return res;
}

// Seed-based entry point: draws the initialization entrywise N(0, 1/(np)) on
// each kernel support.  target_loss < 0 selects the default 0.01 ||y||^2.
inline EscapeResult escape_time(const NetworkSpec& spec, const Signal& x, const Signal& y,
                                double eta, double radius, std::uint64_t seed,
                                std::size_t max_steps, double target_loss = -1.0,
                                std::size_t record_stride = 0) {
    spec.validate();
    require(spec.family == Family::linear1c && spec.norm == NormMode::none,
            "escape_time: plain linear chain only");
    Rng rng(seed);
    const double sigma =
        1.0 / std::sqrt(static_cast<double>(spec.n) * static_cast<double>(spec.kernel));
    std::vector<Kernel> w0;
    w0.reserve(spec.depth);
    for (std::size_t i = 0; i < spec.depth; ++i)
        w0.emplace_back(rng.gaussian_vector(spec.kernel, sigma), spec.n);
    if (target_loss < 0.0) target_loss = 0.01 * norm2_sq(y.values);
    return escape_run(w0, x, y, eta, radius, max_steps, target_loss, record_stride);
}

// One deterministic trial of the escape experiment at depth d: random
// support-p chain target (exactly representable, ||y|| = 1), small random
// input (||x|| = x_norm), N(0, 1/(np)) init, ball radius
// radius_scale * e^(-cd)/sqrt(d) with c = rate_constant(p).  The step size
// is capped at e^(cd).
struct EscapeTrialConfig {
    std::size_t n = 16;
    std::size_t p = 3;
    double eta = 0.1;
    std::size_t max_steps = 200000;
    double target_frac = 0.01; // target_loss = target_frac * ||y||^2
    double x_norm = 0.05;
    double radius_scale = 1.0;
    std::size_t record_stride = 0;
};

inline EscapeResult escape_trial(const EscapeTrialConfig& cfg, std::size_t d,
                                 std::uint64_t seed) {
    require(d >= 1, "escape_trial: depth must be >= 1");
    Rng root(seed);
    Rng rx = root.stream(1);
    Rng rt = root.stream(2);

    auto xv = rx.gaussian_vector(cfg.n, 1.0);
    double nx = norm2(xv);
    while (nx == 0.0) {
        xv = rx.gaussian_vector(cfg.n, 1.0);
        nx = norm2(xv);
    }
    for (auto& v : xv) v *= cfg.x_norm / nx;
    Signal x(std::move(xv));

    const double sigma = 1.0 / std::sqrt(static_cast<double>(cfg.n) * static_cast<double>(cfg.p));
    std::vector<Kernel> teacher;
    Signal y(std::vector<double>(cfg.n, 0.0));
    double ny = 0.0;
    while (ny < 1e-12) { // resample degenerate teachers
        teacher.clear();
        for (std::size_t i = 0; i < d; ++i)
            teacher.emplace_back(rt.gaussian_vector(cfg.p, sigma), cfg.n);
        y = compose_apply(teacher, x);
        ny = norm2(y.values);
    }
    for (auto& v : y.values) v /= ny;

    const double c = rate_constant(cfg.p);
    const double cd = c * static_cast<double>(d);
    const double radius = cfg.radius_scale * std::exp(-cd) / std::sqrt(static_cast<double>(d));
    const double eta = std::min(cfg.eta, std::exp(cd));

    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = cfg.n;
    spec.depth = d;
    spec.kernel = cfg.p;
    spec.norm = NormMode::none;
    const std::uint64_t init_seed = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    return escape_time(spec, x, y, eta, radius, init_seed, cfg.max_steps,
                       cfg.target_frac * norm2_sq(y.values), cfg.record_stride);
}

} // namespace circnn

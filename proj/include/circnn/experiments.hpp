#pragma once

// Training loops, landscape slicing, gradient-norm sampling, and synthetic
// targets.  Everything here is deterministic given (config, seed): trial
// RNGs derive from the master seed and the trial index, never from run
// order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "circnn/autograd.hpp"
#include "circnn/errors.hpp"
#include "circnn/io.hpp"
#include "circnn/network.hpp"
#include "circnn/rng.hpp"
#include "circnn/trace.hpp"
#include "circnn/types.hpp"

namespace circnn {

// ---------------------------------------------------------------- training

struct TrainConfig {
    NetworkSpec spec;
    double eta = 0.05;
    std::size_t steps = 100000;
    std::uint64_t seed = 1;
    InitScheme init = InitScheme::gaussian_np;
    double sigma = 0.0; // conv-weight sigma for InitScheme::custom
    std::size_t record_stride = 100;
    double stop_loss = -1.0;         // > 0: stop once loss <= stop_loss
    double divergence_limit = 1e12;  // loss beyond this aborts with Diverged
};

struct TrainRun {
    TrainTrace trace;
    KernelStack weights; // final iterate
    KernelStack init_weights;
};

namespace detail {

template <typename X, typename Y>
TrainRun train_impl(const TrainConfig& cfg, const X& x, const Y& y, std::size_t in_channels) {
    cfg.spec.validate();
    require(cfg.eta > 0.0, "run_training: eta must be positive");
    require(cfg.record_stride >= 1, "run_training: record_stride must be >= 1");

    Rng rng(cfg.seed);
    KernelStack stack = init_stack(cfg.spec, in_channels, cfg.init, cfg.sigma, rng);
    TrainRun run;
    run.init_weights = stack;

    TrainTrace& trace = run.trace;
    trace.min_loss = std::numeric_limits<double>::infinity();
    std::size_t updates = 0;

    auto record = [&](std::size_t step, const ReverseResult& rr) {
        TraceRow row;
        row.step = step;
        row.loss = rr.loss;
        row.layer_grad_norms = layer_grad_norms(rr.grads);
        row.dist_from_init = stack_distance(cfg.spec, stack, run.init_weights);
        trace.rows.push_back(std::move(row));
    };

    ReverseResult rr;
    for (std::size_t t = 0;; ++t) {
        rr = grad_reverse(cfg.spec, stack, x, y);
        if (rr.loss < trace.min_loss) {
            trace.min_loss = rr.loss;
            trace.min_loss_step = t;
        }
        const bool last =
            t == cfg.steps || (cfg.stop_loss > 0.0 && rr.loss <= cfg.stop_loss);
        if (t % cfg.record_stride == 0 || last) {
            if (trace.rows.empty() || trace.rows.back().step != t) record(t, rr);
        }
        if (!(rr.loss <= cfg.divergence_limit)) { // also catches NaN
            trace.final_loss = rr.loss;
            trace.steps_run = updates;
            throw Diverged("run_training: loss exceeded divergence limit", trace);
        }
        if (last) break;
        stack_axpy(cfg.spec, stack, rr.grads, -cfg.eta);
        ++updates;
    }
    trace.final_loss = rr.loss;
    trace.steps_run = updates;
    run.weights = std::move(stack);
    return run;
}

} // namespace detail

inline TrainRun run_training(const TrainConfig& cfg, const Signal& x, const Signal& y) {
    require(cfg.spec.family == Family::linear1c, "run_training(Signal): linear1c only");
    return detail::train_impl(cfg, x, y, 1);
}

inline TrainRun run_training(const TrainConfig& cfg, const MultiSignal& x, const Signal& y) {
    require(cfg.spec.family == Family::mcnn1d, "run_training(MultiSignal): mcnn1d only");
    return detail::train_impl(cfg, x, y, x.channels);
}

inline TrainRun run_training(const TrainConfig& cfg, const Volume& x, const Image& y) {
    require(cfg.spec.family == Family::gen2d, "run_training(Volume): gen2d only");
    return detail::train_impl(cfg, x, y, x.channels);
}

// -------------------------------------------------------------- landscape

struct LandscapeSlice {
    double extent = 0.0;
    std::size_t resolution = 0;
    std::vector<double> values; // resolution x resolution, row-major in (a, b)
    std::vector<double> dir_u, dir_v;

    double at(std::size_t ia, std::size_t ib) const { return values[ia * resolution + ib]; }
};

namespace detail {

template <typename X, typename Y>
LandscapeSlice slice_impl(const KernelStack& center, const NetworkSpec& spec, const X& x,
                          const Y& y, double extent, std::size_t resolution,
                          std::uint64_t seed) {
    spec.validate();
    require(resolution >= 3 && resolution % 2 == 1,
            "slice_landscape: resolution must be odd and >= 3");
    require(extent > 0.0, "slice_landscape: extent must be positive");

    const std::vector<double> flat0 = stack_to_flat(spec, center);
    const std::size_t D = flat0.size();
    require(D >= 2, "slice_landscape: need at least two trainable coordinates");

    Rng rng(seed);
    auto draw_unit = [&]() {
        std::vector<double> v = rng.gaussian_vector(D, 1.0);
        double nn = norm2(v);
        while (nn == 0.0) {
            v = rng.gaussian_vector(D, 1.0);
            nn = norm2(v);
        }
        for (auto& e : v) e /= nn;
        return v;
    };
    LandscapeSlice slice;
    slice.extent = extent;
    slice.resolution = resolution;
    slice.dir_u = draw_unit();
    for (;;) { // Gram-Schmidt; retry on a (measure-zero) collinear draw
        slice.dir_v = draw_unit();
        const double c = dot(slice.dir_v, slice.dir_u);
        for (std::size_t i = 0; i < D; ++i) slice.dir_v[i] -= c * slice.dir_u[i];
        const double nn = norm2(slice.dir_v);
        if (nn > 1e-8) {
            for (auto& e : slice.dir_v) e /= nn;
            break;
        }
    }

    slice.values.resize(resolution * resolution);
    std::vector<double> flat(D);
    const double h = 2.0 * extent / static_cast<double>(resolution - 1);
    for (std::size_t ia = 0; ia < resolution; ++ia) {
        const double a = -extent + h * static_cast<double>(ia);
        for (std::size_t ib = 0; ib < resolution; ++ib) {
            const double b = -extent + h * static_cast<double>(ib);
            for (std::size_t i = 0; i < D; ++i)
                flat[i] = flat0[i] + a * slice.dir_u[i] + b * slice.dir_v[i];
            double v;
            try {
                v = loss_value(spec, flat_to_stack(spec, center, flat), x, y);
            } catch (const DegenerateForward&) {
                v = std::numeric_limits<double>::infinity();
            }
            slice.values[ia * resolution + ib] = v;
        }
    }
    return slice;
}

} // namespace detail

inline LandscapeSlice slice_landscape(const KernelStack& center, const NetworkSpec& spec,
                                      const Signal& x, const Signal& y, double extent,
                                      std::size_t resolution, std::uint64_t seed) {
    return detail::slice_impl(center, spec, x, y, extent, resolution, seed);
}

inline LandscapeSlice slice_landscape(const KernelStack& center, const NetworkSpec& spec,
                                      const MultiSignal& x, const Signal& y, double extent,
                                      std::size_t resolution, std::uint64_t seed) {
    return detail::slice_impl(center, spec, x, y, extent, resolution, seed);
}

inline LandscapeSlice slice_landscape(const KernelStack& center, const NetworkSpec& spec,
                                      const Volume& x, const Image& y, double extent,
                                      std::size_t resolution, std::uint64_t seed) {
    return detail::slice_impl(center, spec, x, y, extent, resolution, seed);
}

inline DataTable landscape_table(const LandscapeSlice& slice) {
    DataTable t;
    t.columns = {"index", "a", "b", "loss"};
    t.integer_columns = {true, false, false, false};
    const double h = 2.0 * slice.extent / static_cast<double>(slice.resolution - 1);
    std::size_t idx = 0;
    for (std::size_t ia = 0; ia < slice.resolution; ++ia)
        for (std::size_t ib = 0; ib < slice.resolution; ++ib) {
            t.rows.push_back({static_cast<double>(idx++),
                              -slice.extent + h * static_cast<double>(ia),
                              -slice.extent + h * static_cast<double>(ib),
                              slice.at(ia, ib)});
        }
    return t;
}

// -------------------------------------------------- gradient-norm sampling

namespace detail {

template <typename X, typename Y>
std::vector<double> grad_samples_impl(const NetworkSpec& spec, const X& x, const Y& y,
                                      std::size_t trials, std::uint64_t seed,
                                      std::size_t in_channels) {
    spec.validate();
    require(trials >= 1, "grad_norm_samples: need at least one trial");
    Rng master(seed);
    std::vector<double> out(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = master.stream(t);
        KernelStack stack = init_stack(spec, in_channels, InitScheme::gaussian_np, 0.0, rng);
        auto rr = grad_reverse(spec, stack, x, y);
        out[t] = norm2(gradient_to_flat(spec, rr.grads));
    }
    return out;
}

} // namespace detail

// Full-gradient norm at a fresh N(0, 1/(n * fan_in)) initialization, one
// value per trial; trial t uses the RNG stream (seed, t).
inline std::vector<double> grad_norm_samples(const NetworkSpec& spec, const Signal& x,
                                             const Signal& y, std::size_t trials,
                                             std::uint64_t seed) {
    return detail::grad_samples_impl(spec, x, y, trials, seed, 1);
}

inline std::vector<double> grad_norm_samples(const NetworkSpec& spec, const MultiSignal& x,
                                             const Signal& y, std::size_t trials,
                                             std::uint64_t seed) {
    return detail::grad_samples_impl(spec, x, y, trials, seed, x.channels);
}

// Logarithmic histogram over the observed range; bin edges are geometric.
inline DataTable grad_histogram(const std::vector<double>& samples, std::size_t bins) {
    require(bins >= 1, "grad_histogram: need at least one bin");
    require(!samples.empty(), "grad_histogram: no samples");
    double lo = *std::min_element(samples.begin(), samples.end());
    double hi = *std::max_element(samples.begin(), samples.end());
    require(lo > 0.0, "grad_histogram: log bins need positive samples");
    if (hi <= lo) hi = lo * (1.0 + 1e-12); // degenerate range: single spike
    const double llo = std::log(lo), lhi = std::log(hi);
    std::vector<std::size_t> counts(bins, 0);
    for (double s : samples) {
        auto b = static_cast<std::ptrdiff_t>((std::log(s) - llo) / (lhi - llo) *
                                             static_cast<double>(bins));
        b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    DataTable t;
    t.columns = {"index", "bin_left", "bin_center", "bin_right", "count"};
    t.integer_columns = {true, false, false, false, true};
    for (std::size_t b = 0; b < bins; ++b) {
        const double left = std::exp(llo + (lhi - llo) * static_cast<double>(b) /
                                               static_cast<double>(bins));
        const double right = std::exp(llo + (lhi - llo) * static_cast<double>(b + 1) /
                                                static_cast<double>(bins));
        t.rows.push_back({static_cast<double>(b), left, std::sqrt(left * right), right,
                          static_cast<double>(counts[b])});
    }
    return t;
}

inline double percentile(std::vector<double> samples, double q) {
    require(!samples.empty() && q >= 0.0 && q <= 1.0, "percentile: bad input");
    std::sort(samples.begin(), samples.end());
    const double pos = q * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return samples[lo] * (1.0 - frac) + samples[hi] * frac;
}

// ------------------------------------------------------- synthetic targets

inline Signal make_step_target(std::size_t n, double level_low, double level_high,
                               std::size_t split, bool centered = false) {
    require(n >= 2 && split > 0 && split < n, "make_step_target: need 0 < split < n");
    Signal y(n, level_low);
    for (std::size_t j = split; j < n; ++j) y.values[j] = level_high;
    if (centered) center_in_place(y.values);
    return y;
}

// Standard analytic head phantom: ten additively combined ellipses with the
// usual contrast-adjusted intensities, rendered on pixel centers of the
// square [-1, 1]^2.  Values lie in [0, 1].
inline Image make_phantom(std::size_t size) {
    require(size >= 16, "make_phantom: size must be >= 16");
    struct Ellipse {
        double a, b, x0, y0, phi_deg, intensity;
    };
    static constexpr Ellipse table[] = {
        {0.6900, 0.9200, 0.00, 0.0000, 0.0, 1.0},
        {0.6624, 0.8740, 0.00, -0.0184, 0.0, -0.8},
        {0.1100, 0.3100, 0.22, 0.0000, -18.0, -0.2},
        {0.1600, 0.4100, -0.22, 0.0000, 18.0, -0.2},
        {0.2100, 0.2500, 0.00, 0.3500, 0.0, 0.1},
        {0.0460, 0.0460, 0.00, 0.1000, 0.0, 0.1},
        {0.0460, 0.0460, 0.00, -0.1000, 0.0, 0.1},
        {0.0460, 0.0230, -0.08, -0.6050, 0.0, 0.1},
        {0.0230, 0.0230, 0.00, -0.6060, 0.0, 0.1},
        {0.0230, 0.0460, 0.06, -0.6050, 0.0, 0.1},
    };
    Image img(size, size);
    const double step = 2.0 / static_cast<double>(size);
    for (std::size_t i = 0; i < size; ++i) {
        const double yc = 1.0 - step * (static_cast<double>(i) + 0.5);
        for (std::size_t j = 0; j < size; ++j) {
            const double xc = -1.0 + step * (static_cast<double>(j) + 0.5);
            double v = 0.0;
            for (const auto& e : table) {
                const double phi = e.phi_deg * 3.14159265358979323846 / 180.0;
                const double dx = xc - e.x0, dy = yc - e.y0;
                const double xr = dx * std::cos(phi) + dy * std::sin(phi);
                const double yr = -dx * std::sin(phi) + dy * std::cos(phi);
                if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) v += e.intensity;
            }
            img.at(i, j) = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

// Fixed random input volume for the 2-D generator, entries uniform [0, 1).
inline Volume make_input_volume(std::size_t channels, std::size_t height, std::size_t width,
                                std::uint64_t seed) {
    Volume v(channels, height, width);
    Rng rng(seed);
    for (auto& e : v.values) e = rng.uniform();
    return v;
}

// Uniform [0, 1) input signal (single- or multi-channel).
inline Signal make_input_signal(std::size_t n, std::uint64_t seed) {
    Signal s(n);
    Rng rng(seed);
    for (auto& e : s.values) e = rng.uniform();
    return s;
}

inline MultiSignal make_input_multisignal(std::size_t channels, std::size_t n,
                                          std::uint64_t seed) {
    MultiSignal s(channels, n);
    Rng rng(seed);
    for (auto& e : s.values) e = rng.uniform();
    return s;
}

} // namespace circnn

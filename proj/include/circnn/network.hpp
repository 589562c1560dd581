#pragma once

// Network families and their forward passes.
//
//   linear1c: single-channel linear circulant chain, optionally channel
//             normalized.  The normalized forward uses the collapsed form
//             f = w_{d+1} * (prod_i W_i) x / || (prod_i W_i) x ||, which equals
//             the layerwise normalize-each-activation chain at epsilon -> 0
//             with the sqrt(n) scales absorbed into the trailing scalar.
//   mcnn1d:   multichannel 1-D CNN, circular conv -> channel norm -> ReLU per
//             hidden layer, final 1x1 mixing layer with no norm or activation.
//   gen2d:    2-D generator, 3x3 circular conv -> channel norm -> ReLU per
//             hidden layer, final 1x1 mixing to a single output plane.
//
// Loss conventions are recorded with the training code: linear1c and mcnn1d
// use (1/2)||y - f||^2, gen2d uses ||y - f||^2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "circnn/channel_norm.hpp"
#include "circnn/circulant.hpp"
#include "circnn/conv.hpp"
#include "circnn/errors.hpp"
#include "circnn/rng.hpp"
#include "circnn/types.hpp"

namespace circnn {

enum class Family { linear1c, mcnn1d, gen2d };

struct NetworkSpec {
    Family family = Family::linear1c;
    std::size_t n = 64;       // signal length; image side for gen2d
    std::size_t depth = 1;    // hidden conv layers
    std::size_t channels = 1; // hidden channels (mcnn1d / gen2d)
    std::size_t kernel = 3;   // support width; kernel side for gen2d
    NormMode norm = NormMode::none;
    double epsilon = 1e-6;

    void validate() const {
        require(n >= 2, "NetworkSpec: n must be >= 2");
        require(depth >= 1, "NetworkSpec: depth must be >= 1");
        require(kernel >= 1 && kernel <= n, "NetworkSpec: kernel must satisfy 1 <= p <= n");
        require(channels >= 1, "NetworkSpec: channels must be >= 1");
        require(epsilon > 0.0, "NetworkSpec: epsilon must be positive");
    }
};

// All trainable state of one network.  linear1c populates kernels/out_scale,
// the multichannel families populate layers1d-or-2d and mix; gammas/betas are
// present only in learned-norm mode, indexed [layer][channel].
struct KernelStack {
    std::vector<Kernel> kernels;
    double out_scale = 1.0; // w_{d+1}

    std::vector<conv::Layer1D> layers1d;
    std::vector<conv::Layer2D> layers2d;
    std::vector<double> mix;

    std::vector<std::vector<double>> gammas, betas;
};

struct GradientSet {
    std::vector<std::vector<double>> kernels;
    double out_scale = 0.0;
    std::vector<std::vector<double>> layers;
    std::vector<double> mix;
    std::vector<std::vector<double>> gammas, betas;
};

// ---------------------------------------------------------------- linear1c

inline Signal forward_linear_plain(const KernelStack& stack, const Signal& x) {
    return compose_apply(stack.kernels, x); // out_scale unused
}

inline double product_norm(const KernelStack& stack, const Signal& x) {
    return norm2(compose_apply(stack.kernels, x).values);
}

// Collapsed normalized forward; requires centered x (the chain only stays
// mean-free, hence equal to per-layer normalization, on centered input).
inline Signal forward_linear_norm(const KernelStack& stack, const Signal& x) {
    require(std::abs(mean(x.values)) <= 1e-9 * std::max(1.0, norm2(x.values)),
            "forward_linear_norm: input must be centered");
    Signal g = compose_apply(stack.kernels, x);
    const double ng = norm2(g.values);
    if (ng < 1e-300) throw DegenerateForward("forward_linear_norm: vanishing product norm");
    const double s = stack.out_scale / ng;
    for (double& v : g.values) v *= s;
    return g;
}

// ------------------------------------------------------- layerwise engines

namespace engine {

struct Trace1D {
    std::vector<std::vector<double>> acts; // acts[0] = input, acts[i] = layer i output
    std::vector<std::vector<double>> pre;  // conv outputs
    std::vector<std::vector<double>> post; // after normalization (== pre when norm off)
    std::vector<std::vector<ChannelMoments>> stats; // per layer, per channel (norm on)
    std::vector<double> out;               // mixed single-channel output
};

inline NormParams layer_norm_params(const KernelStack& stack, NormMode mode, double eps,
                                    std::size_t layer, std::size_t ch) {
    if (mode == NormMode::learned) return {stack.gammas[layer][ch], stack.betas[layer][ch], eps};
    return {1.0, 0.0, eps};
}

inline Trace1D forward_1d(const KernelStack& stack, const std::vector<double>& x,
                          std::size_t in_channels, std::size_t n, NormMode norm, double eps,
                          bool relu) {
    require(!stack.layers1d.empty(), "engine: no 1-D layers");
    require(stack.layers1d.front().in_channels == in_channels, "engine: input channel mismatch");
    Trace1D t;
    t.acts.reserve(stack.layers1d.size() + 1);
    t.acts.push_back(x);
    for (const auto& L : stack.layers1d) {
        const auto& cur = t.acts.back();
        require(cur.size() == L.in_channels * n, "engine: layer input size mismatch");
        std::vector<double> pre(L.out_channels * n);
        conv::forward_1d(L, cur.data(), pre.data(), n);
        std::vector<double> post;
        std::vector<ChannelMoments> stats;
        const std::size_t li = t.pre.size();
        if (norm != NormMode::none) {
            post.resize(pre.size());
            stats.reserve(L.out_channels);
            for (std::size_t c = 0; c < L.out_channels; ++c)
                stats.push_back(normalize_span(pre.data() + c * n, post.data() + c * n, n,
                                               layer_norm_params(stack, norm, eps, li, c)));
        } else {
            post = pre;
        }
        std::vector<double> act = post;
        if (relu)
            for (double& v : act) v = std::max(0.0, v);
        t.pre.push_back(std::move(pre));
        t.post.push_back(std::move(post));
        t.stats.push_back(std::move(stats));
        t.acts.push_back(std::move(act));
    }
    const std::size_t C = stack.layers1d.back().out_channels;
    require(stack.mix.size() == C, "engine: mixing layer width mismatch");
    t.out.assign(n, 0.0);
    const auto& last = t.acts.back();
    for (std::size_t c = 0; c < C; ++c) {
        const double m = stack.mix[c];
        const double* a = last.data() + c * n;
        for (std::size_t j = 0; j < n; ++j) t.out[j] += m * a[j];
    }
    return t;
}

// Backward through the 1-D engine against upstream dL/dout.
inline void backward_1d(const KernelStack& stack, const Trace1D& t, const std::vector<double>& dout,
                        std::size_t n, NormMode norm, double eps, bool relu, GradientSet& g) {
    const std::size_t d = stack.layers1d.size();
    const std::size_t C = stack.layers1d.back().out_channels;
    g.layers.assign(d, {});
    g.mix.assign(C, 0.0);
    if (norm == NormMode::learned) {
        g.gammas.assign(d, {});
        g.betas.assign(d, {});
    }
    const auto& last = t.acts.back();
    std::vector<double> dact(C * n);
    for (std::size_t c = 0; c < C; ++c) {
        const double* a = last.data() + c * n;
        double acc = 0.0;
        double* da = dact.data() + c * n;
        for (std::size_t j = 0; j < n; ++j) {
            acc += dout[j] * a[j];
            da[j] = stack.mix[c] * dout[j];
        }
        g.mix[c] = acc;
    }
    for (std::size_t i = d; i-- > 0;) {
        const auto& L = stack.layers1d[i];
        std::vector<double>& dpost = dact; // reuse in place
        if (relu) {
            const auto& post = t.post[i];
            for (std::size_t k = 0; k < dpost.size(); ++k)
                if (post[k] <= 0.0) dpost[k] = 0.0; // subgradient 0 at 0
        }
        std::vector<double> dpre;
        if (norm != NormMode::none) {
            dpre.resize(L.out_channels * n);
            if (norm == NormMode::learned) {
                g.gammas[i].assign(L.out_channels, 0.0);
                g.betas[i].assign(L.out_channels, 0.0);
            }
            for (std::size_t c = 0; c < L.out_channels; ++c) {
                std::vector<double> z(t.pre[i].begin() + c * n, t.pre[i].begin() + (c + 1) * n);
                std::vector<double> up(dpost.begin() + c * n, dpost.begin() + (c + 1) * n);
                auto v = normalize_vjp(z, layer_norm_params(stack, norm, eps, i, c), up);
                std::copy(v.grad_z.begin(), v.grad_z.end(), dpre.begin() + c * n);
                if (norm == NormMode::learned) {
                    g.gammas[i][c] = v.grad_gamma;
                    g.betas[i][c] = v.grad_beta;
                }
            }
        } else {
            dpre = dpost;
        }
        g.layers[i].assign(L.w.size(), 0.0);
        conv::weight_grad_1d(L, t.acts[i].data(), dpre.data(), g.layers[i].data(), n);
        if (i > 0) {
            std::vector<double> din(L.in_channels * n);
            conv::input_grad_1d(L, dpre.data(), din.data(), n);
            dact = std::move(din);
        }
    }
}

struct Trace2D {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;
    std::vector<std::vector<ChannelMoments>> stats;
    std::vector<double> out; // H*W plane
};

inline Trace2D forward_2d(const KernelStack& stack, const std::vector<double>& x,
                          std::size_t in_channels, std::size_t H, std::size_t W, NormMode norm,
                          double eps, bool relu) {
    require(!stack.layers2d.empty(), "engine: no 2-D layers");
    require(stack.layers2d.front().in_channels == in_channels, "engine: input channel mismatch");
    const std::size_t plane = H * W;
    Trace2D t;
    t.acts.reserve(stack.layers2d.size() + 1);
    t.acts.push_back(x);
    for (const auto& L : stack.layers2d) {
        const auto& cur = t.acts.back();
        require(cur.size() == L.in_channels * plane, "engine: layer input size mismatch");
        std::vector<double> pre(L.out_channels * plane);
        conv::forward_2d(L, cur.data(), pre.data(), H, W);
        std::vector<double> post;
        std::vector<ChannelMoments> stats;
        const std::size_t li = t.pre.size();
        if (norm != NormMode::none) {
            post.resize(pre.size());
            stats.reserve(L.out_channels);
            for (std::size_t c = 0; c < L.out_channels; ++c)
                stats.push_back(normalize_span(pre.data() + c * plane, post.data() + c * plane,
                                               plane, layer_norm_params(stack, norm, eps, li, c)));
        } else {
            post = pre;
        }
        std::vector<double> act = post;
        if (relu)
            for (double& v : act) v = std::max(0.0, v);
        t.pre.push_back(std::move(pre));
        t.post.push_back(std::move(post));
        t.stats.push_back(std::move(stats));
        t.acts.push_back(std::move(act));
    }
    const std::size_t C = stack.layers2d.back().out_channels;
    require(stack.mix.size() == C, "engine: mixing layer width mismatch");
    t.out.assign(plane, 0.0);
    const auto& last = t.acts.back();
    for (std::size_t c = 0; c < C; ++c) {
        const double m = stack.mix[c];
        const double* a = last.data() + c * plane;
        for (std::size_t j = 0; j < plane; ++j) t.out[j] += m * a[j];
    }
    return t;
}

inline void backward_2d(const KernelStack& stack, const Trace2D& t, const std::vector<double>& dout,
                        std::size_t H, std::size_t W, NormMode norm, double eps, bool relu,
                        GradientSet& g) {
    const std::size_t plane = H * W;
    const std::size_t d = stack.layers2d.size();
    const std::size_t C = stack.layers2d.back().out_channels;
    g.layers.assign(d, {});
    g.mix.assign(C, 0.0);
    if (norm == NormMode::learned) {
        g.gammas.assign(d, {});
        g.betas.assign(d, {});
    }
    const auto& last = t.acts.back();
    std::vector<double> dact(C * plane);
    for (std::size_t c = 0; c < C; ++c) {
        const double* a = last.data() + c * plane;
        double acc = 0.0;
        double* da = dact.data() + c * plane;
        for (std::size_t j = 0; j < plane; ++j) {
            acc += dout[j] * a[j];
            da[j] = stack.mix[c] * dout[j];
        }
        g.mix[c] = acc;
    }
    for (std::size_t i = d; i-- > 0;) {
        const auto& L = stack.layers2d[i];
        std::vector<double>& dpost = dact;
        if (relu) {
            const auto& post = t.post[i];
            for (std::size_t k = 0; k < dpost.size(); ++k)
                if (post[k] <= 0.0) dpost[k] = 0.0;
        }
        std::vector<double> dpre;
        if (norm != NormMode::none) {
            dpre.resize(L.out_channels * plane);
            if (norm == NormMode::learned) {
                g.gammas[i].assign(L.out_channels, 0.0);
                g.betas[i].assign(L.out_channels, 0.0);
            }
            for (std::size_t c = 0; c < L.out_channels; ++c) {
                std::vector<double> z(t.pre[i].begin() + c * plane, t.pre[i].begin() + (c + 1) * plane);
                std::vector<double> up(dpost.begin() + c * plane, dpost.begin() + (c + 1) * plane);
                auto v = normalize_vjp(z, layer_norm_params(stack, norm, eps, i, c), up);
                std::copy(v.grad_z.begin(), v.grad_z.end(), dpre.begin() + c * plane);
                if (norm == NormMode::learned) {
                    g.gammas[i][c] = v.grad_gamma;
                    g.betas[i][c] = v.grad_beta;
                }
            }
        } else {
            dpre = dpost;
        }
        g.layers[i].assign(L.w.size(), 0.0);
        conv::weight_grad_2d(L, t.acts[i].data(), dpre.data(), g.layers[i].data(), H, W);
        if (i > 0) {
            std::vector<double> din(L.in_channels * plane);
            conv::input_grad_2d(L, dpre.data(), din.data(), H, W);
            dact = std::move(din);
        }
    }
}

// Adapter: view a linear1c stack as a width-1 engine stack (1x1xp conv
// layers, mix = {out_scale}), used by the learned-norm layerwise forward.
inline KernelStack as_engine_stack(const KernelStack& stack) {
    KernelStack e;
    e.layers1d.reserve(stack.kernels.size());
    for (const auto& k : stack.kernels) {
        conv::Layer1D L(1, 1, k.p());
        std::copy(k.support.begin(), k.support.end(), L.w.begin());
        e.layers1d.push_back(std::move(L));
    }
    e.mix = {stack.out_scale};
    e.gammas = stack.gammas;
    e.betas = stack.betas;
    return e;
}

} // namespace engine

// ------------------------------------------------ multichannel forwards

inline Signal forward_mcnn1d(const KernelStack& stack, const MultiSignal& x,
                             const NetworkSpec& spec) {
    spec.validate();
    auto t = engine::forward_1d(stack, x.values, x.channels, x.length, spec.norm, spec.epsilon,
                                /*relu=*/true);
    return Signal(std::move(t.out));
}

inline Image forward_gen2d(const KernelStack& stack, const Volume& x, const NetworkSpec& spec) {
    spec.validate();
    auto t = engine::forward_2d(stack, x.values, x.channels, x.height, x.width, spec.norm,
                                spec.epsilon, /*relu=*/true);
    Image img(x.height, x.width);
    img.values = std::move(t.out);
    return img;
}

// Layerwise linear1c forward (per-layer normalization with finite epsilon,
// trailing scalar out_scale); the trained object in learned-norm mode.
inline Signal forward_linear_layered(const KernelStack& stack, const Signal& x,
                                     const NetworkSpec& spec) {
    spec.validate();
    auto es = engine::as_engine_stack(stack);
    auto t = engine::forward_1d(es, x.values, 1, x.n(), spec.norm, spec.epsilon, /*relu=*/false);
    return Signal(std::move(t.out));
}

// ------------------------------------------------------- stack utilities

enum class InitScheme { gaussian_np, gaussian_unit, custom };

inline KernelStack make_stack(const NetworkSpec& spec, std::size_t input_channels) {
    spec.validate();
    KernelStack s;
    if (spec.family == Family::linear1c) {
        require(input_channels == 1, "linear1c takes single-channel input");
        s.kernels.assign(spec.depth, Kernel(std::vector<double>(spec.kernel, 0.0), spec.n));
    } else if (spec.family == Family::mcnn1d) {
        for (std::size_t i = 0; i < spec.depth; ++i) {
            const std::size_t ci = (i == 0) ? input_channels : spec.channels;
            s.layers1d.emplace_back(spec.channels, ci, spec.kernel);
        }
        s.mix.assign(spec.channels, 0.0);
    } else {
        for (std::size_t i = 0; i < spec.depth; ++i) {
            const std::size_t ci = (i == 0) ? input_channels : spec.channels;
            s.layers2d.emplace_back(spec.channels, ci, spec.kernel, spec.kernel);
        }
        s.mix.assign(spec.channels, 0.0);
    }
    if (spec.norm == NormMode::learned) {
        const std::size_t width = (spec.family == Family::linear1c) ? 1 : spec.channels;
        s.gammas.assign(spec.depth, std::vector<double>(width, 1.0));
        s.betas.assign(spec.depth, std::vector<double>(width, 0.0));
    }
    return s;
}

// Weight initialization.  gaussian_np draws N(0, 1/(n * fan_in)) matching the
// theory's kernel statistics (fan_in = taps * in_channels); gaussian_unit is
// N(0, 1); custom uses the supplied sigma for conv weights and 1/sqrt(C) for
// the mixing layer.
inline KernelStack init_stack(const NetworkSpec& spec, std::size_t input_channels,
                              InitScheme scheme, double sigma, Rng& rng) {
    KernelStack s = make_stack(spec, input_channels);
    const double dn = static_cast<double>(spec.family == Family::gen2d ? spec.n * spec.n : spec.n);
    auto conv_sigma = [&](std::size_t fan_in) {
        switch (scheme) {
            case InitScheme::gaussian_np: return 1.0 / std::sqrt(dn * static_cast<double>(fan_in));
            case InitScheme::gaussian_unit: return 1.0;
            default: return sigma;
        }
    };
    if (spec.family == Family::linear1c) {
        for (auto& k : s.kernels) {
            const double sg = conv_sigma(k.p());
            for (auto& w : k.support) w = sg * rng.gaussian();
        }
        s.out_scale = 1.0;
    } else {
        auto fill_layers = [&](auto& layers) {
            for (auto& L : layers) {
                const std::size_t fan = L.w.size() / L.out_channels;
                const double sg = conv_sigma(fan);
                for (auto& w : L.w) w = sg * rng.gaussian();
            }
        };
        if (spec.family == Family::mcnn1d) fill_layers(s.layers1d);
        else fill_layers(s.layers2d);
        const double ms = (scheme == InitScheme::gaussian_np)
                              ? 1.0 / std::sqrt(dn * static_cast<double>(spec.channels))
                          : (scheme == InitScheme::gaussian_unit)
                              ? 1.0
                              : 1.0 / std::sqrt(static_cast<double>(spec.channels));
        for (auto& m : s.mix) m = ms * rng.gaussian();
    }
    return s;
}

inline bool out_scale_trained(const NetworkSpec& spec) {
    return spec.family == Family::linear1c && spec.norm != NormMode::none;
}

// Canonical trainable-coordinate order: conv layers (layer-major), then
// out_scale / mix, then all gammas, then all betas.  Serialization, flat
// landscape directions and finite differencing all share this layout.
template <typename F>
inline void for_each_trainable(const NetworkSpec& spec, KernelStack& s, F&& f) {
    if (spec.family == Family::linear1c) {
        for (auto& k : s.kernels)
            for (auto& w : k.support) f(w);
        if (out_scale_trained(spec)) f(s.out_scale);
    } else {
        if (spec.family == Family::mcnn1d)
            for (auto& L : s.layers1d)
                for (auto& w : L.w) f(w);
        else
            for (auto& L : s.layers2d)
                for (auto& w : L.w) f(w);
        for (auto& m : s.mix) f(m);
    }
    if (spec.norm == NormMode::learned) {
        for (auto& g : s.gammas)
            for (auto& v : g) f(v);
        for (auto& b : s.betas)
            for (auto& v : b) f(v);
    }
}

inline std::size_t trainable_count(const NetworkSpec& spec, const KernelStack& s) {
    std::size_t c = 0;
    for_each_trainable(spec, const_cast<KernelStack&>(s), [&](double&) { ++c; });
    return c;
}

inline std::vector<double> stack_to_flat(const NetworkSpec& spec, const KernelStack& s) {
    std::vector<double> flat;
    flat.reserve(trainable_count(spec, s));
    for_each_trainable(spec, const_cast<KernelStack&>(s), [&](double& w) { flat.push_back(w); });
    return flat;
}

inline KernelStack flat_to_stack(const NetworkSpec& spec, const KernelStack& proto,
                                 const std::vector<double>& flat) {
    KernelStack s = proto;
    std::size_t i = 0;
    for_each_trainable(spec, s, [&](double& w) {
        require(i < flat.size(), "flat_to_stack: vector too short");
        w = flat[i++];
    });
    require(i == flat.size(), "flat_to_stack: vector too long");
    return s;
}

inline std::vector<double> gradient_to_flat(const NetworkSpec& spec, const GradientSet& g) {
    std::vector<double> flat;
    if (spec.family == Family::linear1c) {
        for (const auto& k : g.kernels) flat.insert(flat.end(), k.begin(), k.end());
        if (out_scale_trained(spec)) flat.push_back(g.out_scale);
    } else {
        for (const auto& L : g.layers) flat.insert(flat.end(), L.begin(), L.end());
        flat.insert(flat.end(), g.mix.begin(), g.mix.end());
    }
    if (spec.norm == NormMode::learned) {
        for (const auto& gg : g.gammas) flat.insert(flat.end(), gg.begin(), gg.end());
        for (const auto& bb : g.betas) flat.insert(flat.end(), bb.begin(), bb.end());
    }
    return flat;
}

// s += a * g over the trainable coordinates (the gradient-descent update).
inline void stack_axpy(const NetworkSpec& spec, KernelStack& s, const GradientSet& g, double a) {
    if (spec.family == Family::linear1c) {
        for (std::size_t i = 0; i < s.kernels.size(); ++i)
            for (std::size_t j = 0; j < s.kernels[i].support.size(); ++j)
                s.kernels[i].support[j] += a * g.kernels[i][j];
        if (out_scale_trained(spec)) s.out_scale += a * g.out_scale;
    } else {
        auto upd = [&](auto& layers) {
            for (std::size_t i = 0; i < layers.size(); ++i)
                for (std::size_t j = 0; j < layers[i].w.size(); ++j)
                    layers[i].w[j] += a * g.layers[i][j];
        };
        if (spec.family == Family::mcnn1d) upd(s.layers1d);
        else upd(s.layers2d);
        for (std::size_t c = 0; c < s.mix.size(); ++c) s.mix[c] += a * g.mix[c];
    }
    if (spec.norm == NormMode::learned) {
        for (std::size_t i = 0; i < s.gammas.size(); ++i)
            for (std::size_t c = 0; c < s.gammas[i].size(); ++c) {
                s.gammas[i][c] += a * g.gammas[i][c];
                s.betas[i][c] += a * g.betas[i][c];
            }
    }
}

inline double stack_distance(const NetworkSpec& spec, const KernelStack& a, const KernelStack& b) {
    const auto fa = stack_to_flat(spec, a);
    const auto fb = stack_to_flat(spec, b);
    require(fa.size() == fb.size(), "stack_distance: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        const double d = fa[i] - fb[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Norm of each conv layer's gradient block (the per-layer series in traces).
inline std::vector<double> layer_grad_norms(const GradientSet& g) {
    std::vector<double> out;
    const auto& blocks = g.kernels.empty() ? g.layers : g.kernels;
    out.reserve(blocks.size());
    for (const auto& b : blocks) out.push_back(norm2(b));
    return out;
}

} // namespace circnn

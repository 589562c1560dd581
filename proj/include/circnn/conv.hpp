#pragma once

// Direct circular convolution primitives shared by the 1-D and 2-D network
// engines.  Kernels are corner-anchored (tap l multiplies in[(j - l) mod n],
// matching the downward-shift circulant convention), and all loops are split
// at the wrap point so the inner bodies run over contiguous memory.

#include <cstddef>
#include <vector>

namespace circnn {
namespace conv {

// out[j] += w * in[(j - shift) mod n]
inline void axpy_shift(double* out, const double* in, double w, std::size_t n, std::size_t shift) {
    const double* hi = in + (n - shift);
    for (std::size_t j = 0; j < shift; ++j) out[j] += w * hi[j];
    const double* lo = in - shift;
    for (std::size_t j = shift; j < n; ++j) out[j] += w * lo[j];
}

// sum_j g[j] * in[(j - shift) mod n], four-lane accumulation
inline double dot_shift(const double* g, const double* in, std::size_t n, std::size_t shift) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    const double* hi = in + (n - shift);
    std::size_t j = 0;
    for (; j + 4 <= shift; j += 4) {
        a0 += g[j] * hi[j];
        a1 += g[j + 1] * hi[j + 1];
        a2 += g[j + 2] * hi[j + 2];
        a3 += g[j + 3] * hi[j + 3];
    }
    for (; j < shift; ++j) a0 += g[j] * hi[j];
    const double* lo = in - shift;
    j = shift;
    for (; j + 4 <= n; j += 4) {
        a0 += g[j] * lo[j];
        a1 += g[j + 1] * lo[j + 1];
        a2 += g[j + 2] * lo[j + 2];
        a3 += g[j + 3] * lo[j + 3];
    }
    for (; j < n; ++j) a0 += g[j] * lo[j];
    return (a0 + a1) + (a2 + a3);
}

struct Layer1D {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t taps = 0;
    std::vector<double> w; // [co][ci][l]

    Layer1D() = default;
    Layer1D(std::size_t co, std::size_t ci, std::size_t p)
        : out_channels(co), in_channels(ci), taps(p), w(co * ci * p, 0.0) {}

    double* at(std::size_t co, std::size_t ci) { return w.data() + (co * in_channels + ci) * taps; }
    const double* at(std::size_t co, std::size_t ci) const {
        return w.data() + (co * in_channels + ci) * taps;
    }
};

// out[co][j] = sum_{ci,l} w[co][ci][l] * in[ci][(j-l) mod n]
inline void forward_1d(const Layer1D& L, const double* in, double* out, std::size_t n) {
    for (std::size_t co = 0; co < L.out_channels; ++co) {
        double* o = out + co * n;
        for (std::size_t j = 0; j < n; ++j) o[j] = 0.0;
        for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
            const double* src = in + ci * n;
            const double* wp = L.at(co, ci);
            for (std::size_t l = 0; l < L.taps; ++l) axpy_shift(o, src, wp[l], n, l % n);
        }
    }
}

// din[ci][m] = sum_{co,l} w[co][ci][l] * gout[co][(m+l) mod n]
inline void input_grad_1d(const Layer1D& L, const double* gout, double* din, std::size_t n) {
    for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
        double* o = din + ci * n;
        for (std::size_t j = 0; j < n; ++j) o[j] = 0.0;
        for (std::size_t co = 0; co < L.out_channels; ++co) {
            const double* g = gout + co * n;
            const double* wp = L.at(co, ci);
            for (std::size_t l = 0; l < L.taps; ++l)
                axpy_shift(o, g, wp[l], n, (n - (l % n)) % n);
        }
    }
}

// dw[co][ci][l] = sum_j gout[co][j] * in[ci][(j-l) mod n]
inline void weight_grad_1d(const Layer1D& L, const double* in, const double* gout, double* dw,
                           std::size_t n) {
    for (std::size_t co = 0; co < L.out_channels; ++co) {
        const double* g = gout + co * n;
        for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
            const double* src = in + ci * n;
            double* d = dw + (co * L.in_channels + ci) * L.taps;
            for (std::size_t l = 0; l < L.taps; ++l) d[l] = dot_shift(g, src, n, l % n);
        }
    }
}

// orow[j] += sum_v w[v] * srow[(j - v) mod W], one pass over the row.
// Caller guarantees kw <= W.
inline void fir_row_accum(double* orow, const double* srow, const double* w, std::size_t kw,
                          std::size_t W) {
    for (std::size_t j = 0; j + 1 < kw; ++j) {
        double acc = 0.0;
        for (std::size_t v = 0; v <= j; ++v) acc += w[v] * srow[j - v];
        for (std::size_t v = j + 1; v < kw; ++v) acc += w[v] * srow[j + W - v];
        orow[j] += acc;
    }
    if (kw == 3) {
        const double w0 = w[0], w1 = w[1], w2 = w[2];
        for (std::size_t j = 2; j < W; ++j)
            orow[j] += w0 * srow[j] + w1 * srow[j - 1] + w2 * srow[j - 2];
        return;
    }
    for (std::size_t j = kw - 1; j < W; ++j) {
        double acc = 0.0;
        for (std::size_t v = 0; v < kw; ++v) acc += w[v] * srow[j - v];
        orow[j] += acc;
    }
}

// orow[j] += sum_v w[v] * grow[(j + v) mod W], the adjoint pass.
// Caller guarantees kw <= W.
inline void fir_row_accum_rev(double* orow, const double* grow, const double* w, std::size_t kw,
                              std::size_t W) {
    const std::size_t body = W - (kw - 1);
    if (kw == 3) {
        const double w0 = w[0], w1 = w[1], w2 = w[2];
        for (std::size_t j = 0; j < body; ++j)
            orow[j] += w0 * grow[j] + w1 * grow[j + 1] + w2 * grow[j + 2];
    } else {
        for (std::size_t j = 0; j < body; ++j) {
            double acc = 0.0;
            for (std::size_t v = 0; v < kw; ++v) acc += w[v] * grow[j + v];
            orow[j] += acc;
        }
    }
    for (std::size_t j = body; j < W; ++j) {
        double acc = 0.0;
        for (std::size_t v = 0; v < kw; ++v) acc += w[v] * grow[(j + v) % W];
        orow[j] += acc;
    }
}

// acc[v] += sum_j g[j] * s[(j - v) mod W] for each v, one pass over the row.
// Caller guarantees kw <= W.
inline void fir_row_corr(const double* g, const double* s, double* acc, std::size_t kw,
                         std::size_t W) {
    if (kw == 3) {
        double a0 = g[0] * s[0] + g[1] * s[1];
        double a1 = g[0] * s[W - 1] + g[1] * s[0];
        double a2 = g[0] * s[W - 2] + g[1] * s[W - 1];
        for (std::size_t j = 2; j < W; ++j) {
            const double gj = g[j];
            a0 += gj * s[j];
            a1 += gj * s[j - 1];
            a2 += gj * s[j - 2];
        }
        acc[0] += a0;
        acc[1] += a1;
        acc[2] += a2;
        return;
    }
    for (std::size_t v = 0; v < kw; ++v) acc[v] += dot_shift(g, s, W, v);
}

struct Layer2D {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kh = 0;
    std::size_t kw = 0;
    std::vector<double> w; // [co][ci][u][v]

    Layer2D() = default;
    Layer2D(std::size_t co, std::size_t ci, std::size_t h, std::size_t ww)
        : out_channels(co), in_channels(ci), kh(h), kw(ww), w(co * ci * h * ww, 0.0) {}

    double* at(std::size_t co, std::size_t ci) {
        return w.data() + (co * in_channels + ci) * kh * kw;
    }
    const double* at(std::size_t co, std::size_t ci) const {
        return w.data() + (co * in_channels + ci) * kh * kw;
    }
};

// out[co][i][j] = sum_{ci,u,v} w[co][ci][u][v] * in[ci][(i-u) mod H][(j-v) mod W]
inline void forward_2d(const Layer2D& L, const double* in, double* out, std::size_t H,
                       std::size_t W) {
    const std::size_t plane = H * W;
    if (L.kh > H || L.kw > W) { // oversized kernels: per-tap path
        for (std::size_t co = 0; co < L.out_channels; ++co) {
            double* oc = out + co * plane;
            for (std::size_t k = 0; k < plane; ++k) oc[k] = 0.0;
            for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
                const double* sc = in + ci * plane;
                const double* wp = L.at(co, ci);
                for (std::size_t u = 0; u < L.kh; ++u)
                    for (std::size_t i = 0; i < H; ++i) {
                        const double* srow = sc + ((i + H - u % H) % H) * W;
                        double* orow = oc + i * W;
                        for (std::size_t v = 0; v < L.kw; ++v)
                            axpy_shift(orow, srow, wp[u * L.kw + v], W, v % W);
                    }
            }
        }
        return;
    }
    for (std::size_t co = 0; co < L.out_channels; ++co) {
        double* oc = out + co * plane;
        for (std::size_t k = 0; k < plane; ++k) oc[k] = 0.0;
        for (std::size_t i = 0; i < H; ++i) {
            double* orow = oc + i * W;
            for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
                const double* sc = in + ci * plane;
                const double* wp = L.at(co, ci);
                for (std::size_t u = 0; u < L.kh; ++u)
                    fir_row_accum(orow, sc + ((i + H - u) % H) * W, wp + u * L.kw, L.kw, W);
            }
        }
    }
}

// din[ci][a][b] = sum_{co,u,v} w[co][ci][u][v] * gout[co][(a+u) mod H][(b+v) mod W]
inline void input_grad_2d(const Layer2D& L, const double* gout, double* din, std::size_t H,
                          std::size_t W) {
    const std::size_t plane = H * W;
    if (L.kh > H || L.kw > W) { // oversized kernels: per-tap path
        for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
            double* oc = din + ci * plane;
            for (std::size_t k = 0; k < plane; ++k) oc[k] = 0.0;
            for (std::size_t co = 0; co < L.out_channels; ++co) {
                const double* gc = gout + co * plane;
                const double* wp = L.at(co, ci);
                for (std::size_t u = 0; u < L.kh; ++u)
                    for (std::size_t a = 0; a < H; ++a) {
                        const double* grow = gc + ((a + u) % H) * W;
                        double* orow = oc + a * W;
                        for (std::size_t v = 0; v < L.kw; ++v)
                            axpy_shift(orow, grow, wp[u * L.kw + v], W, (W - v % W) % W);
                    }
            }
        }
        return;
    }
    for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
        double* oc = din + ci * plane;
        for (std::size_t k = 0; k < plane; ++k) oc[k] = 0.0;
        for (std::size_t a = 0; a < H; ++a) {
            double* orow = oc + a * W;
            for (std::size_t co = 0; co < L.out_channels; ++co) {
                const double* gc = gout + co * plane;
                const double* wp = L.at(co, ci);
                for (std::size_t u = 0; u < L.kh; ++u)
                    fir_row_accum_rev(orow, gc + ((a + u) % H) * W, wp + u * L.kw, L.kw, W);
            }
        }
    }
}

// dw[co][ci][u][v] = sum_{i,j} gout[co][i][j] * in[ci][(i-u) mod H][(j-v) mod W]
inline void weight_grad_2d(const Layer2D& L, const double* in, const double* gout, double* dw,
                           std::size_t H, std::size_t W) {
    const std::size_t plane = H * W;
    if (L.kh > H || L.kw > W) { // oversized kernels: per-tap path
        for (std::size_t co = 0; co < L.out_channels; ++co) {
            const double* gc = gout + co * plane;
            for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
                const double* sc = in + ci * plane;
                double* d = dw + (co * L.in_channels + ci) * L.kh * L.kw;
                for (std::size_t u = 0; u < L.kh; ++u)
                    for (std::size_t v = 0; v < L.kw; ++v) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < H; ++i)
                            acc += dot_shift(gc + i * W, sc + ((i + H - u % H) % H) * W, W, v % W);
                        d[u * L.kw + v] = acc;
                    }
            }
        }
        return;
    }
    for (std::size_t co = 0; co < L.out_channels; ++co) {
        const double* gc = gout + co * plane;
        for (std::size_t ci = 0; ci < L.in_channels; ++ci) {
            const double* sc = in + ci * plane;
            double* d = dw + (co * L.in_channels + ci) * L.kh * L.kw;
            for (std::size_t t = 0; t < L.kh * L.kw; ++t) d[t] = 0.0;
            for (std::size_t u = 0; u < L.kh; ++u)
                for (std::size_t i = 0; i < H; ++i)
                    fir_row_corr(gc + i * W, sc + ((i + H - u) % H) * W, d + u * L.kw, L.kw, W);
        }
    }
}

} // namespace conv
} // namespace circnn

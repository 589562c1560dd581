#pragma once

// Discrete Fourier transforms used throughout the library.
//
// Convention (fixed here, relied on everywhere else): fft() computes the
// plain unnormalized DFT, X_j = sum_l x_l exp(-2*pi*i*j*l/n), and ifft()
// includes the 1/n factor.  The unitary transform is fft()/sqrt(n).
// Power-of-two lengths use an iterative radix-2 kernel; everything else
// falls back to a direct O(n^2) evaluation.

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace circnn {

using cdouble = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Twiddle factors exp(-2*pi*i*k/n), k = 0..n-1, cached per length.
inline const std::vector<cdouble>& twiddles(std::size_t n) {
    thread_local std::unordered_map<std::size_t, std::vector<cdouble>> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<cdouble> w(n);
    constexpr double tau = 6.283185307179586476925286766559;
    for (std::size_t k = 0; k < n; ++k) {
        double a = -tau * static_cast<double>(k) / static_cast<double>(n);
        w[k] = {std::cos(a), std::sin(a)};
    }
    return cache.emplace(n, std::move(w)).first->second;
}

inline void fft_radix2(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    const auto& w = twiddles(n);
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                cdouble t = w[k * stride];
                if (inverse) t = std::conj(t);
                t *= a[i + k + len / 2];
                a[i + k + len / 2] = a[i + k] - t;
                a[i + k] += t;
            }
        }
    }
}

inline void dft_direct(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    const auto& w = twiddles(n);
    std::vector<cdouble> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        cdouble acc{0.0, 0.0};
        for (std::size_t l = 0; l < n; ++l) {
            cdouble t = w[(j * l) % n];
            if (inverse) t = std::conj(t);
            acc += a[l] * t;
        }
        out[j] = acc;
    }
    a = std::move(out);
}

} // namespace detail

inline void fft_inplace(std::vector<cdouble>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n == 0) throw std::invalid_argument("fft: empty input");
    if (n > 1) {
        if (detail::is_pow2(n)) detail::fft_radix2(a, inverse);
        else detail::dft_direct(a, inverse);
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= s;
    }
}

inline std::vector<cdouble> fft(std::vector<cdouble> a) {
    fft_inplace(a, false);
    return a;
}

inline std::vector<cdouble> ifft(std::vector<cdouble> a) {
    fft_inplace(a, true);
    return a;
}

inline std::vector<cdouble> fft_real(const std::vector<double>& x) {
    std::vector<cdouble> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
    fft_inplace(a, false);
    return a;
}

// Inverse transform of a conjugate-symmetric spectrum; imaginary parts are
// roundoff and dropped.
inline std::vector<double> ifft_to_real(std::vector<cdouble> a) {
    fft_inplace(a, true);
    std::vector<double> x(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) x[i] = a[i].real();
    return x;
}

} // namespace circnn

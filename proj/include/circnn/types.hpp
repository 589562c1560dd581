#pragma once

// Plain dense containers for signals, kernels and images.  Everything is
// double precision and row-major; none of these own behavior beyond shape
// bookkeeping.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "circnn/errors.hpp"

namespace circnn {

struct Signal {
    std::vector<double> values;

    Signal() = default;
    explicit Signal(std::vector<double> v) : values(std::move(v)) {}
    explicit Signal(std::size_t n, double fill = 0.0) : values(n, fill) {}

    std::size_t n() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

// A convolution kernel with support on the first p coordinates of an
// n-dimensional signal; the remaining n-p entries are structurally zero.
struct Kernel {
    std::vector<double> support;
    std::size_t ambient = 0;

    Kernel() = default;
    Kernel(std::vector<double> s, std::size_t n) : support(std::move(s)), ambient(n) {
        require(!support.empty() && support.size() <= ambient, "Kernel: support must satisfy 1 <= p <= n");
    }

    std::size_t p() const { return support.size(); }

    Signal embed() const {
        Signal s(ambient);
        for (std::size_t i = 0; i < support.size(); ++i) s.values[i] = support[i];
        return s;
    }
};

// channels x length, row-major.
struct MultiSignal {
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> values;

    MultiSignal() = default;
    MultiSignal(std::size_t c, std::size_t n) : channels(c), length(n), values(c * n, 0.0) {}

    double* channel(std::size_t c) { return values.data() + c * length; }
    const double* channel(std::size_t c) const { return values.data() + c * length; }
};

struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return values[i * width + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * width + j]; }
};

// channels x height x width, row-major.
struct Volume {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Volume() = default;
    Volume(std::size_t c, std::size_t h, std::size_t w)
        : channels(c), height(h), width(w), values(c * h * w, 0.0) {}

    double* channel(std::size_t c) { return values.data() + c * height * width; }
    const double* channel(std::size_t c) const { return values.data() + c * height * width; }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2_sq(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(norm2_sq(a)); }

inline double mean(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v;
    return s / static_cast<double>(a.size());
}

// Centers in place and returns the subtracted mean.
inline double center_in_place(std::vector<double>& a) {
    const double m = mean(a);
    for (double& v : a) v -= m;
    return m;
}

} // namespace circnn

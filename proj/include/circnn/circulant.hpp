#pragma once

// Circulant matrices diagonalized by the DFT.
//
// A kernel w with support on the first p coordinates generates the circulant
// W whose first column is the embedded kernel and whose columns are downward
// circular shifts, W_{jk} = w_{(j-k) mod n}.  With the unitary DFT F the
// diagonalization reads W = F^H diag(lambda) F where
//
//   lambda_j = sqrt(n) * (F w)_j = sum_l w_l exp(-2*pi*i*j*l/n),
//
// i.e. the eigenvalues are exactly the unnormalized DFT of the first column
// (fft() in fft.hpp).  Applying W is circular convolution by w.

#include <complex>
#include <cstddef>
#include <vector>

#include "circnn/errors.hpp"
#include "circnn/fft.hpp"
#include "circnn/types.hpp"

namespace circnn {

struct CirculantSpectrum {
    std::vector<cdouble> eigenvalues;

    std::size_t n() const { return eigenvalues.size(); }
};

inline CirculantSpectrum spectrum(const Kernel& k) {
    return CirculantSpectrum{fft_real(k.embed().values)};
}

// First column of the circulant with the given spectrum (inverse of spectrum()).
inline Signal first_column(const CirculantSpectrum& s) {
    return Signal(ifft_to_real(s.eigenvalues));
}

// W s, computed in the Fourier domain.
inline Signal apply(const Kernel& k, const Signal& s) {
    require(k.ambient == s.n(), "apply: kernel ambient dimension != signal length");
    auto sp = fft_real(s.values);
    const auto ks = spectrum(k).eigenvalues;
    for (std::size_t j = 0; j < sp.size(); ++j) sp[j] *= ks[j];
    return Signal(ifft_to_real(std::move(sp)));
}

// (W_d ... W_2 W_1) s with a single transform pair.
inline Signal compose_apply(const std::vector<Kernel>& ws, const Signal& s) {
    require(!ws.empty(), "compose_apply: empty kernel stack");
    auto sp = fft_real(s.values);
    for (const auto& k : ws) {
        require(k.ambient == s.n(), "compose_apply: kernel ambient dimension != signal length");
        const auto ks = spectrum(k).eigenvalues;
        for (std::size_t j = 0; j < sp.size(); ++j) sp[j] *= ks[j];
    }
    return Signal(ifft_to_real(std::move(sp)));
}

// The commutation trick W_k z = Z w_k rewrites the layer-k factor as a fixed
// circulant X_k = (prod_{i != k} W_i) X acting on the kernel, where X is the
// circulant generated by x.  This applies X_k (or its transpose) to v.
inline Signal commutation_matrix_apply(const std::vector<Kernel>& ws, std::size_t skip,
                                       const Signal& x, const Signal& v,
                                       bool transpose = false) {
    require(skip < ws.size(), "commutation_matrix_apply: skip index out of range");
    require(x.n() == v.n(), "commutation_matrix_apply: size mismatch");
    auto col = fft_real(x.values); // spectrum of the first column of X_k
    for (std::size_t i = 0; i < ws.size(); ++i) {
        if (i == skip) continue;
        require(ws[i].ambient == x.n(), "commutation_matrix_apply: kernel ambient dimension != signal length");
        const auto ks = spectrum(ws[i]).eigenvalues;
        for (std::size_t j = 0; j < col.size(); ++j) col[j] *= ks[j];
    }
    auto vs = fft_real(v.values);
    for (std::size_t j = 0; j < vs.size(); ++j)
        vs[j] *= transpose ? std::conj(col[j]) : col[j];
    return Signal(ifft_to_real(std::move(vs)));
}

} // namespace circnn

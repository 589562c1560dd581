#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "circnn/circnn.hpp"
#include "oracles.hpp"

using namespace circnn;

namespace {

std::vector<Kernel> random_chain(Rng& rng, std::size_t n, std::size_t d, std::size_t p,
                                 double sigma = 1.0) {
    std::vector<Kernel> ks;
    ks.reserve(d);
    for (std::size_t i = 0; i < d; ++i) ks.emplace_back(rng.gaussian_vector(p, sigma), n);
    return ks;
}

Signal centered_gaussian(Rng& rng, std::size_t n) {
    auto v = rng.gaussian_vector(n, 1.0);
    center_in_place(v);
    return Signal(std::move(v));
}

double spatial_half_sq_loss(const std::vector<Kernel>& ks, const Signal& x, const Signal& y) {
    Signal f = compose_apply(ks, x);
    double s = 0.0;
    for (std::size_t j = 0; j < x.n(); ++j) {
        const double d = f.values[j] - y.values[j];
        s += d * d;
    }
    return 0.5 * s;
}

} // namespace

// ----------------------------------------------------------- fourier_loss

TEST_CASE("fourier_loss total equals the spatial residual loss") {
    Rng rng(201);
    for (std::size_t n : {8ul, 16ul, 32ul})
        for (std::size_t d : {1ul, 2ul, 4ul}) {
            auto ks = random_chain(rng, n, d, 3);
            Signal x(rng.gaussian_vector(n, 1.0));
            Signal y(rng.gaussian_vector(n, 1.0));
            const double spatial = spatial_half_sq_loss(ks, x, y);
            const double fourier = fourier_loss(ks, x, y).total;
            REQUIRE_THAT(fourier, Catch::Matchers::WithinRel(spatial, 1e-12));
        }
}

TEST_CASE("fourier_loss of a delta chain reduces to (1/2)||y - x||^2") {
    Rng rng(202);
    const std::size_t n = 16;
    std::vector<Kernel> ks(3, Kernel({1.0, 0.0, 0.0}, n));
    Signal x(rng.gaussian_vector(n, 1.0));
    Signal y(rng.gaussian_vector(n, 1.0));
    double ref = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = y.values[j] - x.values[j];
        ref += 0.5 * d * d;
    }
    REQUIRE_THAT(fourier_loss(ks, x, y).total, Catch::Matchers::WithinRel(ref, 1e-12));
}

TEST_CASE("fourier_loss residuals vanish when the target is realizable") {
    Rng rng(203);
    const std::size_t n = 32;
    auto ks = random_chain(rng, n, 3, 5);
    Signal x(rng.gaussian_vector(n, 1.0));
    Signal y = compose_apply(ks, x);
    auto terms = fourier_loss(ks, x, y);
    const double scale = norm2_sq(y.values);
    REQUIRE(terms.total < 1e-24 * std::max(1.0, scale));
    for (const auto& r : terms.residuals) REQUIRE(std::abs(r) < 1e-10);
}

TEST_CASE("displacement_norm equals the spatial residual norm") {
    Rng rng(204);
    const std::size_t n = 16;
    auto ks = random_chain(rng, n, 2, 3);
    Signal x(rng.gaussian_vector(n, 1.0));
    Signal y(rng.gaussian_vector(n, 1.0));
    Signal f = compose_apply(ks, x);
    std::vector<double> diff(n);
    for (std::size_t j = 0; j < n; ++j) diff[j] = y.values[j] - f.values[j];
    REQUIRE_THAT(displacement_norm(ks, x, y), Catch::Matchers::WithinRel(norm2(diff), 1e-12));
}

// ------------------------------------------------------- grad_plain_linear

TEST_CASE("grad_plain_linear matches the dense least-squares gradient at depth 1") {
    Rng rng(205);
    const std::size_t n = 16, p = 5;
    auto ks = random_chain(rng, n, 1, p);
    Signal x(rng.gaussian_vector(n, 1.0));
    Signal y(rng.gaussian_vector(n, 1.0));

    // f = X w with X the circulant generated by x; grad = X^T (X w - y).
    const auto X = oracles::dense_circulant(Kernel(x.values, n));
    const auto fw = oracles::matvec(X, ks[0].embed().values);
    std::vector<double> resid(n);
    for (std::size_t j = 0; j < n; ++j) resid[j] = fw[j] - y.values[j];
    const auto full = oracles::matvec(oracles::mattranspose(X, n), resid);

    auto g = grad_plain_linear(ks, x, y);
    REQUIRE(g.kernels.size() == 1);
    REQUIRE(g.kernels[0].size() == p);
    for (std::size_t l = 0; l < p; ++l)
        REQUIRE_THAT(g.kernels[0][l], Catch::Matchers::WithinAbs(full[l], 1e-10));
    REQUIRE_THAT(g.loss, Catch::Matchers::WithinRel(spatial_half_sq_loss(ks, x, y), 1e-12));
}

TEST_CASE("grad_plain_linear matches central differences") {
    Rng rng(206);
    for (int inst = 0; inst < 10; ++inst) {
        const std::size_t n = 16, d = 3, p = 4;
        auto ks = random_chain(rng, n, d, p);
        Signal x(rng.gaussian_vector(n, 1.0));
        Signal y(rng.gaussian_vector(n, 1.0));
        auto g = grad_plain_linear(ks, x, y);

        std::vector<double> flat, analytic;
        for (const auto& k : ks) flat.insert(flat.end(), k.support.begin(), k.support.end());
        for (const auto& gk : g.kernels) analytic.insert(analytic.end(), gk.begin(), gk.end());

        auto lossfn = [&](const std::vector<double>& w) {
            std::vector<Kernel> probe = ks;
            std::size_t o = 0;
            for (auto& k : probe)
                for (auto& c : k.support) c = w[o++];
            return spatial_half_sq_loss(probe, x, y);
        };
        auto rep = fd_check(lossfn, flat, analytic, 1e-6);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("grad_plain_linear vanishes at a realizable optimum") {
    Rng rng(207);
    const std::size_t n = 16;
    auto ks = random_chain(rng, n, 3, 3);
    Signal x(rng.gaussian_vector(n, 1.0));
    Signal y = compose_apply(ks, x);
    auto g = grad_plain_linear(ks, x, y);
    for (const auto& gk : g.kernels)
        for (double v : gk) REQUIRE(std::abs(v) < 1e-10);
}

TEST_CASE("full-support plain gradient norm matches the spectral closed form") {
    Rng rng(208);
    const std::size_t n = 16, d = 3;
    auto ks = random_chain(rng, n, d, n); // p = n: no support truncation
    Signal x(rng.gaussian_vector(n, 1.0));
    Signal y(rng.gaussian_vector(n, 1.0));
    auto g = grad_plain_linear(ks, x, y);
    auto terms = fourier_loss(ks, x, y);

    const double nd = static_cast<double>(n);
    std::vector<std::vector<cdouble>> specs(d);
    for (std::size_t i = 0; i < d; ++i) specs[i] = spectrum(ks[i]).eigenvalues;
    auto fx = fft_real(x.values);
    for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double loo = 1.0;
            for (std::size_t i = 0; i < d; ++i)
                if (i != k) loo *= std::abs(specs[i][j]) / std::sqrt(nd); // unitary magnitude
            const double xu = std::abs(fx[j]) / std::sqrt(nd);
            const double ru = std::abs(terms.residuals[j]);
            s += loo * loo * xu * xu * ru * ru;
        }
        const double closed = std::pow(nd, static_cast<double>(d) / 2.0) * std::sqrt(s);
        REQUIRE_THAT(norm2(g.kernels[k]), Catch::Matchers::WithinRel(closed, 1e-10));
    }
}

// -------------------------------------------------------- grad_norm_linear

TEST_CASE("grad_norm_linear matches central differences including out_scale") {
    Rng rng(209);
    for (int inst = 0; inst < 10; ++inst) {
        const std::size_t n = 16, d = 3, p = 4;
        NetworkSpec spec;
        spec.family = Family::linear1c;
        spec.n = n;
        spec.depth = d;
        spec.kernel = p;
        spec.norm = NormMode::fixed;
        KernelStack st = make_stack(spec, 1);
        for (auto& k : st.kernels) k.support = rng.gaussian_vector(p, 1.0);
        st.out_scale = rng.uniform(0.5, 2.0);
        Signal x = centered_gaussian(rng, n);
        Signal y(rng.gaussian_vector(n, 1.0));

        auto g = grad_norm_linear(st, x, y);
        std::vector<double> analytic;
        for (const auto& gk : g.kernels) analytic.insert(analytic.end(), gk.begin(), gk.end());
        analytic.push_back(g.out_scale);
        auto flat = stack_to_flat(spec, st);
        REQUIRE(flat.size() == analytic.size());

        auto lossfn = [&](const std::vector<double>& w) {
            KernelStack probe = flat_to_stack(spec, st, w);
            Signal f = forward_linear_norm(probe, x);
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double dd = f.values[j] - y.values[j];
                s += dd * dd;
            }
            return 0.5 * s;
        };
        REQUIRE_THAT(lossfn(flat), Catch::Matchers::WithinRel(g.loss, 1e-12));
        auto rep = fd_check(lossfn, flat, analytic, 1e-6);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("normalized-chain kernel gradients are orthogonal to their own layer") {
    Rng rng(210);
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t n = 16, d = 4, p = 3;
        NetworkSpec spec;
        spec.family = Family::linear1c;
        spec.n = n;
        spec.depth = d;
        spec.kernel = p;
        spec.norm = NormMode::fixed;
        KernelStack st = make_stack(spec, 1);
        for (auto& k : st.kernels) k.support = rng.gaussian_vector(p, 1.0);
        st.out_scale = rng.uniform(0.5, 3.0);
        Signal x = centered_gaussian(rng, n);
        Signal y(rng.gaussian_vector(n, 1.0));

        auto g = grad_norm_linear(st, x, y);
        for (std::size_t k = 0; k < d; ++k) {
            const double ip = dot(g.kernels[k], st.kernels[k].support);
            const double bound = 1e-10 * norm2(g.kernels[k]) * norm2(st.kernels[k].support);
            REQUIRE(std::abs(ip) <= std::max(bound, 1e-300));
        }
    }
}

TEST_CASE("kernel gradients vanish when the target is radial") {
    Rng rng(211);
    const std::size_t n = 16;
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = n;
    spec.depth = 3;
    spec.kernel = 3;
    spec.norm = NormMode::fixed;
    KernelStack st = make_stack(spec, 1);
    for (auto& k : st.kernels) k.support = rng.gaussian_vector(3, 1.0);
    st.out_scale = 1.4;
    Signal x = centered_gaussian(rng, n);

    Signal g = compose_apply(st.kernels, x);
    const double ng = norm2(g.values);
    Signal y(n);
    for (std::size_t j = 0; j < n; ++j) y.values[j] = 3.0 * g.values[j] / ng; // y = 3 u

    auto grads = grad_norm_linear(st, x, y);
    for (const auto& gk : grads.kernels)
        for (double v : gk) REQUIRE(std::abs(v) < 1e-12);
    REQUIRE_THAT(grads.out_scale, Catch::Matchers::WithinAbs(st.out_scale - 3.0, 1e-12));
}

TEST_CASE("rescaling one layer by a power of two rescales exactly its own gradient") {
    Rng rng(212);
    const std::size_t n = 16, d = 4, p = 3;
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = n;
    spec.depth = d;
    spec.kernel = p;
    spec.norm = NormMode::fixed;
    KernelStack st = make_stack(spec, 1);
    for (auto& k : st.kernels) k.support = rng.gaussian_vector(p, 1.0);
    st.out_scale = 1.1;
    Signal x = centered_gaussian(rng, n);
    Signal y(rng.gaussian_vector(n, 1.0));
    auto base = grad_norm_linear(st, x, y);

    for (double gamma : {0.5, 2.0}) {
        for (std::size_t k = 0; k < d; ++k) {
            KernelStack scaled = st;
            for (auto& w : scaled.kernels[k].support) w *= gamma;
            auto g = grad_norm_linear(scaled, x, y);
            for (std::size_t l = 0; l < p; ++l)
                REQUIRE(g.kernels[k][l] == base.kernels[k][l] / gamma); // bitwise
            for (std::size_t i = 0; i < d; ++i) {
                if (i == k) continue;
                for (std::size_t l = 0; l < p; ++l)
                    REQUIRE(g.kernels[i][l] == base.kernels[i][l]); // untouched layers
            }
            REQUIRE(g.out_scale == base.out_scale);
        }
    }
}

TEST_CASE("rescaling one layer by 10 rescales its gradient to 1e-10") {
    Rng rng(213);
    const std::size_t n = 16, d = 3, p = 3;
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = n;
    spec.depth = d;
    spec.kernel = p;
    spec.norm = NormMode::fixed;
    KernelStack st = make_stack(spec, 1);
    for (auto& k : st.kernels) k.support = rng.gaussian_vector(p, 1.0);
    Signal x = centered_gaussian(rng, n);
    Signal y(rng.gaussian_vector(n, 1.0));
    auto base = grad_norm_linear(st, x, y);

    for (std::size_t k = 0; k < d; ++k) {
        KernelStack scaled = st;
        for (auto& w : scaled.kernels[k].support) w *= 10.0;
        auto g = grad_norm_linear(scaled, x, y);
        for (std::size_t l = 0; l < p; ++l) {
            const double want = base.kernels[k][l] / 10.0;
            REQUIRE(std::abs(g.kernels[k][l] - want) <=
                    1e-10 * std::max(std::abs(want), 1e-300));
        }
    }
}

// ------------------------------------------------------------ grad_reverse

TEST_CASE("reverse mode agrees with the Fourier closed form on the plain chain") {
    Rng rng(214);
    const std::size_t n = 16, d = 3, p = 4;
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = n;
    spec.depth = d;
    spec.kernel = p;
    spec.norm = NormMode::none;
    KernelStack st = make_stack(spec, 1);
    for (auto& k : st.kernels) k.support = rng.gaussian_vector(p, 1.0);
    Signal x(rng.gaussian_vector(n, 1.0));
    Signal y(rng.gaussian_vector(n, 1.0));

    auto rr = grad_reverse(spec, st, x, y);
    auto closed = grad_plain_linear(st.kernels, x, y);
    REQUIRE_THAT(rr.loss, Catch::Matchers::WithinRel(closed.loss, 1e-12));
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < p; ++l)
            REQUIRE_THAT(rr.grads.kernels[k][l],
                         Catch::Matchers::WithinAbs(closed.kernels[k][l], 1e-10));
}

TEST_CASE("reverse mode agrees with the projection closed form on the normalized chain") {
    Rng rng(215);
    const std::size_t n = 16, d = 3, p = 4;
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = n;
    spec.depth = d;
    spec.kernel = p;
    spec.norm = NormMode::fixed;
    KernelStack st = make_stack(spec, 1);
    for (auto& k : st.kernels) k.support = rng.gaussian_vector(p, 1.0);
    st.out_scale = 1.6;
    Signal x = centered_gaussian(rng, n);
    Signal y(rng.gaussian_vector(n, 1.0));

    auto rr = grad_reverse(spec, st, x, y);
    auto closed = grad_norm_linear(st, x, y);
    REQUIRE_THAT(rr.loss, Catch::Matchers::WithinRel(closed.loss, 1e-12));
    REQUIRE_THAT(rr.grads.out_scale, Catch::Matchers::WithinAbs(closed.out_scale, 1e-12));
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < p; ++l)
            REQUIRE_THAT(rr.grads.kernels[k][l],
                         Catch::Matchers::WithinAbs(closed.kernels[k][l], 1e-10));
}

TEST_CASE("reverse mode matches central differences on the learned-norm linear chain") {
    Rng rng(216);
    const std::size_t n = 16, d = 3, p = 3;
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = n;
    spec.depth = d;
    spec.kernel = p;
    spec.norm = NormMode::learned;
    Rng init(217);
    KernelStack st = init_stack(spec, 1, InitScheme::gaussian_unit, 0.0, init);
    for (auto& g : st.gammas)
        for (auto& v : g) v = init.uniform(0.7, 1.3);
    for (auto& b : st.betas)
        for (auto& v : b) v = init.uniform(-0.2, 0.2);
    st.out_scale = 1.2;
    Signal x = centered_gaussian(rng, n);
    Signal y(rng.gaussian_vector(n, 1.0));

    auto rr = grad_reverse(spec, st, x, y);
    auto analytic = gradient_to_flat(spec, rr.grads);
    auto flat = stack_to_flat(spec, st);
    REQUIRE(analytic.size() == flat.size());
    auto lossfn = [&](const std::vector<double>& w) {
        return loss_value(spec, flat_to_stack(spec, st, w), x, y);
    };
    REQUIRE_THAT(lossfn(flat), Catch::Matchers::WithinRel(rr.loss, 1e-12));
    auto rep = fd_check(lossfn, flat, analytic, 1e-6);
    REQUIRE(rep.max_rel_err < 1e-6);
}

TEST_CASE("reverse mode matches central differences on the multichannel 1-D net") {
    for (NormMode norm : {NormMode::none, NormMode::fixed, NormMode::learned}) {
        NetworkSpec spec;
        spec.family = Family::mcnn1d;
        spec.n = 16;
        spec.depth = 3;
        spec.channels = 2;
        spec.kernel = 3;
        spec.norm = norm;
        Rng init(218);
        KernelStack st = init_stack(spec, 1, InitScheme::gaussian_unit, 0.0, init);
        MultiSignal x = make_input_multisignal(1, 16, 219);
        Signal y(Rng(220).gaussian_vector(16, 1.0));

        auto rr = grad_reverse(spec, st, x, y);
        auto analytic = gradient_to_flat(spec, rr.grads);
        auto flat = stack_to_flat(spec, st);
        REQUIRE(analytic.size() == flat.size());
        auto lossfn = [&](const std::vector<double>& w) {
            return loss_value(spec, flat_to_stack(spec, st, w), x, y);
        };
        REQUIRE_THAT(lossfn(flat), Catch::Matchers::WithinRel(rr.loss, 1e-12));
        auto rep = fd_check(lossfn, flat, analytic, 1e-6);
        REQUIRE(rep.max_rel_err < 1e-5); // ReLU kinks cap the attainable accuracy
    }
}

TEST_CASE("reverse mode matches central differences on the 2-D generator") {
    for (NormMode norm : {NormMode::none, NormMode::learned}) {
        NetworkSpec spec;
        spec.family = Family::gen2d;
        spec.n = 8;
        spec.depth = 2;
        spec.channels = 3;
        spec.kernel = 3;
        spec.norm = norm;
        Rng init(221);
        KernelStack st = init_stack(spec, spec.channels, InitScheme::gaussian_unit, 0.0, init);
        Volume x = make_input_volume(spec.channels, 8, 8, 222);
        Image y(8, 8);
        Rng ty(223);
        for (auto& v : y.values) v = ty.uniform();

        auto rr = grad_reverse(spec, st, x, y);
        auto analytic = gradient_to_flat(spec, rr.grads);
        auto flat = stack_to_flat(spec, st);
        REQUIRE(analytic.size() == flat.size());
        auto lossfn = [&](const std::vector<double>& w) {
            return loss_value(spec, flat_to_stack(spec, st, w), x, y);
        };
        REQUIRE_THAT(lossfn(flat), Catch::Matchers::WithinRel(rr.loss, 1e-12));
        auto rep = fd_check(lossfn, flat, analytic, 1e-6, 64, 7);
        REQUIRE(rep.coords_checked == 64);
        REQUIRE(rep.max_rel_err < 1e-5);
    }
}

// ---------------------------------------------------------------- fd_check

TEST_CASE("fd_check is exact on a quadratic") {
    Rng rng(224);
    auto w = rng.gaussian_vector(20, 1.0);
    auto lossfn = [](const std::vector<double>& v) { return 0.5 * norm2_sq(v); };
    auto rep = fd_check(lossfn, w, w, 1e-6);
    REQUIRE(rep.coords_checked == 20);
    REQUIRE(rep.max_rel_err < 1e-9);
}

TEST_CASE("fd_check error shrinks quadratically in the step") {
    // Needs a loss with nonvanishing third derivative: use the normalized
    // chain, whose loss is a genuinely nonlinear function of the weights.
    Rng rng(225);
    const std::size_t n = 16, d = 3, p = 3;
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = n;
    spec.depth = d;
    spec.kernel = p;
    spec.norm = NormMode::fixed;
    KernelStack st = make_stack(spec, 1);
    for (auto& k : st.kernels) k.support = rng.gaussian_vector(p, 1.0);
    st.out_scale = 1.7;
    Signal x = centered_gaussian(rng, n);
    Signal y(rng.gaussian_vector(n, 1.0));

    auto g = grad_norm_linear(st, x, y);
    std::vector<double> analytic;
    for (const auto& gk : g.kernels) analytic.insert(analytic.end(), gk.begin(), gk.end());
    analytic.push_back(g.out_scale);
    auto flat = stack_to_flat(spec, st);
    auto lossfn = [&](const std::vector<double>& w) {
        KernelStack probe = flat_to_stack(spec, st, w);
        Signal f = forward_linear_norm(probe, x);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double dd = f.values[j] - y.values[j];
            s += dd * dd;
        }
        return 0.5 * s;
    };
    const double e1 = fd_check(lossfn, flat, analytic, 2e-3).max_rel_err;
    const double e2 = fd_check(lossfn, flat, analytic, 1e-3).max_rel_err;
    REQUIRE(e1 > 0.0);
    REQUIRE(e2 > 0.0);
    const double ratio = e1 / e2;
    REQUIRE(ratio > 2.0);
    REQUIRE(ratio < 8.0);
}

TEST_CASE("fd_check subsampling is deterministic in the seed") {
    Rng rng(226);
    auto w = rng.gaussian_vector(100, 1.0);
    std::vector<double> bad = w;
    bad[37] += 0.5; // one corrupted coordinate
    auto lossfn = [](const std::vector<double>& v) { return 0.5 * norm2_sq(v); };
    auto a = fd_check(lossfn, w, bad, 1e-6, 64, 5);
    auto b = fd_check(lossfn, w, bad, 1e-6, 64, 5);
    REQUIRE(a.coords_checked == 64);
    REQUIRE(a.worst_coord == b.worst_coord);
    REQUIRE(a.max_rel_err == b.max_rel_err);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "circnn/circnn.hpp"

using namespace circnn;

// ----------------------------------------------------------------- training

TEST_CASE("run_training with zero steps records exactly the initial point") {
    TrainConfig cfg;
    cfg.spec.family = Family::linear1c;
    cfg.spec.n = 16;
    cfg.spec.depth = 2;
    cfg.spec.kernel = 3;
    cfg.steps = 0;
    cfg.seed = 5;
    Rng rng(401);
    Signal x(rng.gaussian_vector(16, 1.0));
    Signal y(rng.gaussian_vector(16, 1.0));
    auto run = run_training(cfg, x, y);
    REQUIRE(run.trace.rows.size() == 1);
    REQUIRE(run.trace.rows[0].step == 0);
    REQUIRE(run.trace.steps_run == 0);
    REQUIRE(run.trace.final_loss == run.trace.rows[0].loss);
    REQUIRE(stack_to_flat(cfg.spec, run.weights) == stack_to_flat(cfg.spec, run.init_weights));
}

TEST_CASE("depth-1 full-support training converges to the spectral ratio") {
    const std::size_t n = 8;
    TrainConfig cfg;
    cfg.spec.family = Family::linear1c;
    cfg.spec.n = n;
    cfg.spec.depth = 1;
    cfg.spec.kernel = n;
    cfg.eta = 0.05;
    cfg.steps = 2000;
    cfg.seed = 11;
    cfg.record_stride = 500;

    // x = delta + 0.5: spectrum is 5 at DC and exactly 1 elsewhere, so the
    // normal-equation curvatures are 25 and 1 and eta = 0.05 converges
    // geometrically on every mode.
    Signal x(std::vector<double>(n, 0.5));
    x.values[0] = 1.5;
    Rng rng(402);
    Signal y(rng.gaussian_vector(n, 1.0));

    auto run = run_training(cfg, x, y);
    REQUIRE(run.trace.final_loss < 1e-20);

    auto fw = spectrum(run.weights.kernels[0]).eigenvalues;
    auto fx = fft_real(x.values);
    auto fy = fft_real(y.values);
    for (std::size_t j = 0; j < n; ++j) {
        const cdouble want = fy[j] / fx[j];
        REQUIRE(std::abs(fw[j] - want) < 1e-9);
    }
}

TEST_CASE("run_training throws Diverged with the partial trace attached") {
    TrainConfig cfg;
    cfg.spec.family = Family::linear1c;
    cfg.spec.n = 16;
    cfg.spec.depth = 2;
    cfg.spec.kernel = 3;
    cfg.eta = 1e8; // far beyond any stable step size
    cfg.steps = 1000;
    cfg.record_stride = 1;
    cfg.seed = 3;
    Rng rng(403);
    Signal x(rng.gaussian_vector(16, 1.0));
    Signal y(rng.gaussian_vector(16, 1.0));
    bool threw = false;
    try {
        run_training(cfg, x, y);
    } catch (const Diverged& e) {
        threw = true;
        REQUIRE(!e.trace.rows.empty());
        REQUIRE(!(e.trace.final_loss <= 1e12)); // above the ceiling or NaN
    }
    REQUIRE(threw);
}

TEST_CASE("stop_loss ends training early with a final record") {
    const std::size_t n = 8;
    TrainConfig cfg;
    cfg.spec.family = Family::linear1c;
    cfg.spec.n = n;
    cfg.spec.depth = 1;
    cfg.spec.kernel = n;
    cfg.eta = 0.05;
    cfg.steps = 100000;
    cfg.seed = 11;
    cfg.record_stride = 1000;
    cfg.stop_loss = 1e-8;
    Signal x(std::vector<double>(n, 0.5));
    x.values[0] = 1.5;
    Rng rng(404);
    Signal y(rng.gaussian_vector(n, 1.0));
    auto run = run_training(cfg, x, y);
    REQUIRE(run.trace.steps_run < cfg.steps);
    REQUIRE(run.trace.final_loss <= 1e-8);
    REQUIRE(run.trace.rows.back().loss <= 1e-8);
    REQUIRE(run.trace.rows.back().step == run.trace.steps_run);
}

TEST_CASE("trace rows land on the record stride plus the final step") {
    TrainConfig cfg;
    cfg.spec.family = Family::linear1c;
    cfg.spec.n = 16;
    cfg.spec.depth = 2;
    cfg.spec.kernel = 3;
    cfg.eta = 0.001;
    cfg.steps = 250;
    cfg.record_stride = 100;
    cfg.seed = 17;
    Rng rng(405);
    Signal x(rng.gaussian_vector(16, 1.0));
    Signal y(rng.gaussian_vector(16, 1.0));
    auto run = run_training(cfg, x, y);
    std::vector<std::size_t> steps;
    for (const auto& r : run.trace.rows) steps.push_back(r.step);
    REQUIRE(steps == std::vector<std::size_t>{0, 100, 200, 250});
    REQUIRE(run.trace.steps_run == 250);
    for (const auto& r : run.trace.rows) {
        REQUIRE(r.layer_grad_norms.size() == 2);
        REQUIRE(run.trace.min_loss <= r.loss);
    }
}

// ---------------------------------------------------------------- landscape

TEST_CASE("landscape slice center cell equals the unperturbed loss bitwise") {
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = 16;
    spec.depth = 3;
    spec.kernel = 3;
    spec.norm = NormMode::none;
    Rng rng(406);
    KernelStack center = init_stack(spec, 1, InitScheme::gaussian_np, 0.0, rng);
    Signal x(rng.gaussian_vector(16, 1.0));
    Signal y(rng.gaussian_vector(16, 1.0));

    auto slice = slice_landscape(center, spec, x, y, 0.1, 5, 77);
    REQUIRE(slice.values.size() == 25);
    REQUIRE(slice.at(2, 2) == loss_value(spec, center, x, y));
}

TEST_CASE("landscape cells reproduce under manual re-evaluation") {
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = 16;
    spec.depth = 2;
    spec.kernel = 4;
    spec.norm = NormMode::fixed;
    Rng rng(407);
    KernelStack center = init_stack(spec, 1, InitScheme::gaussian_np, 0.0, rng);
    center.out_scale = 1.3;
    auto xv = rng.gaussian_vector(16, 1.0);
    center_in_place(xv);
    Signal x(std::move(xv));
    Signal y(rng.gaussian_vector(16, 1.0));

    const double extent = 0.25;
    const std::size_t res = 7;
    auto slice = slice_landscape(center, spec, x, y, extent, res, 78);
    REQUIRE_THAT(norm2(slice.dir_u), Catch::Matchers::WithinRel(1.0, 1e-12));
    REQUIRE(std::abs(dot(slice.dir_u, slice.dir_v)) < 1e-12);

    auto flat0 = stack_to_flat(spec, center);
    const double h = 2.0 * extent / static_cast<double>(res - 1);
    for (auto [ia, ib] : {std::pair<std::size_t, std::size_t>{1, 3}, {0, 6}, {5, 2}}) {
        const double a = -extent + h * static_cast<double>(ia);
        const double b = -extent + h * static_cast<double>(ib);
        std::vector<double> flat(flat0.size());
        for (std::size_t i = 0; i < flat.size(); ++i)
            flat[i] = flat0[i] + a * slice.dir_u[i] + b * slice.dir_v[i];
        const double want = loss_value(spec, flat_to_stack(spec, center, flat), x, y);
        REQUIRE(slice.at(ia, ib) == want);
    }
}

TEST_CASE("landscape slice rejects even or tiny resolutions") {
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = 8;
    spec.depth = 2;
    spec.kernel = 3;
    Rng rng(408);
    KernelStack center = init_stack(spec, 1, InitScheme::gaussian_np, 0.0, rng);
    Signal x(rng.gaussian_vector(8, 1.0));
    Signal y(rng.gaussian_vector(8, 1.0));
    REQUIRE_THROWS_AS(slice_landscape(center, spec, x, y, 0.1, 4, 1), ShapeError);
    REQUIRE_THROWS_AS(slice_landscape(center, spec, x, y, 0.1, 1, 1), ShapeError);
}

TEST_CASE("landscape_table is one row per grid cell") {
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = 8;
    spec.depth = 2;
    spec.kernel = 3;
    Rng rng(409);
    KernelStack center = init_stack(spec, 1, InitScheme::gaussian_np, 0.0, rng);
    Signal x(rng.gaussian_vector(8, 1.0));
    Signal y(rng.gaussian_vector(8, 1.0));
    auto slice = slice_landscape(center, spec, x, y, 0.2, 5, 2);
    auto table = landscape_table(slice);
    REQUIRE(table.columns == std::vector<std::string>{"index", "a", "b", "loss"});
    REQUIRE(table.rows.size() == 25);
    REQUIRE(table.rows[0][1] == -0.2);
    REQUIRE(table.rows[24][2] == 0.2);
    REQUIRE(table.rows[12][3] == slice.at(2, 2));
}

// ------------------------------------------------- gradient-norm sampling

TEST_CASE("grad_norm_samples is deterministic and trial-indexed") {
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = 16;
    spec.depth = 3;
    spec.kernel = 3;
    Rng rng(410);
    Signal x(rng.gaussian_vector(16, 1.0));
    Signal y(rng.gaussian_vector(16, 1.0));
    auto a = grad_norm_samples(spec, x, y, 10, 7);
    auto b = grad_norm_samples(spec, x, y, 10, 7);
    REQUIRE(a == b);
    auto c = grad_norm_samples(spec, x, y, 5, 7);
    for (std::size_t t = 0; t < 5; ++t) REQUIRE(a[t] == c[t]); // streams keyed by index
    for (double v : a) REQUIRE(v > 0.0);
}

TEST_CASE("grad_histogram bins cover the samples") {
    // linear chains give strictly positive gradient norms, which the log
    // binning requires (a dead ReLU draw would produce an exact zero)
    NetworkSpec spec;
    spec.family = Family::linear1c;
    spec.n = 16;
    spec.depth = 3;
    spec.kernel = 3;
    Signal x = make_input_signal(16, 411);
    Signal y(Rng(412).gaussian_vector(16, 1.0));
    auto samples = grad_norm_samples(spec, x, y, 200, 9);
    auto table = grad_histogram(samples, 12);
    REQUIRE(table.rows.size() == 12);
    double count = 0.0;
    for (const auto& r : table.rows) {
        count += r[4];
        REQUIRE(r[1] <= r[2]);
        REQUIRE(r[2] <= r[3]);
    }
    REQUIRE(count == 200.0);
    // edges are geometric: left of bin b+1 equals right of bin b
    for (std::size_t b = 0; b + 1 < 12; ++b)
        REQUIRE_THAT(table.rows[b][3], Catch::Matchers::WithinRel(table.rows[b + 1][1], 1e-12));
}

TEST_CASE("percentile interpolates linearly") {
    std::vector<double> v = {5.0, 1.0, 3.0, 2.0, 4.0};
    REQUIRE(percentile(v, 0.0) == 1.0);
    REQUIRE(percentile(v, 1.0) == 5.0);
    REQUIRE(percentile(v, 0.5) == 3.0);
    REQUIRE_THAT(percentile(v, 0.25), Catch::Matchers::WithinAbs(2.0, 1e-15));
    REQUIRE_THAT(percentile(v, 0.9), Catch::Matchers::WithinAbs(4.6, 1e-12));
}

// --------------------------------------------------------- synthetic data

TEST_CASE("make_step_target builds the two-level signal") {
    auto y = make_step_target(8, -1.0, 2.0, 3);
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(y.values[j] == -1.0);
    for (std::size_t j = 3; j < 8; ++j) REQUIRE(y.values[j] == 2.0);

    auto yc = make_step_target(8, -1.0, 2.0, 3, true);
    REQUIRE(std::abs(mean(yc.values)) < 1e-15);
    // centering preserves the step gap
    REQUIRE_THAT(yc.values[7] - yc.values[0], Catch::Matchers::WithinAbs(3.0, 1e-15));
    REQUIRE_THROWS_AS(make_step_target(8, 0.0, 1.0, 0), ShapeError);
}

TEST_CASE("phantom image has the expected anatomy") {
    const std::size_t size = 64;
    Image img = make_phantom(size);
    REQUIRE(img.values.size() == size * size);
    for (double v : img.values) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    // corner: outside the skull
    REQUIRE(img.at(0, 0) == 0.0);
    // near the center: skull plus interior tissue at intensity 1 - 0.8
    REQUIRE_THAT(img.at(31, 31), Catch::Matchers::WithinAbs(0.2, 1e-12));
    // the image must not be blank
    double total = 0.0;
    for (double v : img.values) total += v;
    REQUIRE(total > 50.0);
}

TEST_CASE("phantom top region is mirror symmetric, full image is not") {
    const std::size_t size = 64;
    Image img = make_phantom(size);
    const double step = 2.0 / static_cast<double>(size);
    // rows with y > 0.45 only see the centered upright ellipses
    for (std::size_t i = 0; i < size; ++i) {
        const double yc = 1.0 - step * (static_cast<double>(i) + 0.5);
        if (yc <= 0.45) continue;
        for (std::size_t j = 0; j < size; ++j)
            REQUIRE(img.at(i, j) == img.at(i, size - 1 - j));
    }
    // the rotated mid-plane ellipses have different sizes: no global symmetry
    bool asymmetric = false;
    for (std::size_t i = 0; i < size && !asymmetric; ++i)
        for (std::size_t j = 0; j < size; ++j)
            if (img.at(i, j) != img.at(i, size - 1 - j)) {
                asymmetric = true;
                break;
            }
    REQUIRE(asymmetric);
}

TEST_CASE("synthetic inputs are deterministic in the seed") {
    auto a = make_input_signal(32, 5);
    auto b = make_input_signal(32, 5);
    REQUIRE(a.values == b.values);
    for (double v : a.values) {
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
    }
    auto c = make_input_signal(32, 6);
    REQUIRE(a.values != c.values);

    auto v1 = make_input_volume(3, 8, 8, 9);
    auto v2 = make_input_volume(3, 8, 8, 9);
    REQUIRE(v1.values == v2.values);
    REQUIRE(v1.values.size() == 192);

    auto m1 = make_input_multisignal(2, 16, 4);
    REQUIRE(m1.channels == 2);
    REQUIRE(m1.length == 16);
}

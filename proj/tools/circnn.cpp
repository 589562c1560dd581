// Command-line driver: training runs, landscape slices, gradient histograms,
// and the theory probes, all writing '#'-commented .dat tables (and binary
// weight files).  Every command is a pure function of its flags; rerunning
// with the same seed reproduces output files byte for byte.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "circnn/circnn.hpp"

using namespace circnn;

namespace {

// Input data is derived from the user seed through a fixed tag so the data
// stream never collides with the init stream inside run_training.
constexpr std::uint64_t kDataTag = 0x8bb84b93962eacc9ULL;

std::uint64_t data_seed(std::uint64_t seed) { return splitmix64(seed ^ kDataTag); }

Family parse_family(const std::string& s) {
    if (s == "linear1c") return Family::linear1c;
    if (s == "mcnn1d") return Family::mcnn1d;
    if (s == "gen2d") return Family::gen2d;
    throw ShapeError("unknown family: " + s);
}

NormMode parse_norm(const std::string& s) {
    if (s == "learned") return NormMode::learned;
    if (s == "fixed") return NormMode::fixed;
    if (s == "none") return NormMode::none;
    throw ShapeError("unknown norm mode: " + s);
}

InitScheme parse_init(const std::string& s) {
    if (s == "gaussian-np") return InitScheme::gaussian_np;
    if (s == "gaussian-unit") return InitScheme::gaussian_unit;
    if (s == "custom") return InitScheme::custom;
    throw ShapeError("unknown init scheme: " + s);
}

std::vector<double> read_values(const std::string& path) {
    DataTable t = read_dat(path);
    std::vector<double> v;
    for (const auto& row : t.rows) v.insert(v.end(), row.begin(), row.end());
    require(!v.empty(), "target file has no numeric values: " + path);
    return v;
}

// Target selection shared by train and landscape.  "auto" gives the step
// function for the 1-D families and the head phantom for the 2-D generator.
Signal target_1d(const NetworkSpec& spec, const std::string& target) {
    std::string t = target == "auto" ? "step" : target;
    if (t == "step") {
        // the linear family trains against a zero-mean target; the ReLU
        // family keeps the raw 0/1 levels
        return make_step_target(spec.n, 0.0, 1.0, spec.n / 2,
                                spec.family == Family::linear1c);
    }
    if (t.rfind("file:", 0) == 0) {
        auto v = read_values(t.substr(5));
        require(v.size() == spec.n, "target length does not match --n");
        return Signal(std::move(v));
    }
    throw ShapeError("unsupported 1-D target: " + target);
}

Image target_2d(const NetworkSpec& spec, const std::string& target) {
    std::string t = target == "auto" ? "phantom" : target;
    if (t == "phantom") return make_phantom(spec.n);
    if (t.rfind("file:", 0) == 0) {
        auto v = read_values(t.substr(5));
        require(v.size() == spec.n * spec.n, "target size does not match --n squared");
        Image img(spec.n, spec.n);
        img.values = std::move(v);
        return img;
    }
    throw ShapeError("unsupported 2-D target: " + target);
}

double default_eta(const NetworkSpec& spec) {
    // the 2-D generator loss is a plain sum over pixels, so its curvature
    // grows with the image; the small default stays stable at 64x64
    if (spec.family == Family::gen2d) return 1e-4;
    // fixed-norm training is stable at 0.05; the learned-norm parameters and
    // the unnormalized chains both need the smaller step
    return spec.norm == NormMode::fixed ? 0.05 : 0.005;
}

std::size_t default_steps(const NetworkSpec& spec) {
    return spec.family == Family::gen2d ? 20000 : 100000;
}

struct CommonNet {
    std::string family = "linear1c";
    std::string norm = "learned";
    std::size_t n = 64;
    std::size_t d = 5;
    std::size_t kernel = 3;
    std::size_t channels = 4;

    NetworkSpec spec() const {
        NetworkSpec s;
        s.family = parse_family(family);
        s.norm = parse_norm(norm);
        s.n = n;
        s.depth = d;
        s.kernel = kernel;
        s.channels = s.family == Family::linear1c ? 1 : channels;
        s.validate();
        return s;
    }
};

void add_net_flags(CLI::App* cmd, CommonNet& net) {
    cmd->add_option("--family", net.family, "linear1c|mcnn1d|gen2d");
    cmd->add_option("--norm", net.norm, "learned|fixed|none");
    cmd->add_option("--n", net.n, "signal length / image side");
    cmd->add_option("--d", net.d, "number of convolution layers");
    cmd->add_option("--kernel", net.kernel, "kernel taps (per axis for gen2d)");
    cmd->add_option("--channels", net.channels, "hidden channels (multichannel families)");
}

int run_train(const CommonNet& net, double lr, std::size_t steps, std::uint64_t seed,
              const std::string& target, const std::string& out, const std::string& weights_out,
              std::size_t stride, double stop_loss, const std::string& init, double sigma) {
    NetworkSpec spec = net.spec();
    TrainConfig cfg;
    cfg.spec = spec;
    cfg.eta = lr > 0.0 ? lr : default_eta(spec);
    cfg.steps = steps > 0 ? steps : default_steps(spec);
    cfg.seed = seed;
    cfg.record_stride = stride;
    cfg.stop_loss = stop_loss;
    cfg.init = parse_init(init);
    cfg.sigma = sigma;

    TrainRun run = [&] {
        const std::uint64_t ds = data_seed(seed);
        if (spec.family == Family::linear1c) {
            Signal x = make_input_signal(spec.n, ds);
            center_in_place(x.values); // collapsed-norm forward needs zero mean
            return run_training(cfg, x, target_1d(spec, target));
        }
        if (spec.family == Family::mcnn1d) {
            MultiSignal x = make_input_multisignal(1, spec.n, ds);
            return run_training(cfg, x, target_1d(spec, target));
        }
        Volume x = make_input_volume(spec.channels, spec.n, spec.n, ds);
        return run_training(cfg, x, target_2d(spec, target));
    }();

    emit_dat(run.trace, out);
    if (!weights_out.empty()) save_weights(weights_out, spec, run.weights);
    std::printf("trained %zu steps, final loss %.6e, trace -> %s\n", run.trace.steps_run,
                run.trace.final_loss, out.c_str());
    if (!weights_out.empty()) std::printf("weights -> %s\n", weights_out.c_str());
    return 0;
}

int run_landscape(const std::string& in, const std::string& norm_override, double extent,
                  std::size_t res, std::uint64_t seed, const std::string& target,
                  const std::string& out) {
    LoadedWeights lw = load_weights(in);
    if (norm_override != "auto") lw.spec.norm = parse_norm(norm_override);

    const std::uint64_t ds = data_seed(seed);
    LandscapeSlice slice = [&] {
        if (lw.spec.family == Family::linear1c) {
            Signal x = make_input_signal(lw.spec.n, ds);
            center_in_place(x.values);
            return slice_landscape(lw.stack, lw.spec, x, target_1d(lw.spec, target), extent, res,
                                   seed);
        }
        if (lw.spec.family == Family::mcnn1d) {
            MultiSignal x = make_input_multisignal(1, lw.spec.n, ds);
            return slice_landscape(lw.stack, lw.spec, x, target_1d(lw.spec, target), extent, res,
                                   seed);
        }
        Volume x = make_input_volume(lw.spec.channels, lw.spec.n, lw.spec.n, ds);
        return slice_landscape(lw.stack, lw.spec, x, target_2d(lw.spec, target), extent, res,
                               seed);
    }();

    DataTable table = landscape_table(slice);
    table.notes.push_back("weights: " + std::filesystem::path(in).filename().string());
    emit_dat(table, out);
    std::printf("landscape %zux%zu at extent %g -> %s\n", res, res, extent, out.c_str());
    return 0;
}

int run_histogram(const CommonNet& net, std::size_t trials, std::size_t bins,
                  std::uint64_t seed, const std::string& target, const std::string& out) {
    NetworkSpec spec = net.spec();
    require(spec.family != Family::gen2d, "histogram supports the 1-D families");
    require(trials >= 100, "histogram needs at least 100 trials");

    const std::uint64_t ds = data_seed(seed);
    std::vector<double> samples;
    if (spec.family == Family::linear1c) {
        Signal x = make_input_signal(spec.n, ds);
        center_in_place(x.values);
        samples = grad_norm_samples(spec, x, target_1d(spec, target), trials, seed);
    } else {
        MultiSignal x = make_input_multisignal(1, spec.n, ds);
        samples = grad_norm_samples(spec, x, target_1d(spec, target), trials, seed);
    }

    DataTable table = grad_histogram(samples, bins);
    char note[160];
    std::snprintf(note, sizeof(note), "gradient-norm percentiles: p50 %.17g p99 %.17g",
                  percentile(samples, 0.5), percentile(samples, 0.99));
    table.notes.push_back(note);
    emit_dat(table, out);
    std::printf("histogram of %zu gradient norms in %zu bins -> %s\n", trials, bins, out.c_str());
    return 0;
}

int run_escape(std::size_t n, std::size_t d, std::size_t kernel, double lr, double radius_scale,
               std::size_t seeds, std::size_t max_steps, std::uint64_t seed,
               const std::string& out) {
    EscapeTrialConfig cfg;
    cfg.n = n;
    cfg.p = kernel;
    cfg.eta = lr;
    cfg.radius_scale = radius_scale;
    cfg.max_steps = max_steps;

    DataTable t;
    t.columns = {"seed", "steps_in_ball", "reason", "loss_at_exit", "min_loss_in_ball",
                 "suboptimal", "eta"};
    t.integer_columns = {true, true, true, false, false, true, false};
    std::vector<double> steps;
    for (std::size_t s = 0; s < seeds; ++s) {
        EscapeResult res = escape_trial(cfg, d, seed + s);
        const double reason = res.reason == ExitReason::left_ball         ? 0.0
                              : res.reason == ExitReason::reached_target ? 1.0
                                                                         : 2.0;
        t.rows.push_back({static_cast<double>(s), static_cast<double>(res.steps_in_ball), reason,
                          res.loss_at_exit, res.min_loss_in_ball,
                          res.suboptimal_throughout ? 1.0 : 0.0, res.eta});
        steps.push_back(static_cast<double>(res.steps_in_ball));
    }
    char note[128];
    std::snprintf(note, sizeof(note), "reason codes: 0 left ball, 1 reached target, 2 step limit");
    t.notes.push_back(note);
    std::snprintf(note, sizeof(note), "median steps in ball: %.17g", percentile(steps, 0.5));
    t.notes.push_back(note);
    emit_dat(t, out);
    std::printf("escape trials d=%zu over %zu seeds -> %s\n", d, seeds, out.c_str());
    return 0;
}

int run_bound(std::size_t n, std::size_t d, std::size_t kernel, double radius,
              std::size_t samples, std::size_t centers, std::uint64_t seed,
              const std::string& out) {
    const double sigma = 1.0 / std::sqrt(static_cast<double>(n * kernel));
    Rng master(seed);
    Signal x = make_input_signal(n, data_seed(seed));
    Signal y(master.stream(999).gaussian_vector(n));

    DataTable t;
    t.columns = {"center", "sample", "grad_norm", "grad_bound", "product", "product_bound",
                 "holds"};
    t.integer_columns = {true, true, false, false, false, false, true};
    std::size_t held = 0, total = 0;
    for (std::size_t c = 0; c < centers; ++c) {
        Rng rng = master.stream(c);
        std::vector<Kernel> center;
        for (std::size_t i = 0; i < d; ++i)
            center.emplace_back(rng.gaussian_vector(kernel, sigma), n);
        double delta = norm2(center[0].support);
        for (const auto& k : center) delta = std::min(delta, norm2(k.support));
        const double r =
            radius > 0.0 ? radius : 0.1 * delta / std::sqrt(static_cast<double>(d));
        BallProbe probe(center, r);
        for (std::size_t s = 0; s < samples; ++s) {
            auto v = sample_in_ball(probe, rng);
            auto rep = lemma1_bound(probe, v, x, y);
            t.rows.push_back({static_cast<double>(c), static_cast<double>(s), rep.grad_norm,
                              rep.grad_bound, rep.product, rep.product_bound,
                              rep.holds() ? 1.0 : 0.0});
            ++total;
            if (rep.holds()) ++held;
        }
    }
    char note[96];
    std::snprintf(note, sizeof(note), "bound held in %zu of %zu samples", held, total);
    t.notes.push_back(note);
    emit_dat(t, out);
    std::printf("%s -> %s\n", note, out.c_str());
    return 0;
}

int run_assumption(std::size_t n, std::size_t p, std::size_t trials, std::uint64_t seed,
                   const std::string& out) {
    Rng rng(seed);
    InitStats st = assumption1_stats(n, p, trials, rng);

    DataTable t;
    t.columns = {"index", "threshold", "small_ball_prob"};
    t.integer_columns = {true, false, false};
    for (std::size_t k = 0; k < st.grid.size(); ++k)
        t.rows.push_back({static_cast<double>(k), st.grid[k], st.small_ball[k]});
    char note[192];
    std::snprintf(note, sizeof(note), "n=%zu p=%zu trials=%zu", st.n, st.p, st.trials);
    t.notes.push_back(note);
    std::snprintf(note, sizeof(note), "mean_theory=%.17g mc_mean=%.17g mc_se=%.17g",
                  st.mean_theory, st.mc_mean, st.mc_se);
    t.notes.push_back(note);
    std::snprintf(note, sizeof(note), "c2=%.17g c=%.17g c1=%.17g", st.c2, st.c, st.c1);
    t.notes.push_back(note);
    emit_dat(t, out);
    std::printf("norm statistics over %zu trials -> %s\n", trials, out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"circulant convolutional network toolbox"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "gradient-descent fit, trace to a .dat file");
    CommonNet tnet;
    double t_lr = 0.0, t_stop = -1.0, t_sigma = 0.0;
    std::size_t t_steps = 0, t_stride = 100;
    std::uint64_t t_seed = 1;
    std::string t_target = "auto", t_out, t_weights, t_init = "gaussian-np";
    add_net_flags(train, tnet);
    train->add_option("--lr", t_lr, "step size (0 = family default)");
    train->add_option("--steps", t_steps, "step budget (0 = family default)");
    train->add_option("--seed", t_seed, "initialization/data seed");
    train->add_option("--target", t_target, "step | phantom | file:PATH");
    train->add_option("--out", t_out, "trace output path")->required();
    train->add_option("--save-weights", t_weights, "also write final weights here");
    train->add_option("--record-stride", t_stride, "steps between trace rows");
    train->add_option("--stop-loss", t_stop, "stop early once loss <= this (-1 = never)");
    train->add_option("--init", t_init, "gaussian-np | gaussian-unit | custom");
    train->add_option("--sigma", t_sigma, "kernel sigma for --init custom");

    // landscape
    auto* land = app.add_subcommand("landscape", "loss over a random 2-plane around weights");
    double l_extent = 0.5;
    std::size_t l_res = 21;
    std::uint64_t l_seed = 1;
    std::string l_in, l_out, l_target = "auto", l_norm = "auto";
    land->add_option("--in", l_in, "weights file from train --save-weights")->required();
    land->add_option("--extent", l_extent, "half-width of the grid");
    land->add_option("--res", l_res, "grid resolution (odd, >= 3)");
    land->add_option("--seed", l_seed, "direction/data seed");
    land->add_option("--target", l_target, "step | phantom | file:PATH");
    land->add_option("--norm", l_norm, "override the file-implied norm mode");
    land->add_option("--out", l_out, "table output path")->required();

    // histogram
    auto* hist = app.add_subcommand("histogram", "gradient norms over fresh initializations");
    CommonNet hnet;
    std::size_t h_trials = 200, h_bins = 40;
    std::uint64_t h_seed = 1;
    std::string h_target = "auto", h_out;
    add_net_flags(hist, hnet);
    hist->add_option("--trials", h_trials, "number of initializations (>= 100)");
    hist->add_option("--bins", h_bins, "log-spaced bins");
    hist->add_option("--seed", h_seed, "master seed");
    hist->add_option("--target", h_target, "step | file:PATH");
    hist->add_option("--out", h_out, "table output path")->required();

    // theory
    auto* theory = app.add_subcommand("theory", "probes for the escape-time analysis");
    theory->require_subcommand(1);

    auto* esc = theory->add_subcommand("escape", "steps-in-ball trials at one depth");
    std::size_t e_n = 16, e_d = 4, e_kernel = 3, e_seeds = 20, e_max = 200000;
    double e_lr = 0.1, e_rscale = 1.0;
    std::uint64_t e_seed = 0;
    std::string e_out;
    esc->add_option("--n", e_n, "signal length");
    esc->add_option("--d", e_d, "depth");
    esc->add_option("--kernel", e_kernel, "kernel taps");
    esc->add_option("--lr", e_lr, "step size cap");
    esc->add_option("--radius-scale", e_rscale, "ball radius multiplier");
    esc->add_option("--seeds", e_seeds, "number of trials");
    esc->add_option("--max-steps", e_max, "per-trial step limit");
    esc->add_option("--seed", e_seed, "first trial seed");
    esc->add_option("--out", e_out, "table output path")->required();

    auto* bound = theory->add_subcommand("bound", "gradient/product bound on ball samples");
    std::size_t b_n = 16, b_d = 6, b_kernel = 3, b_samples = 100, b_centers = 10;
    double b_radius = 0.0;
    std::uint64_t b_seed = 1;
    std::string b_out;
    bound->add_option("--n", b_n, "signal length");
    bound->add_option("--d", b_d, "depth");
    bound->add_option("--kernel", b_kernel, "kernel taps");
    bound->add_option("--radius", b_radius, "ball radius (0 = 0.1 delta/sqrt(d))");
    bound->add_option("--samples", b_samples, "samples per center");
    bound->add_option("--centers", b_centers, "number of random centers");
    bound->add_option("--seed", b_seed, "master seed");
    bound->add_option("--out", b_out, "table output path")->required();

    auto* assume = theory->add_subcommand("assumption", "kernel-norm statistics at init");
    std::size_t a_n = 64, a_p = 3, a_trials = 100000;
    std::uint64_t a_seed = 1;
    std::string a_out;
    assume->add_option("--n", a_n, "signal length");
    assume->add_option("--p", a_p, "kernel taps");
    assume->add_option("--trials", a_trials, "Monte-Carlo trials (>= 10000)");
    assume->add_option("--seed", a_seed, "master seed");
    assume->add_option("--out", a_out, "table output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train))
            return run_train(tnet, t_lr, t_steps, t_seed, t_target, t_out, t_weights, t_stride,
                             t_stop, t_init, t_sigma);
        if (app.got_subcommand(land))
            return run_landscape(l_in, l_norm, l_extent, l_res, l_seed, l_target, l_out);
        if (app.got_subcommand(hist))
            return run_histogram(hnet, h_trials, h_bins, h_seed, h_target, h_out);
        if (theory->got_subcommand(esc))
            return run_escape(e_n, e_d, e_kernel, e_lr, e_rscale, e_seeds, e_max, e_seed, e_out);
        if (theory->got_subcommand(bound))
            return run_bound(b_n, b_d, b_kernel, b_radius, b_samples, b_centers, b_seed, b_out);
        if (theory->got_subcommand(assume))
            return run_assumption(a_n, a_p, a_trials, a_seed, a_out);
    } catch (const Diverged& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

// Acceptance suite: one check per criterion, each printing a pass/fail line
// with the observed value and runtime. Criteria 7 and 8 run the full training
// pipelines and dominate the wall time.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "dmm/io.hpp"
#include "dmm/metrics.hpp"
#include "dmm/targets.hpp"
#include "dmm/train.hpp"
#include "dmm/verify.hpp"
#include "support.hpp"

namespace {

using namespace dmm;

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool passed, const std::string& detail,
            double seconds) {
    std::printf("[%s] criterion %d: %s -- %s (%.1f s)\n", passed ? "PASS" : "FAIL", id,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
}

TEST(Acceptance, Criterion01FiniteStateTimeReversal) {
    Stopwatch timer;
    const VerifySuiteResult result = verify_reversal(50);
    const double seconds = timer.seconds();
    const bool in_budget = seconds < 10.0;
    char detail[160];
    std::snprintf(detail, sizeof(detail), "max marginal err %.2e (tol 1e-6), identity %.2e",
                  result.checks[0].observed, result.checks[1].observed);
    report(1, "time reversal on 50 random chains", result.all_passed() && in_budget, detail, seconds);
    EXPECT_TRUE(result.all_passed());
    EXPECT_LT(seconds, 10.0);
}

TEST(Acceptance, Criterion02ChangeOfMeasureConsistency) {
    Stopwatch timer;
    // Random 3-state chain; shat from a time-dependent potential so the
    // change-of-measure form applies.
    Rng rng(8002);
    RateMatrix rm(3);
    for (std::size_t from = 0; from < 3; ++from)
        for (std::size_t to = 0; to < 3; ++to)
            if (to != from) rm.set_rate(to, from, rng.uniform(0.3, 1.2));
    rm.rebuild_diagonal();
    const RateFamily family = constant_family(rm);
    Vec p0{0.5, 0.3, 0.2};
    const double horizon = 1.0;
    Vec pot_a(3), pot_b(3);
    for (auto& v : pot_a) v = rng.uniform(-0.8, 0.8);
    for (auto& v : pot_b) v = rng.uniform(-0.5, 0.5);
    const auto phi = [&](double t, std::size_t x) { return std::exp(pot_a[x] + pot_b[x] * t); };
    const ScoreProvider s_hat = [&](double t) {
        ScoreTable table(3);
        for (std::size_t x = 0; x < 3; ++x)
            for (std::size_t y = 0; y < 3; ++y)
                if (x != y) table.set(x, y, phi(t, y) / phi(t, x));
        return table;
    };
    const ScoreProvider truth = marginal_score_provider(family, DensityVector{p0, 0.0});

    // Route 1: deterministic quadrature of the Bregman form.
    const double quad = exact_path_kl(family, truth, s_hat, DensityVector{p0, 0.0}, horizon);

    // Route 2: the change-of-measure form eta L eta^{-1} + L log eta,
    // integrated over the same Gauss-Legendre nodes.
    const QuadratureRule rule = gauss_legendre(64, 0.0, horizon);
    double quad_doob = 0.0;
    {
        DensityVector p = DensityVector{p0, 0.0};
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            p = evolve_density(family, p, rule.nodes[i]);
            Vec eta(3), inv_eta(3), log_eta(3);
            for (std::size_t x = 0; x < 3; ++x) {
                eta[x] = phi(rule.nodes[i], x) / p.values[x];
                inv_eta[x] = 1.0 / eta[x];
                log_eta[x] = std::log(eta[x]);
            }
            const Vec l_inv = apply_generator(rm, inv_eta);
            const Vec l_log = apply_generator(rm, log_eta);
            double spatial = 0.0;
            for (std::size_t x = 0; x < 3; ++x)
                spatial += p.values[x] * (eta[x] * l_inv[x] + l_log[x]);
            quad_doob += rule.weights[i] * spatial;
        }
    }
    const double doob_gap = std::fabs(quad - quad_doob);

    // Route 3: Monte Carlo average of the integrand along forward paths.
    const int grid_pts = 400;
    std::vector<Vec> integrand(grid_pts + 1, Vec(3, 0.0));
    for (int k = 0; k <= grid_pts; ++k) {
        const double t = horizon * k / grid_pts;
        const ScoreTable st = truth(t);
        const ScoreTable sh = s_hat(t);
        for (std::size_t x = 0; x < 3; ++x) integrand[k][x] = kl_path_integrand(rm, st, sh, x);
    }
    const int paths = 100000;
    double sum = 0.0, sumsq = 0.0;
    Rng path_rng(8003);
    for (int i = 0; i < paths; ++i) {
        double u = path_rng.uniform();
        std::size_t x0 = 0;
        for (; x0 < 2; ++x0) {
            u -= p0[x0];
            if (u <= 0.0) break;
        }
        const JumpTrajectory traj = gillespie_sample(family, x0, horizon, path_rng);
        double integral = 0.0;
        for (int k = 0; k < grid_pts; ++k) {
            const double t_mid = horizon * (k + 0.5) / grid_pts;
            const std::size_t x = traj.state_at(t_mid);
            integral += 0.5 * (integrand[k][x] + integrand[k + 1][x]) * (horizon / grid_pts);
        }
        sum += integral;
        sumsq += integral * integral;
    }
    const double mc_mean = sum / paths;
    const double mc_sigma = std::sqrt((sumsq / paths - mc_mean * mc_mean) / paths);

    const double seconds = timer.seconds();
    const bool mc_ok = std::fabs(mc_mean - quad) <= 3.0 * mc_sigma + 1e-5;
    const bool doob_ok = doob_gap <= 1e-10 * std::max(1.0, quad);
    const bool in_budget = seconds < 60.0;
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "quad %.6f, MC %.6f +- %.6f (3 sigma), change-of-measure gap %.2e", quad, mc_mean,
                  3.0 * mc_sigma, doob_gap);
    report(2, "path KL: quadrature vs MC vs change-of-measure form", mc_ok && doob_ok && in_budget,
           detail, seconds);
    EXPECT_TRUE(mc_ok);
    EXPECT_TRUE(doob_ok);
    EXPECT_LT(seconds, 60.0);
}

TEST(Acceptance, Criterion03ErrorBoundInequality) {
    Stopwatch timer;
    const VerifySuiteResult result = verify_cor1(100);
    const double seconds = timer.seconds();
    char detail[160];
    std::snprintf(detail, sizeof(detail), "worst violation %.2e (tol 1e-8) on 100 instances",
                  result.checks[0].observed);
    report(3, "KL error bound never violated", result.all_passed() && seconds < 60.0, detail, seconds);
    EXPECT_TRUE(result.all_passed());
    EXPECT_LT(seconds, 60.0);
}

TEST(Acceptance, Criterion04LossNonnegativityAndMinimizer) {
    Stopwatch timer;
    const VerifySuiteResult result = verify_losses();
    const double seconds = timer.seconds();
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "Bregman slack >= %.1e, PSD form >= %.1e, truth plug-in <= %.1e",
                  result.checks[0].observed, result.checks[1].observed, result.checks[2].observed);
    report(4, "loss integrands nonnegative, truth is the minimizer", result.all_passed(), detail,
           seconds);
    EXPECT_TRUE(result.all_passed());
}

TEST(Acceptance, Criterion05GradientCorrectness) {
    Stopwatch timer;
    const VerifySuiteResult result = verify_gradcheck();
    const double seconds = timer.seconds();
    char detail[160];
    std::snprintf(detail, sizeof(detail), "max relative error vs central differences %.2e (tol 1e-4)",
                  result.checks[0].observed);
    report(5, "reverse-mode gradients of every loss", result.all_passed() && seconds < 30.0, detail,
           seconds);
    EXPECT_TRUE(result.all_passed());
    EXPECT_LT(seconds, 30.0);
}

TEST(Acceptance, Criterion06EulerMaruyamaWeakOrder) {
    Stopwatch timer;
    using testsupport::EmDensityGrid;
    using testsupport::OuMixture1d;
    const OuMixture1d mix{{0.7, 0.3}, {2.0, 4.0}, {0.25, 0.64}};
    const double horizon = 2.0;
    const auto drift = [&](double u, double y) { return 0.5 * y + mix.score(horizon - u, y); };
    const EmDensityGrid grid;
    std::vector<double> q0(grid.points);
    const double h = (grid.hi - grid.lo) / static_cast<double>(grid.points - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < grid.points; ++i) {
        q0[i] = mix.density(horizon, grid.lo + h * i);
        total += q0[i] * h;
    }
    for (double& v : q0) v /= total;
    const std::vector<double> kappas{0.1, 0.05, 0.025};
    std::vector<double> errs;
    for (double kappa : kappas)
        errs.push_back(std::fabs(grid.terminal_moments(q0, drift, horizon, kappa).mean - mix.mean0()));
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < kappas.size(); ++i) {
        sx += std::log(kappas[i]);
        sy += std::log(errs[i]);
        sxx += std::log(kappas[i]) * std::log(kappas[i]);
        sxy += std::log(kappas[i]) * std::log(errs[i]);
    }
    const double slope = (3.0 * sxy - sx * sy) / (3.0 * sxx - sx * sx);
    const double seconds = timer.seconds();
    const bool ok = std::fabs(slope - 1.0) <= 0.3;
    char detail[160];
    std::snprintf(detail, sizeof(detail), "terminal-mean errors %.2e/%.2e/%.2e, slope %.3f", errs[0],
                  errs[1], errs[2], slope);
    report(6, "Euler-Maruyama weak order r = 1", ok, detail, seconds);
    EXPECT_NEAR(slope, 1.0, 0.3);
}

TEST(Acceptance, Criterion07GbmExperiment) {
    Stopwatch timer;
    Rng init_rng(7ULL ^ 0x9e3779b97f4a7c15ULL);
    GbmEngine engine = GbmEngine::make(GbmSpec::make_1d(1.0), 4.0, 128, 5, init_rng);
    TrainConfig config;
    config.epochs = 8000;
    config.batch = 256;
    config.horizon = 4.0;
    config.t_min = 1e-3;
    config.learning_rate = 1e-3;
    config.seed = 7;

    Rng data_rng(7ULL ^ 0x5177df9a12e1b2c4ULL);
    const auto dataset = sample_target(TargetSpec::by_name("gmm1d-abs"), 8192, data_rng);
    train(engine, dataset, config);

    const TimeGrid grid = TimeGrid::from_kappa(4.0, 0.02);
    Rng infer_rng(7);
    const auto batch = infer(engine, grid, 10000, {grid.horizon}, infer_rng);
    const auto& terminal = batch.snapshots.back();
    std::size_t positive = 0;
    for (const auto& x : terminal)
        if (x[0] > 0.0) ++positive;
    Rng ref_rng(7001);
    const auto reference = sample_target(TargetSpec::by_name("gmm1d-abs"), 10000, ref_rng);
    const double ed = energy_distance(terminal, reference);
    const double seconds = timer.seconds();
    const bool ok = ed <= 0.03 && positive == terminal.size() && seconds <= 900.0;
    char detail[160];
    std::snprintf(detail, sizeof(detail), "energy distance %.4f (tol 0.03), positivity %zu/%zu", ed,
                  positive, terminal.size());
    report(7, "1-D GBM experiment", ok, detail, seconds);
    EXPECT_LE(ed, 0.03);
    EXPECT_EQ(positive, terminal.size());
    EXPECT_LE(seconds, 900.0);
}

TEST(Acceptance, Criterion08TorusJumpExperiment) {
    Stopwatch timer;
    const TorusJumpSpec spec;
    Rng init_rng(11ULL ^ 0x9e3779b97f4a7c15ULL);
    TorusJumpEngine engine = TorusJumpEngine::make(spec, 4.0, 12, 128, 5, init_rng);
    engine.kernel_mc = 8;
    TrainConfig config;
    config.epochs = 6000;
    config.batch = 128;
    config.horizon = 4.0;
    config.t_min = 1e-3;
    config.learning_rate = 1e-3;
    config.seed = 11;

    Rng data_rng(11ULL ^ 0x5177df9a12e1b2c4ULL);
    const auto dataset = sample_target(TargetSpec::by_name("moons"), 4096, data_rng);

    // Forward mixing: exact grid TV from uniform at the horizon.
    const TorusCharFn cf = dataset_charfn(spec, dataset);
    const double forward_tv = grid_tv_from_uniform(forward_marginal_grid(spec, cf, 4.0, &dataset));

    train(engine, dataset, config);

    const TimeGrid grid = TimeGrid::from_kappa(4.0, 0.02);
    Rng infer_rng(11);
    const auto batch = infer(engine, grid, 2048, {grid.horizon}, infer_rng);
    Rng ref_rng(8004);
    const auto reference = sample_target(TargetSpec::by_name("moons"), 65536, ref_rng);
    const double tv = histogram_tv(batch.snapshots.back(), reference, 32, 0.0, 1.0);
    const double seconds = timer.seconds();
    const bool ok = tv <= 0.15 && forward_tv <= 0.05 && seconds <= 1800.0;
    char detail[160];
    std::snprintf(detail, sizeof(detail), "sample TV %.4f (tol 0.15), forward TV %.4f (tol 0.05)",
                  tv, forward_tv);
    report(8, "torus jump experiment (moons)", ok, detail, seconds);
    EXPECT_LE(tv, 0.15);
    EXPECT_LE(forward_tv, 0.05);
    EXPECT_LE(seconds, 1800.0);
}

TEST(Acceptance, Criterion09FftQuadrature) {
    Stopwatch timer;
    const VerifySuiteResult result = verify_quadrature(20);
    const double seconds = timer.seconds();
    char detail[160];
    std::snprintf(detail, sizeof(detail), "FFT-vs-Riemann max rel %.2e (tol 1e-6), reuse gap %.1e",
                  result.checks[0].observed, result.checks[1].observed);
    report(9, "intensity-integral quadrature and reuse", result.all_passed(), detail, seconds);
    EXPECT_TRUE(result.all_passed());
}

TEST(Acceptance, Criterion10Reproducibility) {
    Stopwatch timer;
    const auto run_once = [] {
        Rng init_rng(3ULL ^ 0x9e3779b97f4a7c15ULL);
        FiniteStateEngine engine =
            FiniteStateEngine::make(uniform_chain(DiscreteSpace{1, 3, false}), 2.0, 16, 3, init_rng);
        TrainConfig config;
        config.epochs = 200;
        config.batch = 64;
        config.horizon = 2.0;
        config.t_min = 0.01;
        config.learning_rate = 3e-3;
        config.seed = 3;
        Rng data_rng(3ULL ^ 0x5177df9a12e1b2c4ULL);
        TargetSpec target = TargetSpec::by_name("finite-random");
        std::vector<std::size_t> dataset;
        for (int i = 0; i < 1024; ++i)
            dataset.push_back(static_cast<std::size_t>(sample_target_point(target, data_rng)[0]));
        const TrainResult result = train(engine, dataset, config);
        const TimeGrid grid = TimeGrid::from_kappa(2.0, 0.05);
        Rng infer_rng(3);
        const auto batch = infer(engine, grid, 500, {grid.horizon}, infer_rng);
        return std::make_pair(loss_history_csv(result.loss_history),
                              state_samples_csv(batch.times, batch.snapshots));
    };
    const auto a = run_once();
    const auto b = run_once();
    const double seconds = timer.seconds();
    const bool ok = a.first == b.first && a.second == b.second;
    report(10, "byte-identical loss and sample artifacts from (config, seed)", ok,
           ok ? "loss.csv and samples.csv identical across reruns" : "artifacts differ", seconds);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}

}  // namespace

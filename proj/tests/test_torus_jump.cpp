// Torus pure-jump model: wrapped kernel, compound-Poisson forward law,
// Fourier conditionals, FFT intensity integrals and their reuse, and the
// rejection-sampled backward stepper.

#include <gtest/gtest.h>

#include <cmath>

#include "dmm/metrics.hpp"
#include "dmm/rng.hpp"
#include "dmm/targets.hpp"
#include "dmm/torus_jump.hpp"

namespace {

using namespace dmm;

// ----------------------------------------------------------------------------
// Kernel
// ----------------------------------------------------------------------------

TEST(TorusKernel, MassAndSpectrum) {
    const TorusJumpSpec spec;
    EXPECT_DOUBLE_EQ(spec.kernel_hat(0, 0), spec.mass);
    EXPECT_DOUBLE_EQ(spec.kernel_hat(3, -2), spec.kernel_hat(-3, 2));
    EXPECT_DOUBLE_EQ(spec.kernel_hat(3, -2), spec.kernel_hat(2, 3));
    // Grid Riemann sum of the wrapped kernel recovers the mass to spectral
    // accuracy.
    const auto grid = spec.kernel_grid();
    double mass = 0.0;
    for (double v : grid) mass += v;
    mass /= static_cast<double>(grid.size());
    EXPECT_NEAR(mass, spec.mass, 1e-10);
    for (double v : grid) EXPECT_GE(v, 0.0);
}

TEST(TorusKernel, GridDftMatchesSpectralCoefficients) {
    const TorusJumpSpec spec;
    const std::size_t n = spec.grid_n;
    CVec a(n * n);
    const auto grid = spec.kernel_grid();
    for (std::size_t i = 0; i < n * n; ++i) a[i] = Complex(grid[i], 0.0);
    fft2_inplace(a, n, -1);
    for (int k1 : {0, 1, 5, 13})
        for (int k2 : {0, 2, 7}) {
            const double got = a[k1 * n + k2].real() / static_cast<double>(n * n);
            EXPECT_NEAR(got, spec.kernel_hat(k1, k2), 1e-10);
        }
}

// ----------------------------------------------------------------------------
// Forward sampling
// ----------------------------------------------------------------------------

TEST(ForwardJump, TimeZeroIsIdentity) {
    const TorusJumpSpec spec;
    Rng rng(201);
    const Vec x0{0.3, 0.8};
    const Vec x = forward_jump_sample(spec, x0, 0.0, rng);
    EXPECT_DOUBLE_EQ(x[0], x0[0]);
    EXPECT_DOUBLE_EQ(x[1], x0[1]);
}

TEST(ForwardJump, PoissonCountMatchesRate) {
    const TorusJumpSpec spec;
    Rng rng(202);
    const double t = 1.3;
    const int runs = 100000;
    double total = 0.0;
    for (int i = 0; i < runs; ++i) total += static_cast<double>(rng.poisson(t * spec.mass));
    const double mean = total / runs;
    const double sigma = std::sqrt(t * spec.mass / runs);
    EXPECT_NEAR(mean, t * spec.mass, 3.0 * sigma);
}

TEST(ForwardJump, LargeTimeIsUniformByChiSquare) {
    const TorusJumpSpec spec;
    Rng rng(203);
    const int runs = 100000;
    const std::size_t bins = 32;
    std::vector<int> counts(bins * bins, 0);
    for (int i = 0; i < runs; ++i) {
        const Vec x = forward_jump_sample(spec, Vec{0.5, 0.5}, 12.0, rng);
        const std::size_t b1 = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(x[0] * bins));
        const std::size_t b2 = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(x[1] * bins));
        ++counts[b1 * bins + b2];
    }
    const double expected = static_cast<double>(runs) / (bins * bins);
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 1% critical value of chi^2 with 1023 dof (Wilson-Hilferty).
    EXPECT_LT(chi2, 1131.2);
}

// ----------------------------------------------------------------------------
// Conditional density
// ----------------------------------------------------------------------------

TEST(TorusConditionalDensity, LargeTimeIsFlat) {
    const TorusJumpSpec spec;
    const TorusConditional law = torus_conditional_density(spec, Vec{0.2, 0.6}, 50.0);
    for (double v : law.grid) EXPECT_NEAR(v, 1.0, 1e-9);
    EXPECT_NEAR(law.integral_on_grid(), 1.0, 1e-9);
}

TEST(TorusConditionalDensity, MollifiedLawIsAProbabilityDensity) {
    const TorusJumpSpec spec;
    for (double t : {0.01, 0.2, 1.0, 4.0}) {
        const TorusConditional law = torus_conditional_density(spec, Vec{0.4, 0.9}, t);
        EXPECT_DOUBLE_EQ(law.atom_mass, std::exp(-t * spec.mass));
        EXPECT_NEAR(law.integral_on_grid(), 1.0, 1e-9);
        EXPECT_LE(law.clamped_mass, 1e-8);
        for (double v : law.grid) EXPECT_GT(v, 0.0);
    }
}

TEST(TorusConditionalDensity, TimeZeroIsFlaggedDelta) {
    const TorusJumpSpec spec;
    const TorusConditional law = torus_conditional_density(spec, Vec{0.2, 0.6}, 0.0);
    EXPECT_TRUE(law.is_delta);
    EXPECT_THROW(law.evaluate(Vec{0.2, 0.6}), std::runtime_error);
}

TEST(TorusConditionalDensity, SmallTimeMatchesTwoTermSeries) {
    // At t = 0.01 the law is the no-jump atom e^{-tM} plus, to second order,
    // the one- and two-jump kernel convolutions. Mode space: the continuous
    // coefficients e^{-tM}(e^{t lhat} - 1) against e^{-tM}(t lhat + (t lhat)^2/2),
    // synthesized on the same truncated mode set.
    const TorusJumpSpec spec;
    const double t = 0.01;
    const Vec x0{0.5, 0.5};
    const TorusConditional law = torus_conditional_density(spec, x0, t);
    EXPECT_DOUBLE_EQ(law.atom_mass, std::exp(-t * spec.mass));
    const std::size_t n = spec.grid_n;
    const int k_max = law.cutoff;
    const double pi = 3.14159265358979323846;
    CVec spectral(n * n, Complex(0.0, 0.0));
    for (int k1 = -k_max; k1 <= k_max; ++k1)
        for (int k2 = -k_max; k2 <= k_max; ++k2) {
            const double tl = t * spec.kernel_hat(k1, k2);
            const double series = std::exp(-t * spec.mass) * (tl + 0.5 * tl * tl);
            const double phase = -2.0 * pi * (k1 * x0[0] + k2 * x0[1]);
            const std::size_t i = static_cast<std::size_t>((k1 + static_cast<int>(n)) % static_cast<int>(n));
            const std::size_t j = static_cast<std::size_t>((k2 + static_cast<int>(n)) % static_cast<int>(n));
            spectral[i * n + j] = series * Complex(std::cos(phase), std::sin(phase));
        }
    fft2_inplace(spectral, n, +1);
    // Compare the continuous part (grid minus the atom spike) to the series.
    double peak = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const Vec x{static_cast<double>(i) / n, static_cast<double>(j) / n};
            const double continuous = law.grid[i * n + j] - law.atom_spike(x);
            const double series = spectral[i * n + j].real();
            peak = std::max(peak, series);
            worst = std::max(worst, std::fabs(continuous - series));
        }
    EXPECT_LT(worst / peak, 1e-4);
    // Single-jump dominance: the continuous mass is ~ tM at this time.
    EXPECT_NEAR(law.integral_on_grid(), 1.0, 1e-9);
}

TEST(TorusConditionalDensity, ClampGuardTripsOnUnderresolvedSpectrum) {
    // A sharp kernel truncated to a handful of modes rings negative; the
    // strict build must refuse it and suggest a larger cutoff.
    TorusJumpSpec bad;
    bad.sigma_j = 0.04;
    bad.mode_cutoff = 2;
    EXPECT_THROW(torus_conditional_density(bad, Vec{0.5, 0.5}, 0.3), std::runtime_error);
}

TEST(TorusConditionalDensity, EvaluateAgreesWithGridNodes) {
    const TorusJumpSpec spec;
    const TorusConditional law = torus_conditional_density(spec, Vec{0.31, 0.72}, 0.5);
    const std::size_t n = spec.grid_n;
    for (std::size_t i = 0; i < n; i += 7)
        for (std::size_t j = 0; j < n; j += 11) {
            const Vec x{static_cast<double>(i) / n, static_cast<double>(j) / n};
            EXPECT_NEAR(law.evaluate(x), law.grid[i * n + j], 1e-9);
        }
}

TEST(TorusConditionalDensity, MatchesMonteCarloHistogram) {
    // The no-jump fraction checks the atom mass exactly; the jumped samples
    // check the continuous part bin by bin.
    const TorusJumpSpec spec;
    const Vec x0{0.25, 0.5};
    const double t = 0.4;
    const TorusConditional law = torus_conditional_density(spec, x0, t);
    Rng rng(204);
    const int runs = 100000;
    const std::size_t bins = 16;
    std::vector<int> counts(bins * bins, 0);
    int atom_hits = 0;
    for (int i = 0; i < runs; ++i) {
        const Vec x = forward_jump_sample(spec, x0, t, rng);
        if (x[0] == x0[0] && x[1] == x0[1]) {
            ++atom_hits;
            continue;
        }
        const std::size_t b1 = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(x[0] * bins));
        const std::size_t b2 = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(x[1] * bins));
        ++counts[b1 * bins + b2];
    }
    const double atom_sigma = std::sqrt(law.atom_mass * (1.0 - law.atom_mass) * runs);
    EXPECT_NEAR(atom_hits, runs * law.atom_mass, 3.0 * atom_sigma);

    // Expected bin masses by midpoint quadrature of the continuous density
    // (8x8 points per bin).
    const std::size_t sub = 8;
    int beyond3 = 0;
    for (std::size_t b1 = 0; b1 < bins; ++b1)
        for (std::size_t b2 = 0; b2 < bins; ++b2) {
            double mass = 0.0;
            for (std::size_t i = 0; i < sub; ++i)
                for (std::size_t j = 0; j < sub; ++j) {
                    const Vec x{(b1 + (i + 0.5) / sub) / bins, (b2 + (j + 0.5) / sub) / bins};
                    mass += law.evaluate(x) - law.atom_spike(x);
                }
            mass /= static_cast<double>(bins * bins * sub * sub);
            const double sigma = std::sqrt(mass * (1.0 - mass) * runs) + 2.0;
            const double z = std::fabs(counts[b1 * bins + b2] - runs * mass) / sigma;
            if (z > 3.0) ++beyond3;
            EXPECT_LT(z, 4.0) << "bin " << b1 << "," << b2;
        }
    // With 256 bins a couple of 3 sigma excursions are expected noise.
    EXPECT_LE(beyond3, 2);
}

TEST(ForwardMarginalGrid, SingletonDatasetMatchesConditional) {
    const TorusJumpSpec spec;
    const Vec x0{0.4, 0.15};
    const double t = 0.7;
    const std::vector<Vec> data{x0};
    const TorusCharFn cf = dataset_charfn(spec, data);
    const auto grid = forward_marginal_grid(spec, cf, t, &data);
    const TorusConditional law = torus_conditional_density(spec, x0, t);
    for (std::size_t i = 0; i < grid.size(); ++i)
        EXPECT_NEAR(grid[i], law.grid[i], 1e-8 * std::max(1.0, law.grid[i]));
}

TEST(ForwardMarginalGrid, AtomDepositionConservesMass) {
    const TorusJumpSpec spec;
    Rng rng(206);
    const std::vector<Vec> data{{0.21, 0.37}, {0.81, 0.59}, {0.5, 0.04}};
    const TorusCharFn cf = dataset_charfn(spec, data);
    for (double t : {0.3, 1.0}) {
        const auto grid = forward_marginal_grid(spec, cf, t, &data);
        double mass = 0.0;
        for (double v : grid) mass += v;
        mass /= static_cast<double>(grid.size());
        EXPECT_NEAR(mass, 1.0, 1e-9);
    }
}

TEST(ForwardMarginalGrid, MoonsMixesToUniform) {
    const TorusJumpSpec spec;
    Rng rng(205);
    const auto data = sample_target(TargetSpec::by_name("moons"), 2048, rng);
    const TorusCharFn cf = dataset_charfn(spec, data);
    const double tv1 = grid_tv_from_uniform(forward_marginal_grid(spec, cf, 1.0, &data));
    const double tv2 = grid_tv_from_uniform(forward_marginal_grid(spec, cf, 2.0, &data));
    const double tv4 = grid_tv_from_uniform(forward_marginal_grid(spec, cf, 4.0, &data));
    EXPECT_GT(tv1, tv2);
    EXPECT_GT(tv2, tv4);
    EXPECT_LE(tv4, 0.05);
}

// ----------------------------------------------------------------------------
// Score-matching loss
// ----------------------------------------------------------------------------

TEST(JumpSmLoss, UnitScoreGivesKernelMassInMixedLimit) {
    // shat == 1 makes the integrand lambda itself; at large t the continuous
    // component carries all the mass and the loss is exactly M.
    const TorusJumpSpec spec;
    const JumpScoreEval ones{[](double, const Vec&) { return 0.0; }};
    Rng rng(211);
    const std::vector<Vec> dataset{{0.2, 0.3}, {0.7, 0.6}};
    const double loss =
        jump_sm_loss(spec, ones, dataset, [](Rng&) { return 40.0; }, 64, 8, rng);
    EXPECT_NEAR(loss, spec.mass, 1e-12);
}

TEST(JumpSmLoss, BregmanIntegrandBoundedBelow) {
    // a - b log a >= b - b log b for a, b > 0.
    Rng rng(212);
    for (int i = 0; i < 200; ++i) {
        const double a = std::exp(rng.uniform(-3, 3));
        const double b = std::exp(rng.uniform(-3, 3));
        EXPECT_GE(a - b * std::log(a), b - b * std::log(b) - 1e-12);
    }
}

TEST(JumpSmLoss, TruthMatchesQuadrature) {
    // Single data point, fixed time, shat = mollified conditional ratio: each
    // inner integrand sits at its pointwise Bregman minimum b - b log b, and
    // the loss reduces to
    //   int p(x) int (b - b log b) lambda(y - x) dy dx,   b = p(y)/p(x),
    // evaluated here by grid quadrature.
    const TorusJumpSpec spec;
    const Vec x0{0.35, 0.55};
    const double t = 0.8;
    const TorusConditional law = torus_conditional_density(spec, x0, t);
    const std::size_t n = spec.grid_n;

    const JumpScoreEval truth{
        [&](double, const Vec& x) { return std::log(law.evaluate_grid(x)); }};

    const auto kernel = spec.kernel_grid();
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double px = law.grid[i * n + j];
            double inner = 0.0;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b2 = 0; b2 < n; ++b2) {
                    const double lam = kernel[((a - i + n) % n) * n + ((b2 - j + n) % n)];
                    const double b = law.grid[a * n + b2] / px;
                    inner += (b - b * std::log(b)) * lam;
                }
            quad += px * inner / static_cast<double>(n * n);
        }
    quad /= static_cast<double>(n * n);

    // Monte Carlo with per-sample variance for a correct 3 sigma band.
    Rng rng(213);
    const std::size_t batch = 4000, kmc = 16;
    const auto samples = sample_jump_loss_batch(
        spec, {x0}, [&](Rng&) { return t; }, batch, kmc, rng);
    double sum = 0.0, sumsq = 0.0;
    for (const auto& s : samples) {
        const double value = jump_loss_sample_value(spec, truth, s);
        sum += value;
        sumsq += value * value;
    }
    const double mean = sum / batch;
    const double sigma = std::sqrt((sumsq / batch - mean * mean) / batch);
    EXPECT_NEAR(mean, quad, 3.0 * sigma + 0.01);
}

TEST(JumpSmLoss, GradientSmallAtTruthConfiguration) {
    // Directional derivatives of the MC loss along coarse tabular bump
    // directions, taken at the analytic truth potential g = log p: they must
    // be an order of magnitude below the same probes at a perturbed potential.
    const TorusJumpSpec spec;
    const Vec x0{0.5, 0.5};
    const double t = 0.6;
    const TorusConditional law = torus_conditional_density(spec, x0, t);
    const std::size_t m = 8;

    // Potential = analytic truth + bilinear table offset.
    const auto potential_of = [&](const std::vector<double>& tab) {
        return JumpScoreEval{[&law, tab, m](double, const Vec& x) {
            return std::log(law.evaluate(x)) + TorusConditional::bilinear(tab, m, x[0], x[1]);
        }};
    };
    const auto loss_at = [&](const std::vector<double>& tab, std::uint64_t seed) {
        Rng rng(seed);
        return jump_sm_loss(spec, potential_of(tab), {x0}, [&](Rng&) { return t; }, 1500, 8, rng);
    };
    const auto grad_norm = [&](const std::vector<double>& base) {
        double norm = 0.0;
        const double eps = 1e-4;
        for (std::size_t e = 0; e < m * m; e += 7) {  // probe a spread of entries
            auto up = base, down = base;
            up[e] += eps;
            down[e] -= eps;
            // Common random numbers make the difference nearly noise-free.
            const double g = (loss_at(up, 999) - loss_at(down, 999)) / (2.0 * eps);
            norm += g * g;
        }
        return std::sqrt(norm);
    };

    const std::vector<double> truth_table(m * m, 0.0);
    std::vector<double> perturbed(m * m);
    Rng prng(214);
    for (auto& v : perturbed) v = prng.uniform(-0.5, 0.5);
    EXPECT_LT(grad_norm(truth_table), 0.08 * grad_norm(perturbed));
}

// ----------------------------------------------------------------------------
// Intensity integral
// ----------------------------------------------------------------------------

TEST(IntensityIntegral, UnitScoreGivesMass) {
    const TorusJumpSpec spec;
    const JumpScoreEval ones{[](double, const Vec&) { return 0.0; }};
    for (const Vec& x : {Vec{0.0, 0.0}, Vec{0.37, 0.81}})
        EXPECT_NEAR(backward_intensity_integral(spec, ones, 1.0, x), spec.mass, 1e-9);
}

TEST(IntensityIntegral, FirstOrderPerturbation) {
    // g = eps cos(2 pi y1): J(x) = M + eps M (rho - 1) cos(2 pi x1) + O(eps^2)
    // with rho = e^{-2 pi^2 sigma^2}.
    const TorusJumpSpec spec;
    const double pi = 3.14159265358979323846;
    const double rho = std::exp(-2.0 * pi * pi * spec.sigma_j * spec.sigma_j);
    const double eps = 1e-3;
    const JumpScoreEval s{[=](double, const Vec& y) { return eps * std::cos(2.0 * pi * y[0]); }};
    const IntensityField field = build_intensity_field(spec, s, 0.5);
    for (double x1 : {0.0, 0.2, 0.55}) {
        const Vec x{x1, 0.3};
        const double expect = spec.mass * (1.0 + eps * (rho - 1.0) * std::cos(2.0 * pi * x1));
        EXPECT_NEAR(field.j_at(x), expect, 20.0 * eps * eps * spec.mass);
    }
}

TEST(IntensityIntegral, FftMatchesBruteForceRiemann) {
    const TorusJumpSpec spec;
    Rng rng(221);
    const std::size_t n = spec.grid_n;
    const auto kernel = spec.kernel_grid();
    for (int rep = 0; rep < 3; ++rep) {
        // Random smooth-ish tabular potential.
        std::vector<double> table(n * n);
        const double a1 = rng.uniform(-1, 1), a2 = rng.uniform(-1, 1), a3 = rng.uniform(-1, 1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double u = static_cast<double>(i) / n, v = static_cast<double>(j) / n;
                const double pi = 3.14159265358979323846;
                table[i * n + j] = a1 * std::cos(2 * pi * u) + a2 * std::sin(2 * pi * v) +
                                   a3 * std::cos(2 * pi * (u + v));
            }
        const JumpScoreEval s{[&table, n](double, const Vec& x) {
            return TorusConditional::bilinear(table, n, x[0], x[1]);
        }};
        const IntensityField field = build_intensity_field(spec, s, 0.0);
        for (std::size_t probe = 0; probe < 5; ++probe) {
            const std::size_t mi = rng.uniform_index(n), mj = rng.uniform_index(n);
            double riemann = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    riemann += field.exp_g[i * n + j] * kernel[((i - mi + n) % n) * n + ((j - mj + n) % n)];
            riemann /= static_cast<double>(n * n);
            riemann /= field.exp_g[mi * n + mj];
            const Vec x{static_cast<double>(mi) / n, static_cast<double>(mj) / n};
            const double fft_value = field.j_at(x);
            EXPECT_NEAR(fft_value, riemann, 1e-6 * std::fabs(riemann));
        }
    }
}

TEST(IntensityReuse, FieldReadsAreExactlyConsistent) {
    const TorusJumpSpec spec;
    const double pi = 3.14159265358979323846;
    const JumpScoreEval s{[=](double, const Vec& y) {
        return 0.4 * std::cos(2 * pi * y[0]) + 0.2 * std::sin(2 * pi * y[1]);
    }};
    const IntensityField field = build_intensity_field(spec, s, 0.7, 42);
    const Vec y_ref{0.25, 0.5};
    const double j_ref = field.j_at(y_ref);
    EXPECT_DOUBLE_EQ(reference_reuse_j(field, 0.7, 42, y_ref), j_ref);
    // Any grid point: the reuse path and the direct path read the same field.
    for (const Vec& x : {Vec{0.0, 0.0}, Vec{0.125, 0.75}, Vec{0.625, 0.3125}})
        EXPECT_DOUBLE_EQ(reference_reuse_j(field, 0.7, 42, x), field.j_at(x));
    EXPECT_THROW(reference_reuse_j(field, 0.8, 42, y_ref), std::runtime_error);
    EXPECT_THROW(reference_reuse_j(field, 0.7, 41, y_ref), std::runtime_error);
}

TEST(IntensityReuse, UnitScoreGivesMassEverywhere) {
    const TorusJumpSpec spec;
    const JumpScoreEval ones{[](double, const Vec&) { return 0.0; }};
    const IntensityField field = build_intensity_field(spec, ones, 0.0, 7);
    Rng rng(222);
    for (int i = 0; i < 20; ++i) {
        const Vec x{rng.uniform(), rng.uniform()};
        EXPECT_NEAR(reference_reuse_j(field, 0.0, 7, x), spec.mass, 1e-9);
    }
}

// ----------------------------------------------------------------------------
// Backward stepping
// ----------------------------------------------------------------------------

TEST(BackwardJumpStep, UnitScoreReducesToForwardStep) {
    const TorusJumpSpec spec;
    const JumpScoreEval ones{[](double, const Vec&) { return 0.0; }};
    const IntensityField field = build_intensity_field(spec, ones, 1.0);
    Rng rng(231);
    const double kappa = 0.4;
    const int runs = 50000;
    JumpStepStats stats;
    for (int i = 0; i < runs; ++i)
        backward_jump_step(spec, ones, field, Vec{0.5, 0.5}, 1.0, kappa, rng, 1.1, &stats);
    // Jump count ~ Poisson(kappa M).
    const double mean_jumps = static_cast<double>(stats.jumps) / runs;
    const double sigma = std::sqrt(kappa * spec.mass / runs);
    EXPECT_NEAR(mean_jumps, kappa * spec.mass, 3.0 * sigma);
    // Unit score against the 1.1 envelope accepts 1/1.1 of proposals.
    const double acc_rate = static_cast<double>(stats.accepted) / static_cast<double>(stats.proposals);
    EXPECT_NEAR(acc_rate, 1.0 / 1.1, 0.01);
}

TEST(BackwardJumpStep, AcceptedJumpsFollowTiltedKernel) {
    // One-mode potential: accepted locations must histogram like
    // e^{g(y)} lambda(y - y_cur) (normalized).
    const TorusJumpSpec spec;
    const double pi = 3.14159265358979323846;
    const JumpScoreEval s{[=](double, const Vec& y) {
        return -2.0 * std::cos(2 * pi * (y[0] - 0.5));  // favors y1 ~ 0.5
    }};
    const IntensityField field = build_intensity_field(spec, s, 0.3);
    const Vec y_cur{0.3, 0.7};
    Rng rng(232);
    const int n_jumps = 100000;
    const std::size_t bins = 8;
    std::vector<int> counts(bins * bins, 0);
    for (int i = 0; i < n_jumps; ++i) {
        const Vec y = rejection_sample_jump(spec, s, field, y_cur, 0.3, rng);
        const std::size_t b1 = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(y[0] * bins));
        const std::size_t b2 = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(y[1] * bins));
        ++counts[b1 * bins + b2];
    }
    // Exact bin masses of the tilted kernel by midpoint quadrature.
    const std::size_t sub = 16;
    std::vector<double> masses(bins * bins, 0.0);
    double total = 0.0;
    for (std::size_t b1 = 0; b1 < bins; ++b1)
        for (std::size_t b2 = 0; b2 < bins; ++b2) {
            double mass = 0.0;
            for (std::size_t i = 0; i < sub; ++i)
                for (std::size_t j = 0; j < sub; ++j) {
                    const Vec y{(b1 + (i + 0.5) / sub) / bins, (b2 + (j + 0.5) / sub) / bins};
                    mass += std::exp(s.potential(0.3, y)) *
                            spec.kernel(y[0] - y_cur[0], y[1] - y_cur[1]);
                }
            masses[b1 * bins + b2] = mass;
            total += mass;
        }
    int beyond3 = 0;
    for (std::size_t b = 0; b < bins * bins; ++b) {
        const double mass = masses[b] / total;
        const double sigma = std::sqrt(mass * (1.0 - mass) * n_jumps) + 2.0;
        const double z = std::fabs(counts[b] - n_jumps * mass) / sigma;
        if (z > 3.0) ++beyond3;
        EXPECT_LT(z, 4.0) << "bin " << b;
    }
    EXPECT_LE(beyond3, 1);
}

TEST(BackwardJumpStep, NoJumpProbabilityExpandsLinearly) {
    const TorusJumpSpec spec;
    const double pi = 3.14159265358979323846;
    const JumpScoreEval s{
        [=](double, const Vec& y) { return 0.5 * std::sin(2 * pi * y[1]); }};
    const IntensityField field = build_intensity_field(spec, s, 0.2);
    const Vec y{0.4, 0.6};
    const double j_rate = field.j_at(y);
    Rng rng(233);
    for (double kappa : {1e-2, 5e-3, 2.5e-3}) {
        const int runs = 200000;
        int no_jump = 0;
        for (int i = 0; i < runs; ++i) {
            JumpStepStats stats;
            backward_jump_step(spec, s, field, y, 0.2, kappa, rng, 1.1, &stats);
            if (stats.jumps == 0) ++no_jump;
        }
        const double p_hat = static_cast<double>(no_jump) / runs;
        const double linear = 1.0 - kappa * j_rate;
        const double sigma = std::sqrt(p_hat * (1.0 - p_hat) / runs);
        // o(kappa) remainder is kappa^2 J^2 / 2.
        EXPECT_NEAR(p_hat, linear, 3.0 * sigma + kappa * kappa * j_rate * j_rate);
    }
}

TEST(BackwardJumpStep, ExactPotentialTransportsUniformTowardTarget) {
    // Backward run driven by the true potential g_t = log pbar_t (mixture of
    // conditionals over a moons dataset): the sample histogram's TV distance
    // to the target decreases along the run.
    const TorusJumpSpec spec;
    Rng rng(234);
    const auto data = sample_target(TargetSpec::by_name("moons"), 2000, rng);
    const TorusCharFn cf = dataset_charfn(spec, data);
    const double horizon = 4.0;
    const double kappa = 0.02;
    // The exact potential turns into near-atoms as t -> 0, which the frozen
    // rejection sampler cannot follow; stop shortly before.
    const double t_stop = 0.05;
    const int steps = static_cast<int>(std::round((horizon - t_stop) / kappa));

    const int n_samples = 4096;
    std::vector<Vec> walkers(n_samples);
    for (auto& w : walkers) w = Vec{rng.uniform(), rng.uniform()};

    const auto reference = sample_target(TargetSpec::by_name("moons"), 60000, rng);
    std::vector<double> tv_trace;
    tv_trace.push_back(histogram_tv(walkers, reference, 32, 0.0, 1.0));

    for (int k = 0; k < steps; ++k) {
        const double t_fwd = horizon - k * kappa;
        const auto grid = forward_marginal_grid(spec, cf, t_fwd, &data);
        std::vector<double> log_grid(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) log_grid[i] = std::log(grid[i]);
        const JumpScoreEval s{[&log_grid, &spec](double, const Vec& x) {
            return TorusConditional::bilinear(log_grid, spec.grid_n, x[0], x[1]);
        }};
        const IntensityField field = build_intensity_field(spec, s, t_fwd);
        for (auto& w : walkers) w = backward_jump_step(spec, s, field, w, t_fwd, kappa, rng);
        if ((k + 1) % (steps / 4) == 0)
            tv_trace.push_back(histogram_tv(walkers, reference, 32, 0.0, 1.0));
    }
    for (std::size_t i = 1; i < tv_trace.size(); ++i)
        EXPECT_LT(tv_trace[i], tv_trace[i - 1] + 0.02) << "snapshot " << i;
    EXPECT_LT(tv_trace.back(), 0.35);
    EXPECT_LT(tv_trace.back(), 0.5 * tv_trace.front());
}

}  // namespace

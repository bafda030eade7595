#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dmm/discrete.hpp"
#include "dmm/metrics.hpp"
#include "dmm/rate_matrix.hpp"
#include "dmm/rng.hpp"
#include "dmm/torus_jump.hpp"
#include "dmm/train.hpp"

namespace dmm {

// ============================================================================
// Named verification suites behind `verify`: randomized oracle checks of the
// reversal identity, the error-bound inequality, the FFT quadrature, the loss
// structure, and the reverse-mode gradients. Each check reports its worst
// observed error so failures are diagnosable from the JSON report.
// ============================================================================

struct VerifyCheck {
    std::string name;
    bool passed = false;
    double observed = 0.0;
    double threshold = 0.0;
};

struct VerifySuiteResult {
    std::string suite;
    std::vector<VerifyCheck> checks;

    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

namespace verify_detail {

inline RateMatrix random_rate_matrix(std::size_t n, Rng& rng, double lo = 0.2, double hi = 1.5) {
    RateMatrix rm(n);
    for (std::size_t from = 0; from < n; ++from)
        for (std::size_t to = 0; to < n; ++to)
            if (to != from) rm.set_rate(to, from, rng.uniform(lo, hi));
    rm.rebuild_diagonal();
    return rm;
}

inline Vec random_density(std::size_t n, Rng& rng) {
    Vec p(n);
    double sum = 0.0;
    for (auto& v : p) {
        v = rng.uniform(0.05, 1.0);
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

}  // namespace verify_detail

// Time reversal on random finite chains: integrating the backward chain built
// from exact marginal ratios reproduces the reversed forward marginals, and
// the reversal identity p (Lbar f) = L*(p f) - f L* p holds pointwise.
inline VerifySuiteResult verify_reversal(std::size_t instances = 50, std::uint64_t seed = 900) {
    using namespace verify_detail;
    Rng rng(seed);
    double worst_marginal = 0.0, worst_identity = 0.0;
    for (std::size_t rep = 0; rep < instances; ++rep) {
        const std::size_t n = 3 + rng.uniform_index(3);
        const RateMatrix rm = random_rate_matrix(n, rng);
        const RateFamily family = constant_family(rm);
        const Vec p0 = random_density(n, rng);
        const double horizon = 1.0;
        const ScoreProvider truth = marginal_score_provider(family, DensityVector{p0, 0.0});

        const RateFamily backward = [&](double u) {
            return backward_rate_matrix(family(horizon - u), truth(horizon - u));
        };
        const Vec pT = evolve_density(family, DensityVector{p0, 0.0}, horizon).values;
        const Vec qT = evolve_density(backward, DensityVector{pT, 0.0}, horizon).values;
        for (std::size_t x = 0; x < n; ++x)
            worst_marginal = std::max(worst_marginal, std::fabs(qT[x] - p0[x]));

        // Pointwise identity at a random time.
        const double t = rng.uniform(0.1, 0.9);
        const Vec pt = evolve_density(family, DensityVector{p0, 0.0}, t).values;
        const RateMatrix bwd = backward_rate_matrix(rm, ScoreTable::from_density(pt));
        Vec f(n);
        for (auto& v : f) v = rng.uniform(-1.0, 1.0);
        const Vec lbar_f = apply_generator(bwd, f);
        Vec pf(n);
        for (std::size_t i = 0; i < n; ++i) pf[i] = pt[i] * f[i];
        const Vec adj_pf = apply_adjoint(rm, pf);
        const Vec adj_p = apply_adjoint(rm, pt);
        for (std::size_t x = 0; x < n; ++x)
            worst_identity = std::max(
                worst_identity, std::fabs(pt[x] * lbar_f[x] - (adj_pf[x] - f[x] * adj_p[x])));
    }
    VerifySuiteResult result{"reversal", {}};
    result.checks.push_back({"reversed-marginals-max-abs", worst_marginal <= 1e-6, worst_marginal, 1e-6});
    result.checks.push_back({"reversal-identity-max-abs", worst_identity <= 1e-10, worst_identity, 1e-10});
    return result;
}

// Error-bound inequality KL(p0||qT) <= KL(pT||q0) + L[eta] on random
// instances with random positive scores and several q0 choices.
inline VerifySuiteResult verify_cor1(std::size_t instances = 100, std::uint64_t seed = 901) {
    using namespace verify_detail;
    Rng rng(seed);
    double worst_violation = -1e300;
    for (std::size_t rep = 0; rep < instances; ++rep) {
        const std::size_t n = 3 + rng.uniform_index(3);
        const RateMatrix rm = random_rate_matrix(n, rng);
        const RateFamily family = constant_family(rm);
        const Vec p0 = random_density(n, rng);
        const double horizon = 1.0;
        const ScoreProvider truth = marginal_score_provider(family, DensityVector{p0, 0.0});
        ScoreTable table(n);
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t y = 0; y < n; ++y)
                if (x != y) table.set(x, y, rng.uniform(0.3, 3.0));
        const ScoreProvider s_hat = [&](double) { return table; };

        const double loss = exact_path_kl(family, truth, s_hat, DensityVector{p0, 0.0}, horizon);
        const Vec pT = evolve_density(family, DensityVector{p0, 0.0}, horizon).values;
        const RateFamily backward = [&](double u) {
            return backward_rate_matrix(family(horizon - u), s_hat(horizon - u));
        };
        const Vec q0 = (rep % 3 == 0)   ? pT
                       : (rep % 3 == 1) ? Vec(n, 1.0 / static_cast<double>(n))
                                        : random_density(n, rng);
        const Vec qT = evolve_density(backward, DensityVector{q0, 0.0}, horizon).values;
        const double violation = kl_divergence(p0, qT) - (kl_divergence(pT, q0) + loss);
        worst_violation = std::max(worst_violation, violation);
    }
    VerifySuiteResult result{"cor1", {}};
    result.checks.push_back(
        {"error-bound-worst-violation", worst_violation <= 1e-8, worst_violation, 1e-8});
    return result;
}

// FFT intensity integral against brute-force Riemann summation on random
// potentials, and exactness of the reference-reuse path on the grid.
inline VerifySuiteResult verify_quadrature(std::size_t potentials = 20, std::uint64_t seed = 902) {
    const TorusJumpSpec spec;
    Rng rng(seed);
    const std::size_t n = spec.grid_n;
    const auto kernel = spec.kernel_grid();
    double worst_rel = 0.0, worst_reuse = 0.0;
    for (std::size_t rep = 0; rep < potentials; ++rep) {
        std::vector<double> table(n * n);
        const double a1 = rng.uniform(-1, 1), a2 = rng.uniform(-1, 1), a3 = rng.uniform(-1, 1);
        const double pi = 3.14159265358979323846;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double u = static_cast<double>(i) / n, v = static_cast<double>(j) / n;
                table[i * n + j] = a1 * std::cos(2 * pi * u) + a2 * std::sin(2 * pi * v) +
                                   a3 * std::cos(2 * pi * (u + v)) + 0.3 * std::sin(4 * pi * u);
            }
        const JumpScoreEval s{[&table, n](double, const Vec& x) {
            return TorusConditional::bilinear(table, n, x[0], x[1]);
        }};
        const IntensityField field = build_intensity_field(spec, s, 0.0, rep);
        for (int probe = 0; probe < 4; ++probe) {
            const std::size_t mi = rng.uniform_index(n), mj = rng.uniform_index(n);
            double riemann = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    riemann += field.exp_g[i * n + j] *
                               kernel[((i - mi + n) % n) * n + ((j - mj + n) % n)];
            riemann /= static_cast<double>(n * n) * field.exp_g[mi * n + mj];
            const Vec x{static_cast<double>(mi) / n, static_cast<double>(mj) / n};
            const double fft_value = field.j_at(x);
            worst_rel = std::max(worst_rel, std::fabs(fft_value - riemann) / std::fabs(riemann));
            worst_reuse = std::max(worst_reuse,
                                   std::fabs(reference_reuse_j(field, 0.0, rep, x) - fft_value));
        }
    }
    VerifySuiteResult result{"quadrature", {}};
    result.checks.push_back({"fft-vs-riemann-max-rel", worst_rel <= 1e-6, worst_rel, 1e-6});
    result.checks.push_back({"reference-reuse-max-abs", worst_reuse == 0.0, worst_reuse, 0.0});
    return result;
}

// Loss structure: integrand nonnegativity on random draws and vanishing at
// the true (conditional) score.
inline VerifySuiteResult verify_losses(std::uint64_t seed = 903) {
    Rng rng(seed);
    double worst_negative = 0.0;
    // Bregman form a - b log a >= b - b log b.
    for (int i = 0; i < 2000; ++i) {
        const double a = std::exp(rng.uniform(-4, 4));
        const double b = std::exp(rng.uniform(-4, 4));
        const double slack = (a - b * std::log(a)) - (b - b * std::log(b));
        worst_negative = std::min(worst_negative, slack);
    }
    // Quadratic form with PSD diffusion matrices.
    double worst_quad = 0.0;
    for (int i = 0; i < 500; ++i) {
        Matrix sigma(2, 2);
        sigma(0, 0) = rng.uniform(0.3, 1.5);
        sigma(0, 1) = rng.uniform(-0.5, 0.5);
        sigma(1, 0) = rng.uniform(-0.5, 0.5);
        sigma(1, 1) = rng.uniform(0.3, 1.5);
        const Matrix d = matmul(sigma, transpose(sigma));
        const Vec s_hat{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const Vec s_ref{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        worst_quad = std::min(worst_quad, diffusion_loss_integrand(d, s_hat, s_ref));
    }
    // Truth plug-in drives the pointwise losses to zero.
    double worst_truth = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double b = std::exp(rng.uniform(-3, 3));
        worst_truth = std::max(worst_truth, std::fabs((b - b * std::log(b)) - (b - b * std::log(b))));
        const Vec s{rng.uniform(-2, 2)};
        worst_truth = std::max(worst_truth, diffusion_loss_integrand(Matrix::identity(1), s, s));
    }
    VerifySuiteResult result{"losses", {}};
    result.checks.push_back({"bregman-lower-bound-slack", worst_negative >= -1e-12, worst_negative, -1e-12});
    result.checks.push_back({"psd-quadratic-form", worst_quad >= 0.0, worst_quad, 0.0});
    result.checks.push_back({"truth-plugin-below-1e-10", worst_truth <= 1e-10, worst_truth, 1e-10});
    return result;
}

// Reverse-mode gradients of every engine loss against central finite
// differences on small heads.
inline VerifySuiteResult verify_gradcheck(std::uint64_t seed = 904) {
    double worst_rel = 0.0;

    const auto fd_check = [&](auto& engine, const auto& dataset, double t_min, double horizon,
                              std::uint64_t stream) {
        const TimeSampler psi = uniform_time(t_min, horizon);
        Vec grad;
        {
            Rng epoch(stream);
            engine.batch_loss_grad(dataset, psi, 8, epoch, grad);
        }
        for (std::size_t i = 0; i < engine.model.params.theta.size(); ++i) {
            const double eps = 1e-5;
            const double keep = engine.model.params.theta[i];
            Vec scratch;
            engine.model.params.theta[i] = keep + eps;
            Rng up(stream);
            const double up_loss = engine.batch_loss_grad(dataset, psi, 8, up, scratch);
            engine.model.params.theta[i] = keep - eps;
            Rng down(stream);
            const double down_loss = engine.batch_loss_grad(dataset, psi, 8, down, scratch);
            engine.model.params.theta[i] = keep;
            const double fd = (up_loss - down_loss) / (2.0 * eps);
            worst_rel = std::max(worst_rel, std::fabs(grad[i] - fd) / std::max(1.0, std::fabs(fd)));
        }
    };

    Rng rng(seed);
    {
        OuEngine engine = OuEngine::make(1, 1.5, 2, 2, rng);
        fd_check(engine, std::vector<Vec>{{0.4}, {-0.9}}, 0.05, 1.5, 910);
    }
    {
        GbmEngine engine = GbmEngine::make(GbmSpec::make_1d(1.0), 1.5, 2, 2, rng);
        fd_check(engine, std::vector<Vec>{{0.8}, {2.2}}, 0.05, 1.5, 911);
    }
    {
        TorusJumpEngine engine = TorusJumpEngine::make(TorusJumpSpec{}, 2.0, 1, 2, 2, rng);
        engine.kernel_mc = 4;
        fd_check(engine, std::vector<Vec>{{0.3, 0.6}, {0.8, 0.2}}, 0.1, 2.0, 912);
    }
    {
        FiniteStateEngine engine =
            FiniteStateEngine::make(uniform_chain(DiscreteSpace{1, 3, false}), 1.5, 2, 2, rng);
        fd_check(engine, std::vector<std::size_t>{0, 1}, 0.05, 1.5, 913);
    }

    VerifySuiteResult result{"gradcheck", {}};
    result.checks.push_back({"reverse-vs-central-fd-max-rel", worst_rel <= 1e-4, worst_rel, 1e-4});
    return result;
}

inline VerifySuiteResult run_verify_suite(const std::string& name) {
    if (name == "reversal") return verify_reversal();
    if (name == "cor1") return verify_cor1();
    if (name == "quadrature") return verify_quadrature();
    if (name == "losses") return verify_losses();
    if (name == "gradcheck") return verify_gradcheck();
    throw std::invalid_argument("unknown verify suite '" + name + "'");
}

inline std::vector<std::string> verify_suite_names() {
    return {"reversal", "cor1", "quadrature", "losses", "gradcheck"};
}

}  // namespace dmm

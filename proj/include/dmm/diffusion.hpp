#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "dmm/linalg.hpp"
#include "dmm/rng.hpp"

namespace dmm {

// ============================================================================
// Continuous diffusion forward/backward machinery: the OU reference process
// and geometric Brownian motion with its state-dependent diffusion matrix.
// Backward simulation follows
//     dy = (-b_{T-t}(y) + D_{T-t}(y) shat_{T-t}(y) + div D_{T-t}(y)) dt
//          + Sigma_{T-t}(y) dw,
// with the GBM variant stepped in log coordinates to preserve positivity.
// ============================================================================

// Score evaluator shat_t^diff(x) = grad log phi_t(x).
using DiffusionScoreEval = std::function<Vec(double t, const Vec& x)>;

struct DiffusionSample {
    Vec x;
    Vec cond_score;  // grad log p_{t|0}(x | x0)
};

using DiffusionConditional = std::function<DiffusionSample(const Vec& x0, double t, Rng&)>;

// ----------------------------------------------------------------------------
// OU process: dx = -x/2 dt + dw, stationary N(0, I)
// ----------------------------------------------------------------------------

inline Vec ou_sample(const Vec& x0, double t, Rng& rng) {
    if (t <= 0.0) throw std::invalid_argument("ou_sample: t must be > 0");
    const double mean_factor = std::exp(-0.5 * t);
    const double stddev = std::sqrt(1.0 - std::exp(-t));
    Vec x(x0.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x0[i] * mean_factor + stddev * rng.normal();
    return x;
}

// grad log p_{t|0}(x_t | x0) = -(x_t - x0 e^{-t/2}) / (1 - e^{-t})
inline Vec ou_conditional_score(const Vec& x0, const Vec& xt, double t) {
    if (t <= 0.0) throw std::invalid_argument("ou_conditional_score: t must be > 0");
    if (x0.size() != xt.size()) throw std::invalid_argument("ou_conditional_score: dim mismatch");
    const double mean_factor = std::exp(-0.5 * t);
    const double var = 1.0 - std::exp(-t);
    Vec s(x0.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = -(xt[i] - x0[i] * mean_factor) / var;
    return s;
}

inline DiffusionSample ou_conditional(const Vec& x0, double t, Rng& rng) {
    DiffusionSample out;
    out.x = ou_sample(x0, t, rng);
    out.cond_score = ou_conditional_score(x0, out.x, t);
    return out;
}

// ----------------------------------------------------------------------------
// Geometric Brownian motion: dx = x .* (Sigma dw)
// ----------------------------------------------------------------------------

struct GbmSpec {
    std::size_t dim = 1;
    Matrix sigma;      // SDE factor
    Matrix a;          // A = Sigma Sigma^T
    Matrix a_inv;
    Vec diag_a;

    static GbmSpec make(const Matrix& sigma) {
        if (sigma.rows != sigma.cols) throw std::invalid_argument("GbmSpec: Sigma must be square");
        GbmSpec spec;
        spec.dim = sigma.rows;
        spec.sigma = sigma;
        spec.a = matmul(sigma, transpose(sigma));
        spec.a_inv = inverse(spec.a);
        spec.diag_a.resize(spec.dim);
        for (std::size_t i = 0; i < spec.dim; ++i) spec.diag_a[i] = spec.a(i, i);
        // A must be SPD and the inverse consistent to 1e-10.
        cholesky(spec.a);
        const Matrix check = matmul(spec.a, spec.a_inv);
        for (std::size_t i = 0; i < spec.dim; ++i)
            for (std::size_t j = 0; j < spec.dim; ++j)
                if (std::fabs(check(i, j) - (i == j ? 1.0 : 0.0)) > 1e-10)
                    throw std::runtime_error("GbmSpec: A * A^{-1} deviates from identity");
        return spec;
    }

    static GbmSpec make_1d(double sigma_scalar) {
        Matrix s(1, 1);
        s(0, 0) = sigma_scalar;
        return make(s);
    }
};

// x_t = x0 .* exp(Sigma w_t - diag(A) t / 2), w_t ~ N(0, t I)
inline Vec gbm_sample(const GbmSpec& spec, const Vec& x0, double t, Rng& rng) {
    if (t <= 0.0) throw std::invalid_argument("gbm_sample: t must be > 0");
    if (x0.size() != spec.dim) throw std::invalid_argument("gbm_sample: dim mismatch");
    for (double v : x0)
        if (v <= 0.0) throw std::invalid_argument("gbm_sample: x0 must be strictly positive");
    Vec w(spec.dim);
    const double root_t = std::sqrt(t);
    for (auto& v : w) v = root_t * rng.normal();
    const Vec sw = matvec(spec.sigma, w);
    Vec x(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i)
        x[i] = x0[i] * std::exp(sw[i] - 0.5 * spec.diag_a[i] * t);
    return x;
}

// grad log p_{t|0}(x_t|x0)
//   = -x_t^{-1} .* (1 + (1/t) A^{-1} (log x_t - log x0 + (t/2) diag A))
inline Vec gbm_conditional_score(const GbmSpec& spec, const Vec& x0, const Vec& xt, double t) {
    if (t <= 0.0) throw std::invalid_argument("gbm_conditional_score: t must be > 0");
    Vec z(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) {
        if (x0[i] <= 0.0 || xt[i] <= 0.0)
            throw std::invalid_argument("gbm_conditional_score: states must be positive");
        z[i] = std::log(xt[i]) - std::log(x0[i]) + 0.5 * t * spec.diag_a[i];
    }
    const Vec az = matvec(spec.a_inv, z);
    Vec s(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) s[i] = -(1.0 + az[i] / t) / xt[i];
    return s;
}

inline DiffusionSample gbm_conditional(const GbmSpec& spec, const Vec& x0, double t, Rng& rng) {
    DiffusionSample out;
    out.x = gbm_sample(spec, x0, t, rng);
    out.cond_score = gbm_conditional_score(spec, x0, out.x, t);
    return out;
}

struct DiffusionFields {
    Matrix d;           // D(x) = diag(x) A diag(x)
    Matrix factor;      // diag(x) Sigma, factor factor^T = D
    Vec divergence;     // (div D)_i = sum_j d D_ij / d x_j
};

// Row divergence of D(x) = diag(x) A diag(x): D_ij = x_i A_ij x_j, so
//   d_j D_ij = x_i A_ij (j != i),   d_i D_ii = 2 x_i A_ii,
// giving (div D)_i = x_i (sum_j A_ij + A_ii).
inline DiffusionFields gbm_diffusion_fields(const GbmSpec& spec, const Vec& x) {
    if (x.size() != spec.dim) throw std::invalid_argument("gbm_diffusion_fields: dim mismatch");
    for (double v : x)
        if (v <= 0.0) throw std::invalid_argument("gbm_diffusion_fields: x must be positive");
    DiffusionFields out;
    out.d = Matrix(spec.dim, spec.dim);
    out.factor = Matrix(spec.dim, spec.dim);
    out.divergence.resize(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j) {
            out.d(i, j) = x[i] * spec.a(i, j) * x[j];
            out.factor(i, j) = x[i] * spec.sigma(i, j);
            row_sum += spec.a(i, j);
        }
        out.divergence[i] = x[i] * (row_sum + spec.a(i, i));
    }
    return out;
}

// ----------------------------------------------------------------------------
// Losses
// ----------------------------------------------------------------------------

using MatrixField = std::function<Matrix(double t, const Vec& x)>;

// Quadratic form (1/2) (shat - s)^T D (shat - s) through the Cholesky factor
// of D, which doubles as the PSD check the loss is required to perform.
inline double diffusion_loss_integrand(const Matrix& d, const Vec& s_hat, const Vec& s_cond) {
    const std::size_t n = s_hat.size();
    Vec diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = s_hat[i] - s_cond[i];
    Matrix l;
    try {
        l = cholesky(d, 1e-12);
    } catch (const std::runtime_error&) {
        throw std::runtime_error("diffusion_sm_loss: non-PSD diffusion matrix at sampled point");
    }
    // || L^T diff ||^2 = diff^T D diff
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double comp = 0.0;
        for (std::size_t i = j; i < n; ++i) comp += l(i, j) * diff[i];
        acc += comp * comp;
    }
    return 0.5 * acc;
}

// Monte Carlo estimate of E[ (1/2) D(x_t) : (shat - grad log p_{t|0})^{x2} ].
inline double diffusion_sm_loss(const MatrixField& d_field, const DiffusionScoreEval& s_hat,
                                const DiffusionConditional& conditional,
                                const std::vector<Vec>& dataset,
                                const std::function<double(Rng&)>& psi, std::size_t batch, Rng& rng) {
    if (dataset.empty()) throw std::invalid_argument("diffusion_sm_loss: empty dataset");
    double total = 0.0;
    for (std::size_t k = 0; k < batch; ++k) {
        const Vec& x0 = dataset[rng.uniform_index(dataset.size())];
        const double t = psi(rng);
        const DiffusionSample sample = conditional(x0, t, rng);
        const Vec sh = s_hat(t, sample.x);
        for (double v : sh)
            if (!std::isfinite(v)) throw std::runtime_error("diffusion_sm_loss: non-finite score");
        total += diffusion_loss_integrand(d_field(t, sample.x), sh, sample.cond_score);
    }
    return total / static_cast<double>(batch);
}

// ----------------------------------------------------------------------------
// Backward stepping
// ----------------------------------------------------------------------------

using VecField = std::function<Vec(double t, const Vec& x)>;

struct BackwardFields {
    Matrix d;
    Matrix factor;
    Vec divergence;
};

using FieldsProvider = std::function<BackwardFields(double t, const Vec& x)>;

// One Euler-Maruyama update of the backward SDE. t_fwd is the *forward* time
// at which all coefficient fields are evaluated; a caller at backward time u
// passes t_fwd = T - u.
inline Vec backward_diffusion_step(const Vec& y, double t_fwd, double kappa, const VecField& drift_b,
                                   const FieldsProvider& fields, const DiffusionScoreEval& s_hat,
                                   Rng& rng) {
    if (kappa <= 0.0) throw std::invalid_argument("backward_diffusion_step: kappa must be > 0");
    const std::size_t n = y.size();
    const BackwardFields f = fields(t_fwd, y);
    const Vec b = drift_b(t_fwd, y);
    const Vec sh = s_hat(t_fwd, y);
    const Vec dsh = matvec(f.d, sh);
    Vec noise(n);
    for (auto& v : noise) v = rng.normal();
    const Vec fn = matvec(f.factor, noise);
    const double root_k = std::sqrt(kappa);
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = y[i] + kappa * (-b[i] + dsh[i] + f.divergence[i]) + root_k * fn[i];
    return out;
}

// GBM backward step in z = log y coordinates. Ito's rule on z_i turns the
// backward SDE drift mu = D(y) shat + div D(y) into
//     dz_i = (mu_i(y) / y_i - A_ii / 2) dt + (Sigma dw)_i,
// which keeps the state strictly positive no matter the step size.
inline Vec gbm_backward_step_log(const GbmSpec& spec, const DiffusionScoreEval& s_hat, const Vec& z,
                                 double t_fwd, double kappa, Rng& rng) {
    if (kappa <= 0.0) throw std::invalid_argument("gbm_backward_step_log: kappa must be > 0");
    const std::size_t n = spec.dim;
    if (z.size() != n) throw std::invalid_argument("gbm_backward_step_log: dim mismatch");
    Vec y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(z[i])) throw std::invalid_argument("gbm_backward_step_log: invalid log state");
        y[i] = std::exp(z[i]);
    }
    const DiffusionFields f = gbm_diffusion_fields(spec, y);
    const Vec sh = s_hat(t_fwd, y);
    const Vec dsh = matvec(f.d, sh);
    Vec noise(n);
    for (auto& v : noise) v = rng.normal();
    const Vec sn = matvec(spec.sigma, noise);
    const double root_k = std::sqrt(kappa);
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = dsh[i] + f.divergence[i];
        out[i] = z[i] + kappa * (mu / y[i] - 0.5 * spec.diag_a[i]) + root_k * sn[i];
    }
    return out;
}

}  // namespace dmm

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmm/linalg.hpp"
#include "dmm/rng.hpp"

namespace dmm {

// ============================================================================
// Target distributions for the experiments: absolute-value Gaussian mixtures
// on the positive orthant and three torus shapes. The torus shapes use
// declared constants (cell layout, curve scaling, jitter) since only the
// shape names are standard.
// ============================================================================

struct GaussianMixture1d {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> variances;
};

struct TargetSpec {
    std::string name;  // gmm1d-abs | gmm2d-abs | chessboard | swiss-roll | moons | finite-random

    // gmm1d-abs parameters; defaults are the 1-D experiment mixture.
    GaussianMixture1d gmm1d{{0.7, 0.3}, {2.0, 4.0}, {0.25, 0.64}};

    // gmm2d-abs parameters; defaults are the 2-D experiment mixture.
    std::vector<double> gmm2d_weights{0.6, 0.4};
    std::vector<Vec> gmm2d_means{{2.5, 5.0}, {5.5, 2.5}};

    // finite-random parameters.
    std::size_t finite_states = 3;
    std::uint64_t finite_seed = 1;

    // torus shape constants
    double jitter = 0.01;

    static TargetSpec by_name(const std::string& name) {
        TargetSpec spec;
        spec.name = name;
        if (name != "gmm1d-abs" && name != "gmm2d-abs" && name != "chessboard" &&
            name != "swiss-roll" && name != "moons" && name != "finite-random")
            throw std::invalid_argument("TargetSpec: unknown target '" + name + "'");
        return spec;
    }

    std::size_t dim() const {
        if (name == "gmm1d-abs") return 1;
        if (name == "finite-random") return 1;
        return 2;
    }
};

namespace detail {

inline double wrap01(double u) {
    u -= std::floor(u);
    return u < 1.0 ? u : 0.0;
}

}  // namespace detail

// Density of |Z| for the 1-D mixture, reflection term included.
inline double gmm1d_abs_density(const GaussianMixture1d& mix, double x) {
    if (x < 0.0) return 0.0;
    const double inv_sqrt_2pi = 0.3989422804014327;
    double f = 0.0;
    for (std::size_t k = 0; k < mix.weights.size(); ++k) {
        const double sd = std::sqrt(mix.variances[k]);
        const double zp = (x - mix.means[k]) / sd;
        const double zm = (-x - mix.means[k]) / sd;
        f += mix.weights[k] * inv_sqrt_2pi / sd *
             (std::exp(-0.5 * zp * zp) + std::exp(-0.5 * zm * zm));
    }
    return f;
}

// Chessboard on [0,1)^2: uniform over the "black" cells of a 4x4 grid.
inline bool chessboard_black(double u, double v) {
    const int i = static_cast<int>(std::floor(u * 4.0));
    const int j = static_cast<int>(std::floor(v * 4.0));
    return (i + j) % 2 == 0;
}

inline Vec sample_target_point(const TargetSpec& spec, Rng& rng) {
    if (spec.name == "gmm1d-abs") {
        const auto& m = spec.gmm1d;
        double u = rng.uniform();
        std::size_t k = 0;
        for (; k + 1 < m.weights.size(); ++k) {
            u -= m.weights[k];
            if (u <= 0.0) break;
        }
        return Vec{std::fabs(rng.normal(m.means[k], std::sqrt(m.variances[k])))};
    }
    if (spec.name == "gmm2d-abs") {
        const std::size_t k = rng.uniform() < spec.gmm2d_weights[0] ? 0 : 1;
        return Vec{std::fabs(rng.normal(spec.gmm2d_means[k][0], 1.0)),
                   std::fabs(rng.normal(spec.gmm2d_means[k][1], 1.0))};
    }
    if (spec.name == "chessboard") {
        for (;;) {
            const double u = rng.uniform(), v = rng.uniform();
            if (chessboard_black(u, v)) return Vec{u, v};
        }
    }
    if (spec.name == "swiss-roll") {
        // Spiral r = theta / (3 pi), theta in [1.5 pi, 4.5 pi], scaled into the
        // middle of the unit cell, with small Gaussian jitter, wrapped.
        const double pi = 3.14159265358979323846;
        const double theta = rng.uniform(1.5 * pi, 4.5 * pi);
        const double r = theta / (4.5 * pi) * 0.4;
        const double x = 0.5 + r * std::cos(theta) + spec.jitter * rng.normal();
        const double y = 0.5 + r * std::sin(theta) + spec.jitter * rng.normal();
        return Vec{detail::wrap01(x), detail::wrap01(y)};
    }
    if (spec.name == "moons") {
        // Two interleaved half circles scaled into the unit cell.
        const double pi = 3.14159265358979323846;
        const double theta = rng.uniform(0.0, pi);
        double x, y;
        if (rng.uniform() < 0.5) {
            x = std::cos(theta);
            y = std::sin(theta);
        } else {
            x = 1.0 - std::cos(theta);
            y = 0.5 - std::sin(theta);
        }
        // Curve bounding box is x in [-1, 2], y in [-0.5, 1]; map to ~[0.15, 0.85].
        const double u = 0.15 + (x + 1.0) / 3.0 * 0.7 + spec.jitter * rng.normal();
        const double v = 0.2 + (y + 0.5) / 1.5 * 0.6 + spec.jitter * rng.normal();
        return Vec{detail::wrap01(u), detail::wrap01(v)};
    }
    if (spec.name == "finite-random") {
        // Fixed random distribution over {0..n-1} drawn from finite_seed.
        Rng gen(spec.finite_seed);
        Vec w(spec.finite_states);
        double sum = 0.0;
        for (auto& v : w) {
            v = gen.uniform(0.2, 1.0);
            sum += v;
        }
        double u = rng.uniform() * sum;
        for (std::size_t k = 0; k < w.size(); ++k) {
            u -= w[k];
            if (u <= 0.0) return Vec{static_cast<double>(k)};
        }
        return Vec{static_cast<double>(w.size() - 1)};
    }
    throw std::invalid_argument("sample_target_point: unknown target '" + spec.name + "'");
}

inline std::vector<Vec> sample_target(const TargetSpec& spec, std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("sample_target: need n >= 1");
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_target_point(spec, rng));
    return out;
}

}  // namespace dmm

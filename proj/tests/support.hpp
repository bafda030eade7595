#pragma once

// Shared helpers for tests: closed-form Gaussian-mixture marginals under the
// OU forward process, used wherever an exact score is needed.

#include <cmath>
#include <vector>

#include "dmm/linalg.hpp"
#include "dmm/rng.hpp"

namespace dmm::testsupport {

struct OuMixture1d {
    std::vector<double> weights;
    std::vector<double> means;      // at t = 0
    std::vector<double> variances;  // at t = 0

    // OU pushes N(m, v) to N(m e^{-t/2}, v e^{-t} + 1 - e^{-t}).
    void marginal_at(double t, std::vector<double>& m, std::vector<double>& v) const {
        const double decay = std::exp(-0.5 * t);
        const double vdec = std::exp(-t);
        m.resize(means.size());
        v.resize(means.size());
        for (std::size_t k = 0; k < means.size(); ++k) {
            m[k] = means[k] * decay;
            v[k] = variances[k] * vdec + 1.0 - vdec;
        }
    }

    double density(double t, double x) const {
        std::vector<double> m, v;
        marginal_at(t, m, v);
        double f = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double z = x - m[k];
            f += weights[k] * std::exp(-0.5 * z * z / v[k]) / std::sqrt(2.0 * 3.14159265358979323846 * v[k]);
        }
        return f;
    }

    double score(double t, double x) const {
        std::vector<double> m, v;
        marginal_at(t, m, v);
        double f = 0.0, g = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double z = x - m[k];
            const double comp =
                weights[k] * std::exp(-0.5 * z * z / v[k]) / std::sqrt(2.0 * 3.14159265358979323846 * v[k]);
            f += comp;
            g += comp * (-z / v[k]);
        }
        return g / f;
    }

    double sample(double t, dmm::Rng& rng) const {
        std::vector<double> m, v;
        marginal_at(t, m, v);
        double u = rng.uniform();
        std::size_t k = 0;
        for (; k + 1 < weights.size(); ++k) {
            u -= weights[k];
            if (u <= 0.0) break;
        }
        return rng.normal(m[k], std::sqrt(v[k]));
    }

    double mean0() const {
        double m = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) m += weights[k] * means[k];
        return m;
    }
};

// Deterministic weak-error measurement for the 1-D Euler-Maruyama chain
// y' = y + kappa * drift(t, y) + sqrt(kappa) * xi: propagates the chain's
// density on a grid by convolving with the exact per-step Gaussian kernel, so
// E[y_T] carries no Monte Carlo noise.
struct EmDensityGrid {
    double lo = -8.0, hi = 8.0;
    std::size_t points = 2048;

    struct Moments {
        double mean = 0.0;
        double second = 0.0;
    };

    template <typename Drift>
    Moments terminal_moments(const std::vector<double>& q0, const Drift& drift, double horizon,
                             double kappa) const {
        const double h = (hi - lo) / static_cast<double>(points - 1);
        std::vector<double> q = q0;
        const int steps = static_cast<int>(std::llround(horizon / kappa));
        const double sd = std::sqrt(kappa);
        const int window = static_cast<int>(std::ceil(8.0 * sd / h));
        std::vector<double> next(points);
        for (int step = 0; step < steps; ++step) {
            const double t_backward = step * kappa;
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t i = 0; i < points; ++i) {
                if (q[i] == 0.0) continue;
                const double y = lo + h * static_cast<double>(i);
                const double center = y + kappa * drift(t_backward, y);
                const int jc = static_cast<int>(std::floor((center - lo) / h));
                const double mass = q[i] * h;
                for (int j = std::max(0, jc - window);
                     j <= std::min(static_cast<int>(points) - 1, jc + window); ++j) {
                    const double z = (lo + h * j - center) / sd;
                    next[j] += mass * std::exp(-0.5 * z * z) / (sd * 2.5066282746310002);
                }
            }
            double total = 0.0;
            for (double v : next) total += v;
            for (double& v : next) v /= total * h;
            q = next;
        }
        Moments out;
        for (std::size_t i = 0; i < points; ++i) {
            const double y = lo + h * i;
            out.mean += y * q[i] * h;
            out.second += y * y * q[i] * h;
        }
        return out;
    }
};

}  // namespace dmm::testsupport

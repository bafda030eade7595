#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dmm/linalg.hpp"
#include "dmm/parallel.hpp"

namespace dmm {

// Sample-set distances used by the acceptance checks.

inline double euclidean_distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Distance on the unit torus: per-axis wrap-around minimum.
inline double torus_distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = std::fabs(a[i] - b[i]);
        d = std::min(d, 1.0 - d);
        s += d * d;
    }
    return std::sqrt(s);
}

// Energy distance 2 E|a-b| - E|a-a'| - E|b-b'|, V-statistic form (all pairs,
// diagonal included): identical multisets give exactly zero and the estimate
// never goes negative, at the price of an O(1/n) upward bias. The documented
// noise-floor tolerance of -1e-3 is kept for callers comparing against
// population values.
inline double energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b,
                              bool wrapped = false) {
    if (a.empty() || b.empty()) throw std::invalid_argument("energy_distance: empty sample set");
    const auto dist = wrapped ? torus_distance : euclidean_distance;
    const std::size_t n = a.size(), m = b.size();

    const double cross = parallel_sum(n, 256, [&](std::size_t, std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < m; ++j) s += dist(a[i], b[j]);
        return s;
    }) / (static_cast<double>(n) * static_cast<double>(m));

    const auto within = [&](const std::vector<Vec>& set) {
        const std::size_t k = set.size();
        if (k < 2) return 0.0;
        const double s = parallel_sum(k, 256, [&](std::size_t, std::size_t lo, std::size_t hi) {
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i)
                for (std::size_t j = i + 1; j < k; ++j) acc += dist(set[i], set[j]);
            return acc;
        });
        return 2.0 * s / (static_cast<double>(k) * static_cast<double>(k));
    };

    return 2.0 * cross - within(a) - within(b);
}

// Histogram total-variation distance on a common regular binning of
// [lo, hi)^d; samples outside the box are clamped into the edge bins.
inline double histogram_tv(const std::vector<Vec>& a, const std::vector<Vec>& b, std::size_t bins,
                           double lo, double hi) {
    if (a.empty() || b.empty()) throw std::invalid_argument("histogram_tv: empty sample set");
    if (hi <= lo) throw std::invalid_argument("histogram_tv: empty range");
    const std::size_t dim = a[0].size();
    std::size_t cells = 1;
    for (std::size_t i = 0; i < dim; ++i) cells *= bins;
    const auto cell_of = [&](const Vec& x) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            double u = (x[i] - lo) / (hi - lo);
            long bin = static_cast<long>(std::floor(u * static_cast<double>(bins)));
            bin = std::max(0L, std::min(static_cast<long>(bins) - 1, bin));
            idx = idx * bins + static_cast<std::size_t>(bin);
        }
        return idx;
    };
    std::vector<double> pa(cells, 0.0), pb(cells, 0.0);
    for (const auto& x : a) pa[cell_of(x)] += 1.0 / static_cast<double>(a.size());
    for (const auto& x : b) pb[cell_of(x)] += 1.0 / static_cast<double>(b.size());
    double tv = 0.0;
    for (std::size_t c = 0; c < cells; ++c) tv += std::fabs(pa[c] - pb[c]);
    return 0.5 * tv;
}

// TV between an empirical sample and an explicit cell-probability table.
inline double histogram_tv_vs_probs(const std::vector<Vec>& a, const std::vector<double>& probs,
                                    std::size_t bins, double lo, double hi) {
    if (a.empty()) throw std::invalid_argument("histogram_tv_vs_probs: empty sample set");
    const std::size_t dim = a[0].size();
    std::size_t cells = 1;
    for (std::size_t i = 0; i < dim; ++i) cells *= bins;
    if (probs.size() != cells) throw std::invalid_argument("histogram_tv_vs_probs: table size");
    std::vector<double> pa(cells, 0.0);
    for (const auto& x : a) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            double u = (x[i] - lo) / (hi - lo);
            long bin = static_cast<long>(std::floor(u * static_cast<double>(bins)));
            bin = std::max(0L, std::min(static_cast<long>(bins) - 1, bin));
            idx = idx * bins + static_cast<std::size_t>(bin);
        }
        pa[idx] += 1.0 / static_cast<double>(a.size());
    }
    double tv = 0.0;
    for (std::size_t c = 0; c < cells; ++c) tv += std::fabs(pa[c] - probs[c]);
    return 0.5 * tv;
}

inline double kl_divergence(const Vec& p, const Vec& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / std::max(q[i], 1e-300));
    return s;
}

}  // namespace dmm

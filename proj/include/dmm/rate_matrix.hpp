#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "dmm/linalg.hpp"

namespace dmm {

// ============================================================================
// Finite-state generator algebra.
//
// CONVENTION (read this first): rate matrices act on probability columns,
//     dp/dt = L p,
// so L(y, x) with y != x is the jump rate FROM state x TO state y and each
// COLUMN sums to zero. Code that indexes L should read L(to, from). Getting
// this transposed is the classic failure mode when implementing CTMC
// reversals, hence the loud banner.
// ============================================================================

class RateMatrix {
public:
    RateMatrix() = default;

    explicit RateMatrix(std::size_t n) : n_(n), m_(n, n, 0.0) {}

    explicit RateMatrix(Matrix m) : n_(m.rows), m_(std::move(m)) {
        if (m_.rows != m_.cols) throw std::invalid_argument("RateMatrix: matrix not square");
        validate();
    }

    std::size_t size() const { return n_; }

    // Entry L(to, from); includes the negative diagonal.
    double entry(std::size_t to, std::size_t from) const { return m_(to, from); }

    // Off-diagonal jump intensity lambda(to, from) = L(to, from) * (1 - delta).
    double rate(std::size_t to, std::size_t from) const { return to == from ? 0.0 : m_(to, from); }

    // Sets an off-diagonal rate; call rebuild_diagonal() once all are in.
    void set_rate(std::size_t to, std::size_t from, double value) {
        if (to == from) throw std::invalid_argument("RateMatrix::set_rate: diagonal is derived");
        if (value < 0.0) throw std::invalid_argument("RateMatrix::set_rate: negative rate");
        m_(to, from) = value;
    }

    // Diagonal = minus the column sum of off-diagonal rates.
    void rebuild_diagonal() {
        for (std::size_t from = 0; from < n_; ++from) {
            double total = 0.0;
            for (std::size_t to = 0; to < n_; ++to)
                if (to != from) total += m_(to, from);
            m_(from, from) = -total;
        }
    }

    // Total outgoing rate of a state (nonnegative).
    double exit_rate(std::size_t from) const { return -m_(from, from); }

    void validate() const {
        for (std::size_t from = 0; from < n_; ++from) {
            double col = 0.0;
            for (std::size_t to = 0; to < n_; ++to) {
                if (to != from && m_(to, from) < 0.0)
                    throw std::invalid_argument("RateMatrix: negative off-diagonal rate");
                col += m_(to, from);
            }
            if (std::fabs(col) > 1e-9 * std::max(1.0, exit_rate(from)))
                throw std::invalid_argument("RateMatrix: column does not sum to zero");
        }
    }

    RateMatrix scaled(double factor) const {
        if (factor < 0.0) throw std::invalid_argument("RateMatrix::scaled: negative factor");
        RateMatrix out(n_);
        for (std::size_t from = 0; from < n_; ++from)
            for (std::size_t to = 0; to < n_; ++to)
                if (to != from) out.m_(to, from) = m_(to, from) * factor;
        out.rebuild_diagonal();
        return out;
    }

    const Matrix& matrix() const { return m_; }

private:
    std::size_t n_ = 0;
    Matrix m_;
};

// Time-indexed family t -> RateMatrix. Piecewise caching of constant families
// is an optimization layered on top, not a semantic.
using RateFamily = std::function<RateMatrix(double)>;

inline RateFamily constant_family(RateMatrix rm) {
    return [rm = std::move(rm)](double) { return rm; };
}

// ----------------------------------------------------------------------------

// Probability column with a timestamp.
struct DensityVector {
    Vec values;
    double time = 0.0;

    DensityVector() = default;
    DensityVector(Vec v, double t) : values(std::move(v)), time(t) { validate(); }

    void validate() const {
        if (time < 0.0) throw std::invalid_argument("DensityVector: negative time");
        double sum = 0.0;
        for (double p : values) {
            if (p < 0.0) throw std::invalid_argument("DensityVector: negative entry");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("DensityVector: mass not 1");
    }
};

// Full table of ratios s(x, y). A learned table need not be consistent with
// any density; the product identity s(x,y) s(y,x) = 1 is only checked when the
// table is built from one.
class ScoreTable {
public:
    ScoreTable() = default;

    explicit ScoreTable(std::size_t n) : n_(n), s_(n, n, 1.0) {}

    explicit ScoreTable(Matrix ratios) : n_(ratios.rows), s_(std::move(ratios)) {
        if (s_.rows != s_.cols) throw std::invalid_argument("ScoreTable: matrix not square");
        for (std::size_t x = 0; x < n_; ++x) {
            if (s_(x, x) != 1.0) throw std::invalid_argument("ScoreTable: s(x,x) must be 1");
            for (std::size_t y = 0; y < n_; ++y)
                if (s_(x, y) <= 0.0) throw std::invalid_argument("ScoreTable: nonpositive entry");
        }
    }

    static ScoreTable from_density(const Vec& p) {
        const std::size_t n = p.size();
        Matrix s(n, n, 1.0);
        for (std::size_t x = 0; x < n; ++x) {
            if (p[x] <= 0.0) throw std::invalid_argument("ScoreTable: density not strictly positive");
            for (std::size_t y = 0; y < n; ++y) s(x, y) = p[y] / p[x];
        }
        ScoreTable table{std::move(s)};
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t y = 0; y < n; ++y)
                if (std::fabs(table(x, y) * table(y, x) - 1.0) > 1e-9)
                    throw std::runtime_error("ScoreTable: reciprocal identity violated");
        return table;
    }

    std::size_t size() const { return n_; }
    double operator()(std::size_t x, std::size_t y) const { return s_(x, y); }
    void set(std::size_t x, std::size_t y, double v) {
        if (x == y && v != 1.0) throw std::invalid_argument("ScoreTable: s(x,x) must stay 1");
        if (v <= 0.0) throw std::invalid_argument("ScoreTable: nonpositive entry");
        s_(x, y) = v;
    }

private:
    std::size_t n_ = 0;
    Matrix s_;
};

// ----------------------------------------------------------------------------
// Operations
// ----------------------------------------------------------------------------

// (Lf)(x) = sum_y (f(y) - f(x)) lambda(y, x): expected instantaneous change of
// f along jumps out of x. Computed by the defining sum rather than a matrix
// product so it stays meaningful even for matrices with relaxed invariants.
inline Vec apply_generator(const RateMatrix& rm, const Vec& f) {
    const std::size_t n = rm.size();
    if (f.size() != n) throw std::invalid_argument("apply_generator: dimension mismatch");
    Vec out(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        double acc = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            acc += (f[y] - f[x]) * rm.rate(y, x);
        }
        out[x] = acc;
    }
    return out;
}

// Adjoint (L* g)(x) = sum_y (g(y) lambda(x, y) - g(x) lambda(y, x)); drives the
// Kolmogorov forward equation dp/dt = L* p. For a valid column-convention rate
// matrix this coincides with the plain matrix action p -> L p.
inline Vec apply_adjoint(const RateMatrix& rm, const Vec& g) {
    const std::size_t n = rm.size();
    if (g.size() != n) throw std::invalid_argument("apply_adjoint: dimension mismatch");
    Vec out(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        double acc = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            acc += g[y] * rm.rate(x, y) - g[x] * rm.rate(y, x);
        }
        out[x] = acc;
    }
    return out;
}

// Carre du champ Gamma(f, g)(x) = sum_y (f(y)-f(x))(g(y)-g(x)) lambda(y, x),
// equal to L(fg) - f Lg - g Lf.
inline Vec carre_du_champ(const RateMatrix& rm, const Vec& f, const Vec& g) {
    const std::size_t n = rm.size();
    if (f.size() != n || g.size() != n)
        throw std::invalid_argument("carre_du_champ: dimension mismatch");
    Vec out(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        double acc = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            acc += (f[y] - f[x]) * (g[y] - g[x]) * rm.rate(y, x);
        }
        out[x] = acc;
    }
    return out;
}

// Backward rate matrix: off-diagonals Lbar(y, x) = s(x, y) * L(x, y), diagonal
// rebuilt to restore the column-sum-zero invariant.
//
// NOTE ON TIME: this is a pure per-time-slice construction. The backward chain
// at backward time t uses the forward matrix and score at forward time T - t;
// performing that flip is the caller's responsibility.
inline RateMatrix backward_rate_matrix(const RateMatrix& rm, const ScoreTable& score) {
    const std::size_t n = rm.size();
    if (score.size() != n) throw std::invalid_argument("backward_rate_matrix: dimension mismatch");
    RateMatrix out(n);
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            out.set_rate(y, x, score(x, y) * rm.rate(x, y));
        }
    out.rebuild_diagonal();
    return out;
}

// Pathwise KL integrand at state x between the reversed chain driven by s_true
// and the estimated backward chain driven by s_hat:
//     sum_y (r - 1 - log r) * s_true(x, y) * lambda(x, y),   r = s_hat / s_true.
// Bregman form: nonnegative, zero iff s_hat matches s_true on every edge with
// positive weight. Edges with zero weight contribute nothing regardless of the
// score values there.
inline double kl_path_integrand(const RateMatrix& rm, const ScoreTable& s_true,
                                const ScoreTable& s_hat, std::size_t x) {
    const std::size_t n = rm.size();
    if (s_true.size() != n || s_hat.size() != n)
        throw std::invalid_argument("kl_path_integrand: dimension mismatch");
    if (x >= n) throw std::invalid_argument("kl_path_integrand: state out of range");
    double acc = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
        if (y == x) continue;
        const double weight = s_true(x, y) * rm.rate(x, y);
        if (weight == 0.0) continue;
        const double r = s_hat(x, y) / s_true(x, y);
        if (r <= 0.0) throw std::invalid_argument("kl_path_integrand: nonpositive score ratio");
        acc += (r - 1.0 - std::log(r)) * weight;
    }
    return acc;
}

}  // namespace dmm

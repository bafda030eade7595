#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "dmm/quadrature.hpp"
#include "dmm/rate_matrix.hpp"
#include "dmm/rng.hpp"

namespace dmm {

// ============================================================================
// Product state spaces [S]^d with optional mask symbol, the uniform/masked
// forward chains, their closed-form conditionals, Kolmogorov-forward
// integration, event-driven simulation, and the discrete losses. Everything
// here is exact up to integrator tolerance, which is what makes the module
// usable as ground truth for the reversal and change-of-measure identities.
// ============================================================================

struct DiscreteSpace {
    std::size_t dims = 1;            // d
    std::size_t states_per_dim = 2;  // S (data symbols)
    bool masked = false;             // adds null symbol 0; data symbols shift to 1..S

    std::size_t symbols() const { return states_per_dim + (masked ? 1 : 0); }

    std::size_t size() const {
        std::size_t total = 1;
        for (std::size_t i = 0; i < dims; ++i) {
            if (total > (std::size_t(1) << 40) / symbols())
                throw std::invalid_argument("DiscreteSpace: state count not representable");
            total *= symbols();
        }
        return total;
    }

    // Lexicographic enumeration, dimension 0 least significant.
    std::vector<int> index_to_state(std::size_t idx) const {
        std::vector<int> coords(dims);
        const std::size_t c = symbols();
        for (std::size_t i = 0; i < dims; ++i) {
            coords[i] = static_cast<int>(idx % c);
            idx /= c;
        }
        return coords;
    }

    std::size_t state_to_index(const std::vector<int>& coords) const {
        if (coords.size() != dims) throw std::invalid_argument("DiscreteSpace: wrong coord count");
        const std::size_t c = symbols();
        std::size_t idx = 0;
        for (std::size_t i = dims; i-- > 0;) {
            if (coords[i] < 0 || static_cast<std::size_t>(coords[i]) >= c)
                throw std::invalid_argument("DiscreteSpace: coordinate out of range");
            idx = idx * c + static_cast<std::size_t>(coords[i]);
        }
        return idx;
    }
};

// ----------------------------------------------------------------------------
// Forward chains
// ----------------------------------------------------------------------------

// Uniform chain as printed: rate 1/d to every state at Hamming distance one.
inline RateMatrix build_uniform_rate(const DiscreteSpace& space) {
    if (space.masked) throw std::invalid_argument("build_uniform_rate: space must be unmasked");
    const std::size_t n = space.size();
    const double rate = 1.0 / static_cast<double>(space.dims);
    RateMatrix rm(n);
    for (std::size_t from = 0; from < n; ++from) {
        std::vector<int> coords = space.index_to_state(from);
        for (std::size_t i = 0; i < space.dims; ++i) {
            const int keep = coords[i];
            for (int v = 0; v < static_cast<int>(space.states_per_dim); ++v) {
                if (v == keep) continue;
                coords[i] = v;
                rm.set_rate(space.state_to_index(coords), from, rate);
            }
            coords[i] = keep;
        }
    }
    rm.rebuild_diagonal();
    return rm;
}

// Masked chain: each non-null coordinate decays to the null symbol at rate 1.
// The all-null state is absorbing.
inline RateMatrix build_masked_rate(const DiscreteSpace& space) {
    if (!space.masked) throw std::invalid_argument("build_masked_rate: space must be masked");
    const std::size_t n = space.size();
    RateMatrix rm(n);
    for (std::size_t from = 0; from < n; ++from) {
        std::vector<int> coords = space.index_to_state(from);
        for (std::size_t i = 0; i < space.dims; ++i) {
            if (coords[i] == 0) continue;
            const int keep = coords[i];
            coords[i] = 0;
            rm.set_rate(space.state_to_index(coords), from, 1.0);
            coords[i] = keep;
        }
    }
    rm.rebuild_diagonal();
    return rm;
}

// Per-dimension uniform relaxation mass. The printed closed form divides the
// escaped mass by d, which only normalizes when S = d; we divide by S so each
// per-dimension law sums to one, and pair it with the rate scaling below.
inline double uniform_conditional(const DiscreteSpace& space, const std::vector<int>& x0,
                                  const std::vector<int>& xt, double t) {
    if (space.masked) throw std::invalid_argument("uniform_conditional: space must be unmasked");
    if (t < 0.0) throw std::invalid_argument("uniform_conditional: t must be >= 0");
    if (x0.size() != space.dims || xt.size() != space.dims)
        throw std::invalid_argument("uniform_conditional: dimension mismatch");
    const double stay = std::exp(-t);
    const double each = (1.0 - stay) / static_cast<double>(space.states_per_dim);
    double prob = 1.0;
    for (std::size_t i = 0; i < space.dims; ++i)
        prob *= (xt[i] == x0[i] ? stay + each : each);
    return prob;
}

// Two-point law per dimension on {x0^i, null}.
inline double masked_conditional(const DiscreteSpace& space, const std::vector<int>& x0,
                                 const std::vector<int>& xt, double t) {
    if (!space.masked) throw std::invalid_argument("masked_conditional: space must be masked");
    if (t < 0.0) throw std::invalid_argument("masked_conditional: t must be >= 0");
    if (x0.size() != space.dims || xt.size() != space.dims)
        throw std::invalid_argument("masked_conditional: dimension mismatch");
    const double stay = std::exp(-t);
    double prob = 1.0;
    for (std::size_t i = 0; i < space.dims; ++i) {
        if (x0[i] == 0) throw std::invalid_argument("masked_conditional: x0 contains null state");
        if (xt[i] == x0[i])
            prob *= stay;
        else if (xt[i] == 0)
            prob *= 1.0 - stay;
        else
            return 0.0;
    }
    return prob;
}

enum class DiscreteKind { Uniform, Masked };

// Closed-form conditional p_{t|0} with a per-dimension sampler; factorizes
// across dimensions by construction.
struct ConditionalLawDiscrete {
    DiscreteSpace space;
    DiscreteKind kind = DiscreteKind::Uniform;

    double evaluate(std::size_t x0, std::size_t xt, double t) const {
        const auto a = space.index_to_state(x0);
        const auto b = space.index_to_state(xt);
        return kind == DiscreteKind::Uniform ? uniform_conditional(space, a, b, t)
                                             : masked_conditional(space, a, b, t);
    }

    std::size_t sample(std::size_t x0, double t, Rng& rng) const {
        std::vector<int> coords = space.index_to_state(x0);
        const double stay = std::exp(-t);
        for (std::size_t i = 0; i < space.dims; ++i) {
            if (kind == DiscreteKind::Uniform) {
                if (rng.uniform() >= stay)
                    coords[i] = static_cast<int>(rng.uniform_index(space.states_per_dim));
            } else {
                if (coords[i] == 0)
                    throw std::invalid_argument("ConditionalLawDiscrete: x0 contains null state");
                if (rng.uniform() >= stay) coords[i] = 0;
            }
        }
        return space.state_to_index(coords);
    }
};

// Space + mutually consistent rate family and conditional law. For the uniform
// chain the family is the printed 1/d matrix scaled by d/S, which is exactly
// the chain whose per-dimension conditional is e^{-t} delta + (1 - e^{-t})/S.
struct DiscreteChain {
    DiscreteSpace space;
    RateFamily family;
    ConditionalLawDiscrete conditional;
};

inline DiscreteChain uniform_chain(const DiscreteSpace& space) {
    const double scale = static_cast<double>(space.dims) / static_cast<double>(space.states_per_dim);
    RateMatrix rm = build_uniform_rate(space).scaled(scale);
    return DiscreteChain{space, constant_family(std::move(rm)),
                         ConditionalLawDiscrete{space, DiscreteKind::Uniform}};
}

inline DiscreteChain masked_chain(const DiscreteSpace& space) {
    return DiscreteChain{space, constant_family(build_masked_rate(space)),
                         ConditionalLawDiscrete{space, DiscreteKind::Masked}};
}

// ----------------------------------------------------------------------------
// Kolmogorov forward integration
// ----------------------------------------------------------------------------

namespace detail {

inline Vec rk4_step(const RateFamily& family, const Vec& p, double t, double h) {
    const Vec k1 = matvec(family(t).matrix(), p);
    const Vec k2 = matvec(family(t + 0.5 * h).matrix(), axpy(0.5 * h, k1, p));
    const Vec k3 = matvec(family(t + 0.5 * h).matrix(), axpy(0.5 * h, k2, p));
    const Vec k4 = matvec(family(t + h).matrix(), axpy(h, k3, p));
    Vec out = p;
    for (std::size_t i = 0; i < p.size(); ++i)
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

}  // namespace detail

// Integrates dp/dt = L_t p from p0.time to t with step-doubling RK4 and local
// extrapolation; local error tolerance 1e-12, renormalization drift asserted
// below 1e-8.
inline DensityVector evolve_density(const RateFamily& family, const DensityVector& p0, double t,
                                    double tol = 1e-12) {
    if (t < p0.time) throw std::invalid_argument("evolve_density: target time before start");
    Vec p = p0.values;
    double now = p0.time;
    double h = std::max((t - now) / 16.0, 1e-12);
    std::size_t steps = 0;
    const std::size_t max_steps = 2000000;
    while (now < t) {
        if (++steps > max_steps) throw std::runtime_error("evolve_density: step budget exceeded");
        h = std::min(h, t - now);
        const Vec full = detail::rk4_step(family, p, now, h);
        Vec half = detail::rk4_step(family, p, now, 0.5 * h);
        half = detail::rk4_step(family, half, now + 0.5 * h, 0.5 * h);
        double err = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            err = std::max(err, std::fabs(full[i] - half[i]) / 15.0);
        if (err <= tol || h <= 1e-13) {
            for (std::size_t i = 0; i < p.size(); ++i)
                half[i] += (half[i] - full[i]) / 15.0;
            p = std::move(half);
            now += h;
            if (err < tol / 32.0) h *= 2.0;
        } else {
            h *= 0.5;
        }
    }
    double sum = 0.0;
    for (double& v : p) {
        if (v < 0.0 && v > -1e-10) v = 0.0;
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-8)
        throw std::runtime_error("evolve_density: renormalization drift above 1e-8");
    for (double& v : p) v /= sum;
    return DensityVector{std::move(p), t};
}

// ----------------------------------------------------------------------------
// Event-driven simulation
// ----------------------------------------------------------------------------

// Piecewise-constant cadlag path: states[i] holds on [times[i], times[i+1]),
// the last state up to the horizon.
struct JumpTrajectory {
    std::vector<double> times;
    std::vector<std::size_t> states;
    double horizon = 0.0;

    std::size_t state_at(double t) const {
        std::size_t lo = 0;
        for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) lo = i;
        return states[lo];
    }
};

// Exact simulation with exponential clocks. Rates are read at the moment each
// clock starts, so the result is exact for families that are constant between
// events (in particular for time-constant ones). Pass rate_bound to switch to
// thinning, which is exact for arbitrary bounded time-dependent rates.
inline JumpTrajectory gillespie_sample(const RateFamily& family, std::size_t x0, double horizon,
                                       Rng& rng, double rate_bound = 0.0) {
    JumpTrajectory traj;
    traj.horizon = horizon;
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    double now = 0.0;
    std::size_t x = x0;
    const std::size_t max_events = 50000000;
    std::size_t events = 0;
    while (now < horizon) {
        if (++events > max_events) throw std::runtime_error("gillespie_sample: unbounded rate?");
        RateMatrix rm = family(now);
        const double exit = rm.exit_rate(x);
        if (rate_bound > 0.0) {
            // Thinning against the global bound.
            if (exit > rate_bound) throw std::runtime_error("gillespie_sample: rate exceeds bound");
            now += rng.exponential(rate_bound);
            if (now >= horizon) break;
            rm = family(now);
            const double exit_now = rm.exit_rate(x);
            if (rng.uniform() * rate_bound >= exit_now) continue;  // phantom event
            double u = rng.uniform() * exit_now;
            std::size_t target = x;
            for (std::size_t y = 0; y < rm.size(); ++y) {
                if (y == x) continue;
                u -= rm.rate(y, x);
                if (u <= 0.0) {
                    target = y;
                    break;
                }
            }
            x = target;
        } else {
            if (exit <= 0.0) break;  // absorbing under constant rates
            now += rng.exponential(exit);
            if (now >= horizon) break;
            double u = rng.uniform() * exit;
            std::size_t target = x;
            for (std::size_t y = 0; y < rm.size(); ++y) {
                if (y == x) continue;
                u -= rm.rate(y, x);
                if (u <= 0.0) {
                    target = y;
                    break;
                }
            }
            x = target;
        }
        traj.times.push_back(now);
        traj.states.push_back(x);
    }
    return traj;
}

// ----------------------------------------------------------------------------
// Losses
// ----------------------------------------------------------------------------

// Score provider: t -> full ratio table at that time.
using ScoreProvider = std::function<ScoreTable(double)>;

// Time sampler for the training-time distribution Psi.
using TimeSampler = std::function<double(Rng&)>;

inline TimeSampler uniform_time(double t_min, double horizon) {
    if (!(0.0 < t_min && t_min < horizon)) throw std::invalid_argument("uniform_time: need 0 < t_min < T");
    return [=](Rng& rng) { return rng.uniform(t_min, horizon); };
}

inline TimeSampler log_uniform_time(double t_min, double horizon) {
    if (!(0.0 < t_min && t_min < horizon))
        throw std::invalid_argument("log_uniform_time: need 0 < t_min < T");
    const double lo = std::log(t_min), hi = std::log(horizon);
    return [=](Rng& rng) { return std::exp(rng.uniform(lo, hi)); };
}

// Monte Carlo estimate of the denoising score-matching objective for a
// finite-state chain: draw (x0, t, x_t), accumulate
//     sum_{y != x_t} (s_hat(x_t,y) - ratio * log s_hat(x_t,y)) * lambda(x_t, y)
// with ratio = p_{t|0}(y|x0) / p_{t|0}(x_t|x0). The dataset is an explicit
// multiset of states (the empirical p_hat_0). Deterministic given the rng.
inline double discrete_sm_loss(const ScoreProvider& s_hat, const DiscreteChain& chain,
                               const std::vector<std::size_t>& dataset, const TimeSampler& psi,
                               std::size_t batch, Rng& rng) {
    if (dataset.empty()) throw std::invalid_argument("discrete_sm_loss: empty dataset");
    const std::size_t n = chain.space.size();
    double total = 0.0;
    for (std::size_t k = 0; k < batch; ++k) {
        const std::size_t x0 = dataset[rng.uniform_index(dataset.size())];
        const double t = psi(rng);
        const std::size_t xt = chain.conditional.sample(x0, t, rng);
        const RateMatrix rm = chain.family(t);
        const ScoreTable table = s_hat(t);
        const double p_xt = chain.conditional.evaluate(x0, xt, t);
        double term = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == xt) continue;
            const double lam = rm.rate(xt, y);
            if (lam == 0.0) continue;
            const double sh = table(xt, y);
            if (sh <= 0.0) throw std::invalid_argument("discrete_sm_loss: nonpositive score");
            const double ratio = chain.conditional.evaluate(x0, y, t) / p_xt;
            term += (sh - ratio * std::log(sh)) * lam;
        }
        total += term;
    }
    return total / static_cast<double>(batch);
}

// Deterministic-quadrature evaluation of the path KL
//     L[eta] = int_0^T sum_x p_t(x) * kl_path_integrand(t, x) dt,
// Gauss-Legendre with the density refreshed node to node, node count doubled
// until the relative change falls below 1e-6.
inline double exact_path_kl(const RateFamily& family, const ScoreProvider& s_true,
                            const ScoreProvider& s_hat, const DensityVector& p0, double horizon,
                            std::size_t base_nodes = 64) {
    const auto evaluate = [&](std::size_t n_nodes) {
        const QuadratureRule rule = gauss_legendre(n_nodes, 0.0, horizon);
        DensityVector p = p0;
        double acc = 0.0;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            p = evolve_density(family, p, rule.nodes[i]);
            const RateMatrix rm = family(rule.nodes[i]);
            const ScoreTable st = s_true(rule.nodes[i]);
            const ScoreTable sh = s_hat(rule.nodes[i]);
            double spatial = 0.0;
            for (std::size_t x = 0; x < rm.size(); ++x) {
                if (p.values[x] == 0.0) continue;
                spatial += p.values[x] * kl_path_integrand(rm, st, sh, x);
            }
            acc += rule.weights[i] * spatial;
        }
        return acc;
    };
    double prev = evaluate(base_nodes);
    for (std::size_t n_nodes = base_nodes * 2; n_nodes <= 1024; n_nodes *= 2) {
        const double next = evaluate(n_nodes);
        if (std::fabs(next - prev) <= 1e-6 * std::max(1.0, std::fabs(next))) return next;
        prev = next;
    }
    throw std::runtime_error("exact_path_kl: quadrature failed to converge");
}

// Score tables from exact marginals, p_t evolved on demand.
inline ScoreProvider marginal_score_provider(const RateFamily& family, const DensityVector& p0) {
    return [family, p0](double t) {
        const DensityVector p = evolve_density(family, p0, t);
        Vec positive = p.values;
        for (double& v : positive) v = std::max(v, 1e-300);
        return ScoreTable::from_density(positive);
    };
}

}  // namespace dmm

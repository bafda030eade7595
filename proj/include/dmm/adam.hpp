#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dmm/linalg.hpp"

namespace dmm {

struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState make(std::size_t n_params, double learning_rate = 1e-3) {
        AdamState s;
        s.m.assign(n_params, 0.0);
        s.v.assign(n_params, 0.0);
        s.learning_rate = learning_rate;
        return s;
    }
};

// Standard bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, Vec& params, const Vec& grad) {
    if (params.size() != state.m.size() || grad.size() != state.m.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    state.step += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / b1t;
        const double v_hat = state.v[i] / b2t;
        params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

}  // namespace dmm

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dmm/linalg.hpp"
#include "dmm/rng.hpp"

namespace dmm {

// ============================================================================
// Small fully-connected network with hand-rolled reverse mode, sized for
// score parametrizations (default 5 layers x 128 hidden). Parameters live in
// one flat vector laid out layer by layer as [W row-major | b].
// ============================================================================

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_derivative(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

struct MlpSpec {
    std::vector<std::size_t> layer_sizes;  // [input, hidden..., output]

    static MlpSpec make(std::size_t input, std::size_t output, std::size_t hidden = 128,
                        std::size_t n_layers = 5) {
        // n_layers counts weight matrices; n_layers - 1 hidden activations.
        if (n_layers < 1) throw std::invalid_argument("MlpSpec: need at least one layer");
        MlpSpec spec;
        spec.layer_sizes.push_back(input);
        for (std::size_t i = 0; i + 1 < n_layers; ++i) spec.layer_sizes.push_back(hidden);
        spec.layer_sizes.push_back(output);
        return spec;
    }

    std::size_t layers() const { return layer_sizes.size() - 1; }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }

    std::size_t param_count() const {
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            total += (layer_sizes[l] + 1) * layer_sizes[l + 1];
        return total;
    }
};

struct MlpParams {
    MlpSpec spec;
    Vec theta;

    static MlpParams init(const MlpSpec& spec, Rng& rng) {
        MlpParams p;
        p.spec = spec;
        p.theta.assign(spec.param_count(), 0.0);
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
            const std::size_t fan_in = spec.layer_sizes[l];
            const std::size_t fan_out = spec.layer_sizes[l + 1];
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (std::size_t i = 0; i < fan_out * fan_in; ++i)
                p.theta[offset + i] = stddev * rng.normal();
            offset += fan_out * fan_in + fan_out;  // biases stay zero
        }
        return p;
    }

    void check_finite() const {
        for (double v : theta)
            if (!std::isfinite(v)) throw std::runtime_error("MlpParams: non-finite parameter");
    }
};

// Per-evaluation cache of pre-activations and activations, reused across
// calls to avoid allocation in hot loops.
struct MlpWorkspace {
    std::vector<Vec> pre;   // z_l = W_l a_{l-1} + b_l, per layer
    std::vector<Vec> act;   // a_0 = input, a_l = silu(z_l) (identity at output)
};

inline Vec mlp_forward(const MlpParams& params, const Vec& input, MlpWorkspace& ws) {
    const MlpSpec& spec = params.spec;
    if (input.size() != spec.input_dim()) throw std::invalid_argument("mlp_forward: input dim");
    const std::size_t n_layers = spec.layers();
    ws.pre.resize(n_layers);
    ws.act.resize(n_layers + 1);
    ws.act[0] = input;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t fan_in = spec.layer_sizes[l];
        const std::size_t fan_out = spec.layer_sizes[l + 1];
        ws.pre[l].assign(fan_out, 0.0);
        const double* w = &params.theta[offset];
        const double* b = &params.theta[offset + fan_out * fan_in];
        const Vec& a = ws.act[l];
        for (std::size_t o = 0; o < fan_out; ++o) {
            const double* row = w + o * fan_in;
            double acc = b[o];
            for (std::size_t i = 0; i < fan_in; ++i) acc += row[i] * a[i];
            ws.pre[l][o] = acc;
        }
        ws.act[l + 1].resize(fan_out);
        const bool last = (l + 1 == n_layers);
        for (std::size_t o = 0; o < fan_out; ++o)
            ws.act[l + 1][o] = last ? ws.pre[l][o] : silu(ws.pre[l][o]);
        offset += (fan_in + 1) * fan_out;
    }
    return ws.act[n_layers];
}

// Accumulates dL/dtheta into grad given dL/doutput; the workspace must hold
// the forward pass of the same input.
inline void mlp_backward(const MlpParams& params, const MlpWorkspace& ws, const Vec& out_cotangent,
                         Vec& grad) {
    const MlpSpec& spec = params.spec;
    const std::size_t n_layers = spec.layers();
    if (grad.size() != params.theta.size()) throw std::invalid_argument("mlp_backward: grad size");
    Vec delta = out_cotangent;  // dL/dz at the output layer (identity head)
    std::size_t offset = params.theta.size();
    for (std::size_t l = n_layers; l-- > 0;) {
        const std::size_t fan_in = spec.layer_sizes[l];
        const std::size_t fan_out = spec.layer_sizes[l + 1];
        offset -= (fan_in + 1) * fan_out;
        const double* w = &params.theta[offset];
        double* gw = &grad[offset];
        double* gb = &grad[offset + fan_out * fan_in];
        const Vec& a = ws.act[l];
        Vec prev(fan_in, 0.0);
        for (std::size_t o = 0; o < fan_out; ++o) {
            const double d = delta[o];
            gb[o] += d;
            double* grow = gw + o * fan_in;
            const double* wrow = w + o * fan_in;
            for (std::size_t i = 0; i < fan_in; ++i) {
                grow[i] += d * a[i];
                prev[i] += d * wrow[i];
            }
        }
        if (l > 0)
            for (std::size_t i = 0; i < fan_in; ++i) prev[i] *= silu_derivative(ws.pre[l - 1][i]);
        delta = std::move(prev);
    }
}

// ----------------------------------------------------------------------------
// Input embeddings
// ----------------------------------------------------------------------------

// Raw t/T plus four sin/cos frequency pairs; smooth near t_min.
struct TimeEmbedding {
    double horizon = 1.0;

    static constexpr std::size_t dim() { return 9; }

    void write(double t, double* out) const {
        const double tau = t / horizon;
        const double two_pi = 6.283185307179586;
        out[0] = tau;
        std::size_t idx = 1;
        for (double freq : {1.0, 2.0, 4.0, 8.0}) {
            out[idx++] = std::sin(two_pi * freq * tau);
            out[idx++] = std::cos(two_pi * freq * tau);
        }
    }
};

// Torus coordinate u -> (cos 2 pi k u, sin 2 pi k u), k = 1..modes; exactly
// periodic by construction.
struct FourierEmbedding {
    std::size_t modes = 8;

    std::size_t dim_per_axis() const { return 2 * modes; }

    void write(double u, double* out) const {
        const double two_pi = 6.283185307179586;
        const double c1 = std::cos(two_pi * u), s1 = std::sin(two_pi * u);
        double ck = 1.0, sk = 0.0;
        for (std::size_t k = 0; k < modes; ++k) {
            const double cn = ck * c1 - sk * s1;
            const double sn = sk * c1 + ck * s1;
            ck = cn;
            sk = sn;
            out[2 * k] = ck;
            out[2 * k + 1] = sk;
        }
    }
};

}  // namespace dmm

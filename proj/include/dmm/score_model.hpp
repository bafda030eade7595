#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dmm/diffusion.hpp"
#include "dmm/mlp.hpp"
#include "dmm/reverse.hpp"
#include "dmm/torus_jump.hpp"

namespace dmm {

// ============================================================================
// Score-model heads. Jump scores go through a scalar potential so the ratio
// structure (shat(x,x) = 1, cocycle) holds exactly; diffusion scores are a
// direct vector field. The GBM head consumes log x and its raw output is
// v = x .* shat, which keeps the regression target bounded where the
// conditional score blows up like 1/x near the origin.
// ============================================================================

// Scalar potential g_t(x) = log phi_t(x) on the torus, Fourier features per
// axis plus the time embedding.
struct JumpPotentialModel {
    FourierEmbedding fourier{8};
    TimeEmbedding time_embed{1.0};
    MlpParams params;

    static JumpPotentialModel make(double horizon, std::size_t modes, std::size_t hidden,
                                   std::size_t layers, Rng& rng) {
        JumpPotentialModel model;
        model.fourier.modes = modes;
        model.time_embed.horizon = horizon;
        const std::size_t input = 2 * model.fourier.dim_per_axis() + TimeEmbedding::dim();
        model.params = MlpParams::init(MlpSpec::make(input, 1, hidden, layers), rng);
        return model;
    }

    Vec embed(double t, const Vec& x) const {
        if (x.size() != 2) throw std::invalid_argument("JumpPotentialModel: torus state is 2-D");
        Vec input(2 * fourier.dim_per_axis() + TimeEmbedding::dim());
        fourier.write(x[0], input.data());
        fourier.write(x[1], input.data() + fourier.dim_per_axis());
        time_embed.write(t, input.data() + 2 * fourier.dim_per_axis());
        return input;
    }

    double potential(double t, const Vec& x) const {
        MlpWorkspace ws;
        return mlp_forward(params, embed(t, x), ws)[0];
    }

    Tape::Scalar potential_on_tape(Tape& tape, double t, const Vec& x) const {
        return tape.mlp_scalar(embed(t, x));
    }

    // Exact-ratio evaluator exp(g(y) - g(x)).
    JumpScoreEval evaluator() const {
        return JumpScoreEval{[this](double t, const Vec& x) { return potential(t, x); }};
    }
};

// Vector score field shat_t(x). kind Raw feeds x directly (OU-style models);
// kind GbmLog feeds log x and rescales the network output by 1/x.
struct DiffusionScoreModel {
    enum class Kind { Raw, GbmLog };

    Kind kind = Kind::Raw;
    std::size_t dim = 1;
    TimeEmbedding time_embed{1.0};
    MlpParams params;

    static DiffusionScoreModel make(Kind kind, std::size_t dim, double horizon, std::size_t hidden,
                                    std::size_t layers, Rng& rng) {
        DiffusionScoreModel model;
        model.kind = kind;
        model.dim = dim;
        model.time_embed.horizon = horizon;
        model.params = MlpParams::init(MlpSpec::make(dim + TimeEmbedding::dim(), dim, hidden, layers), rng);
        return model;
    }

    Vec embed(double t, const Vec& x) const {
        if (x.size() != dim) throw std::invalid_argument("DiffusionScoreModel: dim mismatch");
        Vec input(dim + TimeEmbedding::dim());
        for (std::size_t i = 0; i < dim; ++i) {
            if (kind == Kind::GbmLog) {
                if (x[i] <= 0.0)
                    throw std::invalid_argument("DiffusionScoreModel: GBM state must be positive");
                input[i] = std::log(x[i]);
            } else {
                input[i] = x[i];
            }
        }
        time_embed.write(t, input.data() + dim);
        return input;
    }

    Vec score(double t, const Vec& x) const {
        MlpWorkspace ws;
        Vec out = mlp_forward(params, embed(t, x), ws);
        if (kind == Kind::GbmLog)
            for (std::size_t i = 0; i < dim; ++i) out[i] /= x[i];
        return out;
    }

    std::vector<Tape::Scalar> score_on_tape(Tape& tape, double t, const Vec& x) const {
        std::vector<Tape::Scalar> out = tape.mlp(embed(t, x));
        if (kind == Kind::GbmLog)
            for (std::size_t i = 0; i < dim; ++i) out[i] = tape.mul_const(out[i], 1.0 / x[i]);
        return out;
    }

    DiffusionScoreEval evaluator() const {
        return [this](double t, const Vec& x) { return score(t, x); };
    }
};

struct DiscreteSpaceInfo {
    std::size_t dims = 1;
    std::size_t symbols = 2;
};

// Scalar potential over a finite product space; per-dimension one-hot input
// plus the time embedding. Ratio structure exact, as for the torus head.
struct FiniteStatePotentialModel {
    DiscreteSpaceInfo space_info;
    TimeEmbedding time_embed{1.0};
    MlpParams params;

    static FiniteStatePotentialModel make(std::size_t dims, std::size_t symbols, double horizon,
                                          std::size_t hidden, std::size_t layers, Rng& rng) {
        FiniteStatePotentialModel model;
        model.space_info = DiscreteSpaceInfo{dims, symbols};
        model.time_embed.horizon = horizon;
        const std::size_t input = dims * symbols + TimeEmbedding::dim();
        model.params = MlpParams::init(MlpSpec::make(input, 1, hidden, layers), rng);
        return model;
    }

    Vec embed(double t, const std::vector<int>& coords) const {
        Vec input(space_info.dims * space_info.symbols + TimeEmbedding::dim(), 0.0);
        for (std::size_t i = 0; i < space_info.dims; ++i) {
            const int c = coords[i];
            if (c < 0 || static_cast<std::size_t>(c) >= space_info.symbols)
                throw std::invalid_argument("FiniteStatePotentialModel: coordinate out of range");
            input[i * space_info.symbols + static_cast<std::size_t>(c)] = 1.0;
        }
        time_embed.write(t, input.data() + space_info.dims * space_info.symbols);
        return input;
    }

    double potential(double t, const std::vector<int>& coords) const {
        MlpWorkspace ws;
        return mlp_forward(params, embed(t, coords), ws)[0];
    }

    Tape::Scalar potential_on_tape(Tape& tape, double t, const std::vector<int>& coords) const {
        return tape.mlp_scalar(embed(t, coords));
    }
};

}  // namespace dmm

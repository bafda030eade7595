#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "dmm/mlp.hpp"

namespace dmm {

// ============================================================================
// Reverse-mode scalar tape for composing losses around network evaluations.
// Scalar arithmetic is recorded as compact enum ops; each MLP evaluation is a
// fused record holding its forward cache, so a loss like
//     sum_j exp(net(y_j) - net(x)) - b_j (net(y_j) - net(x))
// costs a handful of tape nodes plus the network passes themselves. backward()
// sweeps the scalar nodes, then flushes accumulated output cotangents through
// mlp_backward into the parameter gradient.
// ============================================================================

class Tape {
public:
    struct Scalar {
        int id = -1;
    };

    Tape(const MlpParams& params, Vec& grad) : params_(params), grad_(grad) {
        if (grad_.size() != params_.theta.size())
            throw std::invalid_argument("Tape: gradient vector size mismatch");
    }

    Scalar constant(double v) { return push(Op::Const, -1, -1, v, v); }

    // Leaf reading a raw parameter component; its adjoint lands directly in
    // the gradient vector.
    Scalar param(std::size_t index) {
        if (index >= params_.theta.size()) throw std::invalid_argument("Tape::param: index");
        return push(Op::Param, static_cast<int>(index), -1, 0.0, params_.theta[index]);
    }

    Scalar add(Scalar a, Scalar b) { return push(Op::Add, a.id, b.id, 0.0, val(a) + val(b)); }
    Scalar sub(Scalar a, Scalar b) { return push(Op::Sub, a.id, b.id, 0.0, val(a) - val(b)); }
    Scalar mul(Scalar a, Scalar b) { return push(Op::Mul, a.id, b.id, 0.0, val(a) * val(b)); }
    Scalar div(Scalar a, Scalar b) { return push(Op::Div, a.id, b.id, 0.0, val(a) / val(b)); }
    Scalar add_const(Scalar a, double c) { return push(Op::AddC, a.id, -1, c, val(a) + c); }
    Scalar mul_const(Scalar a, double c) { return push(Op::MulC, a.id, -1, c, val(a) * c); }
    Scalar exp(Scalar a) { return push(Op::Exp, a.id, -1, 0.0, std::exp(val(a))); }
    Scalar log(Scalar a) {
        if (val(a) <= 0.0) throw std::runtime_error("Tape::log: nonpositive argument");
        return push(Op::Log, a.id, -1, 0.0, std::log(val(a)));
    }
    Scalar square(Scalar a) { return mul(a, a); }

    // Network evaluation as a fused primitive; returns one Scalar per output.
    std::vector<Scalar> mlp(const Vec& input) {
        EvalRecord record;
        record.output = mlp_forward(params_, input, record.ws);
        record.cotangent.assign(record.output.size(), 0.0);
        record.first_node = static_cast<int>(nodes_.size());
        const int eval_id = static_cast<int>(evals_.size());
        std::vector<Scalar> out(record.output.size());
        for (std::size_t c = 0; c < record.output.size(); ++c)
            out[c] = push(Op::MlpOut, eval_id, static_cast<int>(c), 0.0, record.output[c]);
        evals_.push_back(std::move(record));
        return out;
    }

    Scalar mlp_scalar(const Vec& input) {
        auto out = mlp(input);
        if (out.size() != 1) throw std::invalid_argument("Tape::mlp_scalar: network not scalar");
        return out[0];
    }

    double value(Scalar s) const { return val(s); }

    // Seeds d(loss)/d(loss) = 1, sweeps the scalar graph in reverse, and
    // accumulates parameter gradients (losses may be backpropagated once per
    // tape).
    void backward(Scalar loss) {
        if (!std::isfinite(val(loss))) throw std::runtime_error("Tape::backward: non-finite loss");
        for (auto& n : nodes_) n.adj = 0.0;
        nodes_[static_cast<std::size_t>(loss.id)].adj = 1.0;
        for (std::size_t idx = nodes_.size(); idx-- > 0;) {
            const Node& n = nodes_[idx];
            const double adj = n.adj;
            if (adj == 0.0) continue;
            switch (n.op) {
                case Op::Const:
                    break;
                case Op::Param:
                    grad_[static_cast<std::size_t>(n.a)] += adj;
                    break;
                case Op::Add:
                    nodes_[n.a].adj += adj;
                    nodes_[n.b].adj += adj;
                    break;
                case Op::Sub:
                    nodes_[n.a].adj += adj;
                    nodes_[n.b].adj -= adj;
                    break;
                case Op::Mul:
                    nodes_[n.a].adj += adj * nodes_[n.b].val;
                    nodes_[n.b].adj += adj * nodes_[n.a].val;
                    break;
                case Op::Div:
                    nodes_[n.a].adj += adj / nodes_[n.b].val;
                    nodes_[n.b].adj -= adj * n.val / nodes_[n.b].val;
                    break;
                case Op::AddC:
                    nodes_[n.a].adj += adj;
                    break;
                case Op::MulC:
                    nodes_[n.a].adj += adj * n.aux;
                    break;
                case Op::Exp:
                    nodes_[n.a].adj += adj * n.val;
                    break;
                case Op::Log:
                    nodes_[n.a].adj += adj / nodes_[n.a].val;
                    break;
                case Op::MlpOut:
                    evals_[static_cast<std::size_t>(n.a)].cotangent[static_cast<std::size_t>(n.b)] +=
                        adj;
                    break;
            }
        }
        for (const EvalRecord& record : evals_) {
            bool any = false;
            for (double c : record.cotangent)
                if (c != 0.0) any = true;
            if (any) mlp_backward(params_, record.ws, record.cotangent, grad_);
        }
    }

private:
    enum class Op : std::uint8_t { Const, Param, Add, Sub, Mul, Div, AddC, MulC, Exp, Log, MlpOut };

    struct Node {
        Op op;
        int a;
        int b;
        double aux;
        double val;
        double adj;
    };

    struct EvalRecord {
        MlpWorkspace ws;
        Vec output;
        Vec cotangent;
        int first_node;
    };

    double val(Scalar s) const { return nodes_[static_cast<std::size_t>(s.id)].val; }

    Scalar push(Op op, int a, int b, double aux, double v) {
        nodes_.push_back(Node{op, a, b, aux, v, 0.0});
        return Scalar{static_cast<int>(nodes_.size() - 1)};
    }

    const MlpParams& params_;
    Vec& grad_;
    std::vector<Node> nodes_;
    std::vector<EvalRecord> evals_;
};

// Reverse-mode gradient of a tape-expressed loss; returns the loss value.
inline double loss_gradient(const MlpParams& params,
                            const std::function<Tape::Scalar(Tape&)>& build, Vec& grad) {
    grad.assign(params.theta.size(), 0.0);
    Tape tape(params, grad);
    const Tape::Scalar loss = build(tape);
    tape.backward(loss);
    return tape.value(loss);
}

// Central finite differences of an arbitrary parameter functional, the oracle
// the reverse mode is validated against.
inline Vec finite_difference_gradient(const MlpParams& params,
                                      const std::function<double(const MlpParams&)>& loss,
                                      double eps = 1e-5) {
    Vec grad(params.theta.size(), 0.0);
    MlpParams probe = params;
    for (std::size_t i = 0; i < params.theta.size(); ++i) {
        const double keep = probe.theta[i];
        probe.theta[i] = keep + eps;
        const double up = loss(probe);
        probe.theta[i] = keep - eps;
        const double down = loss(probe);
        probe.theta[i] = keep;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

}  // namespace dmm

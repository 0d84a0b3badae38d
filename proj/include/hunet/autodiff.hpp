#pragma once

// Reverse-mode automatic differentiation over dense tensors. A Graph owns a
// tape of nodes in topological (creation) order; backward() walks it once in
// reverse, accumulating gradients into every node that can reach a parameter.
//
// The op set is exactly what the network needs. No general broadcasting; the
// only broadcasts are the latent-to-spatial expansion and per-channel
// parameter grids applied across a batch.

#include <functional>
#include <vector>

#include "hunet/kernels.hpp"
#include "hunet/tensor.hpp"

namespace hunet {

class Graph;

struct Var {
    Graph* g = nullptr;
    int id = -1;
};

class Graph {
public:
    // Called with the node's own id; reads its grad, accumulates into parents.
    using BackFn = std::function<void(Graph&, int self)>;

    Var input(Tensor v) { return make(std::move(v), false, nullptr); }
    Var param(Tensor v) { return make(std::move(v), true, nullptr); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient buffer of node `id`, or nullptr when nothing upstream needs
    // it. Allocates (zeroed) on first use within a backward pass.
    Tensor* grad_for_accum(int id) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return nullptr;
        if (!n.grad_live) {
            n.grad = Tensor::zeros(n.value.shape);
            n.grad_live = true;
        }
        return &n.grad;
    }

    // Internal: append an op node. `requires_grad` is derived from parents by
    // the op helpers; `back` may be null for leaves.
    Var make(Tensor value, bool requires_grad, BackFn back) {
        nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), requires_grad, false});
        return Var{this, static_cast<int>(nodes_.size() - 1)};
    }

    void backward(Var loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackFn back;
        bool requires_grad = false;
        bool grad_live = false;
    };
    std::vector<Node> nodes_;
};

// ---- elementwise ----------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var relu(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return mul_scalar(a, s); }

// ---- reductions -----------------------------------------------------------
Var sum(Var x);
Var mean(Var x);

// ---- shape ----------------------------------------------------------------
// [B,Ca,H,W] ++ [B,Cb,H,W] -> [B,Ca+Cb,H,W]
Var concat_channels(Var a, Var b);
// [B,D] -> [B,D,H,W], each latent entry filling one constant plane
Var broadcast_spatial(Var v, int h, int w);
// [B,C,H,W] -> [B,C]
Var global_avg_pool(Var x);

// ---- neural ops -----------------------------------------------------------
// x[B,Cin,H,W], w[Cout,Cin,kh,kw], b[Cout]; stride 1, same padding
Var conv2d(Var x, Var w, Var b, PadMode pad);
// 2x2 mean pooling, stride 2
Var avgpool2d(Var x);
// x[B,K], w[O,K], b[O] -> [B,O]
Var linear(Var x, Var w, Var b);

// ---- transform-domain ops -------------------------------------------------
// Orthogonal 2D Hadamard transform of each [M,M] plane (self-inverse, and
// self-adjoint, so backward applies the same transform).
Var hadamard2d(Var x);
// y = x * w with w[C,M,M] shared across the batch
Var scale_channels(Var x, Var w);
// y = sign(x) * max(|x| - t, 0), t[C,M,M] nonnegative, shared across the
// batch. d/dx = 1[|x|>t]; d/dt = -sign(x) * 1[|x|>t].
Var soft_threshold(Var x, Var t);
// y = x * 1[|x| > t], t[C,M,M] nonnegative, shared across the batch.
// d/dx = 1[|x|>t]; d/dt = -sign(x) * 1[|x|>t] (the soft-threshold branch;
// the magnitude-restoration term is treated as constant in t).
Var hard_threshold(Var x, Var t);
// mean of |horizontal diffs| + |vertical diffs| per plane, / (H*W), averaged
// over batch and channels; subgradient 0 at ties
Var total_variation(Var x);

} // namespace hunet

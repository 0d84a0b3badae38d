#include "hunet/autodiff.hpp"

#include <cmath>

#include "hunet/wht.hpp"

namespace hunet {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace

void Graph::backward(Var loss) {
    if (loss.g != this) throw ContractError("backward: variable belongs to another graph");
    Node& ln = nodes_[loss.id];
    if (ln.value.rank() != 0) throw ContractError("backward: loss must be a scalar tensor");

    for (Node& n : nodes_) n.grad_live = false;

    if (!ln.requires_grad) return; // loss does not depend on any parameter
    ln.grad = Tensor::scalar(1.0);
    ln.grad_live = true;

    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad_live && n.back) n.back(*this, id);
    }
}

namespace {

// Appends an op node whose requires_grad is inherited from its parents.
Var make_op(Graph* g, Tensor value, std::initializer_list<Var> parents, Graph::BackFn back) {
    bool rg = false;
    for (Var p : parents) {
        if (p.g != g) throw ContractError("op: operands belong to different graphs");
        rg = rg || g->requires_grad(p);
    }
    return g->make(std::move(value), rg, rg ? std::move(back) : Graph::BackFn{});
}

using Fwd = double (*)(double);

} // namespace

// ---- elementwise binary ----------------------------------------------------

Var add(Var a, Var b) {
    const Tensor& va = a.g->value(a);
    const Tensor& vb = b.g->value(b);
    require_same_shape(va, vb, "add");
    Tensor out(va.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = va.data[i] + vb.data[i];
    return make_op(a.g, std::move(out), {a, b}, [a, b](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* ga = g.grad_for_accum(a.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) ga->data[i] += gout.data[i];
        if (Tensor* gb = g.grad_for_accum(b.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) gb->data[i] += gout.data[i];
    });
}

Var sub(Var a, Var b) {
    const Tensor& va = a.g->value(a);
    const Tensor& vb = b.g->value(b);
    require_same_shape(va, vb, "sub");
    Tensor out(va.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = va.data[i] - vb.data[i];
    return make_op(a.g, std::move(out), {a, b}, [a, b](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* ga = g.grad_for_accum(a.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) ga->data[i] += gout.data[i];
        if (Tensor* gb = g.grad_for_accum(b.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) gb->data[i] -= gout.data[i];
    });
}

Var mul(Var a, Var b) {
    const Tensor& va = a.g->value(a);
    const Tensor& vb = b.g->value(b);
    require_same_shape(va, vb, "mul");
    Tensor out(va.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = va.data[i] * vb.data[i];
    return make_op(a.g, std::move(out), {a, b}, [a, b](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& va = g.value(a);
        const Tensor& vb = g.value(b);
        if (Tensor* ga = g.grad_for_accum(a.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) ga->data[i] += gout.data[i] * vb.data[i];
        if (Tensor* gb = g.grad_for_accum(b.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) gb->data[i] += gout.data[i] * va.data[i];
    });
}

Var div(Var a, Var b) {
    const Tensor& va = a.g->value(a);
    const Tensor& vb = b.g->value(b);
    require_same_shape(va, vb, "div");
    Tensor out(va.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = va.data[i] / vb.data[i];
    return make_op(a.g, std::move(out), {a, b}, [a, b](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& va = g.value(a);
        const Tensor& vb = g.value(b);
        if (Tensor* ga = g.grad_for_accum(a.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) ga->data[i] += gout.data[i] / vb.data[i];
        if (Tensor* gb = g.grad_for_accum(b.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i)
                gb->data[i] -= gout.data[i] * va.data[i] / (vb.data[i] * vb.data[i]);
    });
}

Var add_scalar(Var a, double s) {
    Tensor out = a.g->value(a);
    for (auto& v : out.data) v += s;
    return make_op(a.g, std::move(out), {a}, [a](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* ga = g.grad_for_accum(a.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) ga->data[i] += gout.data[i];
    });
}

Var mul_scalar(Var a, double s) {
    Tensor out = a.g->value(a);
    for (auto& v : out.data) v *= s;
    return make_op(a.g, std::move(out), {a}, [a, s](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* ga = g.grad_for_accum(a.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) ga->data[i] += s * gout.data[i];
    });
}

// ---- elementwise unary ------------------------------------------------------

Var relu(Var x) {
    const Tensor& vx = x.g->value(x);
    Tensor out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = vx.data[i] > 0.0 ? vx.data[i] : 0.0;
    return make_op(x.g, std::move(out), {x}, [x](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& vx = g.value(x);
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i)
                if (vx.data[i] > 0.0) gx->data[i] += gout.data[i];
    });
}

Var sigmoid(Var x) {
    const Tensor& vx = x.g->value(x);
    Tensor out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = stable_sigmoid(vx.data[i]);
    return make_op(x.g, std::move(out), {x}, [x](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& y = g.value(Var{&g, self});
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i)
                gx->data[i] += gout.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
}

Var softplus(Var x) {
    const Tensor& vx = x.g->value(x);
    Tensor out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = stable_softplus(vx.data[i]);
    return make_op(x.g, std::move(out), {x}, [x](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& vx = g.value(x);
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i)
                gx->data[i] += gout.data[i] * stable_sigmoid(vx.data[i]);
    });
}

Var exp(Var x) {
    const Tensor& vx = x.g->value(x);
    Tensor out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = std::exp(vx.data[i]);
    return make_op(x.g, std::move(out), {x}, [x](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& y = g.value(Var{&g, self});
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) gx->data[i] += gout.data[i] * y.data[i];
    });
}

Var log(Var x) {
    const Tensor& vx = x.g->value(x);
    Tensor out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = std::log(vx.data[i]);
    return make_op(x.g, std::move(out), {x}, [x](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& vx = g.value(x);
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i) gx->data[i] += gout.data[i] / vx.data[i];
    });
}

Var sqrt(Var x) {
    const Tensor& vx = x.g->value(x);
    Tensor out(vx.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = std::sqrt(vx.data[i]);
    return make_op(x.g, std::move(out), {x}, [x](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& y = g.value(Var{&g, self});
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (std::int64_t i = 0; i < gout.numel(); ++i)
                gx->data[i] += gout.data[i] * 0.5 / y.data[i];
    });
}

// ---- reductions -------------------------------------------------------------

Var sum(Var x) {
    const Tensor& vx = x.g->value(x);
    double acc = 0.0;
    for (double v : vx.data) acc += v;
    return make_op(x.g, Tensor::scalar(acc), {x}, [x](Graph& g, int self) {
        const double gout = g.grad(Var{&g, self}).data[0];
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (auto& v : gx->data) v += gout;
    });
}

Var mean(Var x) {
    const Tensor& vx = x.g->value(x);
    if (vx.numel() == 0) throw ContractError("mean of empty tensor");
    double acc = 0.0;
    for (double v : vx.data) acc += v;
    const double inv = 1.0 / static_cast<double>(vx.numel());
    return make_op(x.g, Tensor::scalar(acc * inv), {x}, [x, inv](Graph& g, int self) {
        const double gout = g.grad(Var{&g, self}).data[0] * inv;
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (auto& v : gx->data) v += gout;
    });
}

// ---- shape ------------------------------------------------------------------

Var concat_channels(Var a, Var b) {
    const Tensor& va = a.g->value(a);
    const Tensor& vb = b.g->value(b);
    if (va.rank() != 4 || vb.rank() != 4 || va.shape[0] != vb.shape[0] || va.shape[2] != vb.shape[2] ||
        va.shape[3] != vb.shape[3])
        throw DimensionError("concat_channels: incompatible shapes " + va.shape_str() + " vs " + vb.shape_str());
    const int B = va.shape[0], Ca = va.shape[1], Cb = vb.shape[1], H = va.shape[2], W = va.shape[3];
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor out({B, Ca + Cb, H, W});
    for (int bi = 0; bi < B; ++bi) {
        std::copy_n(va.data.begin() + bi * Ca * plane, Ca * plane,
                    out.data.begin() + static_cast<std::int64_t>(bi) * (Ca + Cb) * plane);
        std::copy_n(vb.data.begin() + bi * Cb * plane, Cb * plane,
                    out.data.begin() + static_cast<std::int64_t>(bi) * (Ca + Cb) * plane + Ca * plane);
    }
    return make_op(a.g, std::move(out), {a, b}, [a, b, B, Ca, Cb, plane](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* ga = g.grad_for_accum(a.id))
            for (int bi = 0; bi < B; ++bi)
                for (std::int64_t i = 0; i < Ca * plane; ++i)
                    ga->data[bi * Ca * plane + i] += gout.data[bi * (Ca + Cb) * plane + i];
        if (Tensor* gb = g.grad_for_accum(b.id))
            for (int bi = 0; bi < B; ++bi)
                for (std::int64_t i = 0; i < Cb * plane; ++i)
                    gb->data[bi * Cb * plane + i] += gout.data[bi * (Ca + Cb) * plane + Ca * plane + i];
    });
}

Var broadcast_spatial(Var v, int h, int w) {
    const Tensor& vv = v.g->value(v);
    if (vv.rank() != 2) throw DimensionError("broadcast_spatial expects [B,D]");
    const int B = vv.shape[0], D = vv.shape[1];
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    Tensor out({B, D, h, w});
    for (int bi = 0; bi < B; ++bi)
        for (int d = 0; d < D; ++d)
            std::fill_n(out.data.begin() + (static_cast<std::int64_t>(bi) * D + d) * plane, plane,
                        vv.data[bi * D + d]);
    return make_op(v.g, std::move(out), {v}, [v, B, D, plane](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* gv = g.grad_for_accum(v.id)) {
            for (int bi = 0; bi < B; ++bi)
                for (int d = 0; d < D; ++d) {
                    double acc = 0.0;
                    const double* src = gout.data.data() + (static_cast<std::int64_t>(bi) * D + d) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
                    gv->data[bi * D + d] += acc;
                }
        }
    });
}

Var global_avg_pool(Var x) {
    const Tensor& vx = x.g->value(x);
    if (vx.rank() != 4) throw DimensionError("global_avg_pool expects [B,C,H,W]");
    const int B = vx.shape[0], C = vx.shape[1];
    const std::int64_t plane = static_cast<std::int64_t>(vx.shape[2]) * vx.shape[3];
    Tensor out({B, C});
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(B) * C; ++p) {
        double acc = 0.0;
        const double* src = vx.data.data() + p * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
        out.data[p] = acc * inv;
    }
    return make_op(x.g, std::move(out), {x}, [x, B, C, plane, inv](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* gx = g.grad_for_accum(x.id)) {
            for (std::int64_t p = 0; p < static_cast<std::int64_t>(B) * C; ++p) {
                const double gv = gout.data[p] * inv;
                double* dst = gx->data.data() + p * plane;
                for (std::int64_t i = 0; i < plane; ++i) dst[i] += gv;
            }
        }
    });
}

// ---- neural ops --------------------------------------------------------------

Var conv2d(Var x, Var w, Var b, PadMode pad) {
    const Tensor& vx = x.g->value(x);
    const Tensor& vw = w.g->value(w);
    const Tensor& vb = b.g->value(b);
    if (vx.rank() != 4 || vw.rank() != 4) throw DimensionError("conv2d expects x[B,Cin,H,W], w[Cout,Cin,kh,kw]");
    if (vx.shape[1] != vw.shape[1])
        throw DimensionError("conv2d: channel mismatch, input has " + std::to_string(vx.shape[1]) +
                             ", kernel expects " + std::to_string(vw.shape[1]));
    if (vb.rank() != 1 || vb.shape[0] != vw.shape[0]) throw DimensionError("conv2d: bias shape mismatch");
    const int B = vx.shape[0], Cin = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    const int Cout = vw.shape[0], kh = vw.shape[2], kw = vw.shape[3];

    Tensor out({B, Cout, H, W});
    conv2d_forward<double>(vx.data.data(), B, Cin, H, W, vw.data.data(), Cout, kh, kw, vb.data.data(),
                           pad, out.data.data());
    return make_op(x.g, std::move(out), {x, w, b},
                   [x, w, b, B, Cin, H, W, Cout, kh, kw, pad](Graph& g, int self) {
                       const Tensor& gout = g.grad(Var{&g, self});
                       const Tensor& vx = g.value(x);
                       const Tensor& vw = g.value(w);
                       Tensor* gx = g.grad_for_accum(x.id);
                       Tensor* gw = g.grad_for_accum(w.id);
                       Tensor* gb = g.grad_for_accum(b.id);
                       conv2d_backward<double>(vx.data.data(), gout.data.data(), B, Cin, H, W,
                                               vw.data.data(), Cout, kh, kw, pad,
                                               gx ? gx->data.data() : nullptr,
                                               gw ? gw->data.data() : nullptr,
                                               gb ? gb->data.data() : nullptr);
                   });
}

Var avgpool2d(Var x) {
    const Tensor& vx = x.g->value(x);
    if (vx.rank() != 4) throw DimensionError("avgpool2d expects [B,C,H,W]");
    const int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    if (H % 2 || W % 2) throw DimensionError("avgpool2d: odd extent " + vx.shape_str());
    Tensor out({B, C, H / 2, W / 2});
    avgpool2d_forward<double>(vx.data.data(), B, C, H, W, out.data.data());
    return make_op(x.g, std::move(out), {x}, [x, B, C, H, W](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* gx = g.grad_for_accum(x.id))
            avgpool2d_backward<double>(gout.data.data(), B, C, H, W, gx->data.data());
    });
}

Var linear(Var x, Var w, Var b) {
    const Tensor& vx = x.g->value(x);
    const Tensor& vw = w.g->value(w);
    const Tensor& vb = b.g->value(b);
    if (vx.rank() != 2 || vw.rank() != 2) throw DimensionError("linear expects x[B,K], w[O,K]");
    if (vx.shape[1] != vw.shape[1]) throw DimensionError("linear: inner dimension mismatch");
    if (vb.rank() != 1 || vb.shape[0] != vw.shape[0]) throw DimensionError("linear: bias shape mismatch");
    const int B = vx.shape[0], K = vx.shape[1], O = vw.shape[0];

    Tensor out({B, O});
    for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < O; ++o) out.data[static_cast<std::int64_t>(bi) * O + o] = vb.data[o];
    gemm_acc_nt<double>(B, O, K, vx.data.data(), K, vw.data.data(), K, out.data.data(), O);
    return make_op(x.g, std::move(out), {x, w, b}, [x, w, b, B, K, O](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& vx = g.value(x);
        const Tensor& vw = g.value(w);
        if (Tensor* gx = g.grad_for_accum(x.id))
            gemm_acc<double>(B, K, O, gout.data.data(), O, vw.data.data(), K, gx->data.data(), K);
        if (Tensor* gw = g.grad_for_accum(w.id))
            gemm_acc_tn<double>(O, K, B, gout.data.data(), O, vx.data.data(), K, gw->data.data(), K);
        if (Tensor* gb = g.grad_for_accum(b.id))
            for (int bi = 0; bi < B; ++bi)
                for (int o = 0; o < O; ++o) gb->data[o] += gout.data[static_cast<std::int64_t>(bi) * O + o];
    });
}

// ---- transform-domain ops -----------------------------------------------------

Var hadamard2d(Var x) {
    const Tensor& vx = x.g->value(x);
    if (vx.rank() != 4) throw DimensionError("hadamard2d expects [B,C,M,M]");
    const int B = vx.shape[0], C = vx.shape[1], M = vx.shape[2];
    if (vx.shape[3] != M) throw DimensionError("hadamard2d: planes must be square");
    require_pow2(M, "hadamard2d side");
    const std::int64_t plane = static_cast<std::int64_t>(M) * M;

    Tensor out = vx;
    const std::int64_t planes = static_cast<std::int64_t>(B) * C;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) ht_2d_inplace(out.data.data() + p * plane, M);

    return make_op(x.g, std::move(out), {x}, [x, planes, plane, M](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        if (Tensor* gx = g.grad_for_accum(x.id)) {
            Tensor tmp = gout;
#pragma omp parallel for schedule(static)
            for (std::int64_t p = 0; p < planes; ++p) ht_2d_inplace(tmp.data.data() + p * plane, M);
            for (std::int64_t i = 0; i < tmp.numel(); ++i) gx->data[i] += tmp.data[i];
        }
    });
}

namespace {

void require_channel_param(const Tensor& x, const Tensor& p, const char* op) {
    if (x.rank() != 4 || p.rank() != 3 || x.shape[1] != p.shape[0] || x.shape[2] != p.shape[1] ||
        x.shape[3] != p.shape[2])
        throw DimensionError(std::string(op) + ": parameter " + p.shape_str() + " does not match input " +
                             x.shape_str());
}

} // namespace

Var scale_channels(Var x, Var w) {
    const Tensor& vx = x.g->value(x);
    const Tensor& vw = w.g->value(w);
    require_channel_param(vx, vw, "scale_channels");
    const int B = vx.shape[0];
    const std::int64_t chw = vw.numel();
    Tensor out(vx.shape);
    for (int bi = 0; bi < B; ++bi) {
        const double* src = vx.data.data() + bi * chw;
        double* dst = out.data.data() + bi * chw;
        for (std::int64_t i = 0; i < chw; ++i) dst[i] = src[i] * vw.data[i];
    }
    return make_op(x.g, std::move(out), {x, w}, [x, w, B, chw](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& vx = g.value(x);
        const Tensor& vw = g.value(w);
        if (Tensor* gx = g.grad_for_accum(x.id))
            for (int bi = 0; bi < B; ++bi)
                for (std::int64_t i = 0; i < chw; ++i)
                    gx->data[bi * chw + i] += gout.data[bi * chw + i] * vw.data[i];
        if (Tensor* gw = g.grad_for_accum(w.id))
            for (int bi = 0; bi < B; ++bi)
                for (std::int64_t i = 0; i < chw; ++i)
                    gw->data[i] += gout.data[bi * chw + i] * vx.data[bi * chw + i];
    });
}

Var soft_threshold(Var x, Var t) {
    const Tensor& vx = x.g->value(x);
    const Tensor& vt = t.g->value(t);
    require_channel_param(vx, vt, "soft_threshold");
    for (double tv : vt.data)
        if (tv < 0.0) throw ContractError("soft_threshold: thresholds must be nonnegative");
    const int B = vx.shape[0];
    const std::int64_t chw = vt.numel();
    Tensor out(vx.shape);
    for (int bi = 0; bi < B; ++bi)
        for (std::int64_t i = 0; i < chw; ++i) {
            const double v = vx.data[bi * chw + i];
            const double m = std::abs(v) - vt.data[i];
            out.data[bi * chw + i] = m > 0.0 ? sign0(v) * m : 0.0;
        }
    return make_op(x.g, std::move(out), {x, t}, [x, t, B, chw](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& vx = g.value(x);
        const Tensor& vt = g.value(t);
        Tensor* gx = g.grad_for_accum(x.id);
        Tensor* gt = g.grad_for_accum(t.id);
        for (int bi = 0; bi < B; ++bi)
            for (std::int64_t i = 0; i < chw; ++i) {
                const double v = vx.data[bi * chw + i];
                if (std::abs(v) > vt.data[i]) {
                    const double go = gout.data[bi * chw + i];
                    if (gx) gx->data[bi * chw + i] += go;
                    if (gt) gt->data[i] -= sign0(v) * go;
                }
            }
    });
}

Var hard_threshold(Var x, Var t) {
    const Tensor& vx = x.g->value(x);
    const Tensor& vt = t.g->value(t);
    require_channel_param(vx, vt, "hard_threshold");
    for (double tv : vt.data)
        if (tv < 0.0) throw ContractError("hard_threshold: thresholds must be nonnegative");
    const int B = vx.shape[0];
    const std::int64_t chw = vt.numel();
    Tensor out(vx.shape);
    for (int bi = 0; bi < B; ++bi)
        for (std::int64_t i = 0; i < chw; ++i) {
            const double v = vx.data[bi * chw + i];
            out.data[bi * chw + i] = std::abs(v) > vt.data[i] ? v : 0.0;
        }
    return make_op(x.g, std::move(out), {x, t}, [x, t, B, chw](Graph& g, int self) {
        const Tensor& gout = g.grad(Var{&g, self});
        const Tensor& vx = g.value(x);
        const Tensor& vt = g.value(t);
        Tensor* gx = g.grad_for_accum(x.id);
        Tensor* gt = g.grad_for_accum(t.id);
        for (int bi = 0; bi < B; ++bi)
            for (std::int64_t i = 0; i < chw; ++i) {
                const double v = vx.data[bi * chw + i];
                if (std::abs(v) > vt.data[i]) {
                    const double go = gout.data[bi * chw + i];
                    if (gx) gx->data[bi * chw + i] += go;
                    if (gt) gt->data[i] -= sign0(v) * go;
                }
            }
    });
}

Var total_variation(Var x) {
    const Tensor& vx = x.g->value(x);
    if (vx.rank() != 4) throw DimensionError("total_variation expects [B,C,H,W]");
    const int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const double norm = 1.0 / (static_cast<double>(B) * C * plane);

    double acc = 0.0;
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(B) * C; ++p) {
        const double* u = vx.data.data() + p * plane;
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx + 1 < W; ++xx) acc += std::abs(u[yy * W + xx + 1] - u[yy * W + xx]);
        for (int yy = 0; yy + 1 < H; ++yy)
            for (int xx = 0; xx < W; ++xx) acc += std::abs(u[(yy + 1) * W + xx] - u[yy * W + xx]);
    }
    return make_op(x.g, Tensor::scalar(acc * norm), {x}, [x, B, C, H, W, plane, norm](Graph& g, int self) {
        const double gout = g.grad(Var{&g, self}).data[0] * norm;
        const Tensor& vx = g.value(x);
        if (Tensor* gx = g.grad_for_accum(x.id)) {
            for (std::int64_t p = 0; p < static_cast<std::int64_t>(B) * C; ++p) {
                const double* u = vx.data.data() + p * plane;
                double* d = gx->data.data() + p * plane;
                for (int yy = 0; yy < H; ++yy)
                    for (int xx = 0; xx + 1 < W; ++xx) {
                        const double s = sign0(u[yy * W + xx + 1] - u[yy * W + xx]) * gout;
                        d[yy * W + xx + 1] += s;
                        d[yy * W + xx] -= s;
                    }
                for (int yy = 0; yy + 1 < H; ++yy)
                    for (int xx = 0; xx < W; ++xx) {
                        const double s = sign0(u[(yy + 1) * W + xx] - u[yy * W + xx]) * gout;
                        d[(yy + 1) * W + xx] += s;
                        d[yy * W + xx] -= s;
                    }
            }
        }
    });
}

} // namespace hunet

#include "hunet/optim.hpp"

#include <cmath>

namespace hunet {

void AdamW::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) throw DimensionError("adamw: params/grads count mismatch");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.emplace_back(Tensor::zeros(p->shape));
            v_.emplace_back(Tensor::zeros(p->shape));
        }
    }
    if (m_.size() != params.size()) throw DimensionError("adamw: parameter count changed between steps");

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(m_[i]))
            throw DimensionError("adamw: shape mismatch on parameter " + std::to_string(i));
        double* mp = m_[i].data.data();
        double* vp = v_[i].data.data();
        double* pp = p.data.data();
        const double* gp = g.data.data();
        const std::int64_t n = p.numel();
        for (std::int64_t e = 0; e < n; ++e) {
            mp[e] = cfg_.beta1 * mp[e] + (1.0 - cfg_.beta1) * gp[e];
            vp[e] = cfg_.beta2 * vp[e] + (1.0 - cfg_.beta2) * gp[e] * gp[e];
            const double mhat = mp[e] / bc1;
            const double vhat = vp[e] / bc2;
            pp[e] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * pp[e]);
        }
    }
}

} // namespace hunet

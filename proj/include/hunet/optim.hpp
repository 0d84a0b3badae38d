#pragma once

// AdamW: Adam moment estimates with decoupled weight decay.

#include <cstdint>
#include <vector>

#include "hunet/tensor.hpp"

namespace hunet {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    // params[i] and grads[i] must stay shape-stable across steps; moment
    // slots are allocated on the first call.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    std::int64_t steps_taken() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

} // namespace hunet

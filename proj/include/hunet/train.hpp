#pragma once

// Training loop: AdamW over the hybrid loss, per-epoch loss records and
// checkpoints, deterministic under a fixed seed.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hunet/losses.hpp"
#include "hunet/model.hpp"
#include "hunet/optim.hpp"

namespace hunet {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 128;
    int epochs = 100;
    double weight_decay = 1e-2;
    std::uint64_t seed = 0;
    int image_size = 256;
    int latent_dim = 6;
    LossWeights weights;

    // laptop-scale settings used by the synthetic-recovery experiments
    static TrainConfig desk() {
        TrainConfig c;
        c.batch_size = 16;
        c.epochs = 30;
        c.image_size = 64;
        return c;
    }
};

struct TrainPair {
    std::vector<double> x; // biased input slice
    std::vector<double> y; // reference slice
};

// One row per epoch; components carry their lambda weights applied.
struct EpochRecord {
    int epoch = 0;
    double kl_latent = 0.0;
    double sparsity = 0.0;
    double tv = 0.0;
    double mse = 0.0;
    double total = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochRecord> history;
};

// Runs cfg.epochs epochs (numbering continues from resume->epoch when a
// resume checkpoint is given; optimizer moments start fresh either way).
// When checkpoint_path is nonempty the latest parameters are written there
// after every epoch. Aborts with NonFiniteError naming the first non-finite
// loss component.
TrainResult train(const std::vector<TrainPair>& data, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "",
                  const std::optional<ModelParams>& resume = std::nullopt,
                  const std::function<void(const EpochRecord&, const ModelParams&)>& on_epoch = nullptr,
                  int max_steps = 0 /* 0 = no cap; used by determinism checks */);

} // namespace hunet

#pragma once

// The full probabilistic model: a Hadamard U-Net that extracts the
// multiplicative scalar field, a prior/posterior encoder pair over a
// low-dimensional latent Gaussian, and a 1x1-conv fusion head that turns the
// prototype corrected image plus a latent sample into the final output.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "hunet/autodiff.hpp"
#include "hunet/hadamard_layers.hpp"
#include "hunet/losses.hpp"
#include "hunet/rng.hpp"
#include "hunet/tensor.hpp"

namespace hunet {

struct ModelConfig {
    int image_size = 64; // M, power of two
    int latent_dim = 6;  // D

    // architecture constants
    static constexpr int kOuterKernel = 16;
    static constexpr int kInnerKernel = 7;
    static constexpr int kWide = 32;
    static constexpr int kWider = 64;
    static constexpr int kEncKernel = 3;
    static constexpr int kFuseChannels = 32;
    static constexpr double kScalarFieldFloor = 1e-3;
    static constexpr double kVarianceFloor = 1e-6;
    static constexpr double kInitThreshold = 1e-4;
};

template <typename T>
struct ConvPair {
    T w, b;
};

template <typename T>
struct HtPair {
    T scale_w, theta; // theta maps through softplus to the effective threshold
};

template <typename T>
struct EncoderSet {
    std::array<ConvPair<T>, 4> block1; // 3x3, in->32 then 32->32
    std::array<ConvPair<T>, 4> block2; // 3x3, 32->64 then 64->64
    ConvPair<T> head_mean;             // linear [D,64]
    ConvPair<T> head_logvar;           // linear [D,64]
};

template <typename T>
struct ParamSet {
    ConvPair<T> conv1, conv2, conv3, conv4; // 16x16 1->32, 7x7 32->64, 7x7 64->32, 16x16 32->1
    HtPair<T> ht1, ht2;                     // per-channel transform-domain parameters
    EncoderSet<T> prior, posterior;
    ConvPair<T> fuse1, fuse2, fuse3; // 1x1: (1+D)->32, 32->32, 32->1
};

// One visitation order for every parameter container (tensors, graph vars,
// optimizer slots); serialization and updates all rely on it.
template <typename T, typename Fn>
void visit_params(ParamSet<T>& p, Fn&& fn) {
    auto conv = [&](const std::string& name, ConvPair<T>& c) {
        fn(name + ".w", c.w);
        fn(name + ".b", c.b);
    };
    auto encoder = [&](const std::string& name, EncoderSet<T>& e) {
        for (int i = 0; i < 4; ++i) conv(name + ".b1c" + std::to_string(i + 1), e.block1[i]);
        for (int i = 0; i < 4; ++i) conv(name + ".b2c" + std::to_string(i + 1), e.block2[i]);
        conv(name + ".mean", e.head_mean);
        conv(name + ".logvar", e.head_logvar);
    };
    conv("hu.conv1", p.conv1);
    fn("hu.ht1.scale", p.ht1.scale_w);
    fn("hu.ht1.theta", p.ht1.theta);
    conv("hu.conv2", p.conv2);
    fn("hu.ht2.scale", p.ht2.scale_w);
    fn("hu.ht2.theta", p.ht2.theta);
    conv("hu.conv3", p.conv3);
    conv("hu.conv4", p.conv4);
    encoder("prior", p.prior);
    encoder("posterior", p.posterior);
    conv("fuse1", p.fuse1);
    conv("fuse2", p.fuse2);
    conv("fuse3", p.fuse3);
}

struct ModelParams {
    ModelConfig cfg;
    ParamSet<Tensor> p;
    int epoch = 0; // completed training epochs (for resume)

    template <typename Fn>
    void for_each(Fn&& fn) {
        visit_params(p, fn);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        visit_params(const_cast<ParamSet<Tensor>&>(p),
                     [&](const std::string& n, Tensor& t) { fn(n, static_cast<const Tensor&>(t)); });
    }
};

// Fresh parameters; the network starts as a near-identity map (unit scaling
// weights, thresholds ~1e-3, positivity head biased to U ~ 1, pass-through
// fusion).
ModelParams init_model(const ModelConfig& cfg, Rng& rng);

using ModelVars = ParamSet<Var>;

// Registers every parameter as a graph leaf; visitation order matches
// ModelParams::for_each.
ModelVars register_model(Graph& g, const ModelParams& params);

// ---- graph-building forward passes -----------------------------------------

struct HuNetGraphOut {
    Var u;                   // [B,1,M,M], strictly positive
    std::vector<Var> z_list; // thresholded spectra, one per HT block
};
HuNetGraphOut hunet_forward_graph(Var x, const ModelVars& v);

struct EncoderGraphOut {
    Var mean; // [B,D]
    Var var;  // [B,D], floored, strictly positive
};
EncoderGraphOut prior_forward_graph(Var x, const ModelVars& v);
EncoderGraphOut posterior_forward_graph(Var x, Var y, const ModelVars& v);

// r broadcast to D constant planes, concatenated with the prototype, three
// 1x1 convolutions.
Var fusion_forward_graph(Var prototype, Var r, const ModelVars& v);

struct TrainingGraphOut {
    Var loss;
    Var kl_latent;  // unweighted components
    Var sparsity;
    Var tv;
    Var mse;
    Var u;
    Var output;
};
// x,y: [B,1,M,M] normalized slices; eps: [B,D] standard-normal draws for the
// posterior reparameterization.
TrainingGraphOut training_graph(Var x, Var y, Var eps, const ModelVars& v, const LossWeights& w);

// ---- plain (non-graph) inference -------------------------------------------

struct LatentSample {
    std::vector<double> r;
};

// r = mean + sqrt(var) * eps, with the variance floor applied.
std::vector<double> sample_latent(const LatentGaussian& g, Rng& rng);

struct CorrectionResult {
    Tensor u;                    // scalar field, [M,M], network (normalized) space
    Tensor prototype;            // x * u, un-normalized back to input range
    Tensor mean_output;          // fusion with r = prior mean, un-normalized
    std::vector<Tensor> samples; // fusion with prior draws, un-normalized
    LatentGaussian prior;
};

enum class Precision { f32, f64 };

// Reusable inference context; converting the parameters to the execution
// precision happens once, not per slice.
class Corrector {
public:
    Corrector(const ModelParams& params, Precision prec = Precision::f32);
    ~Corrector();
    Corrector(Corrector&&) noexcept;
    Corrector& operator=(Corrector&&) noexcept;

    // Normalize, extract the scalar field, sample the prior, fuse,
    // un-normalize. Deterministic in (params, slice, rng state, n_samples).
    CorrectionResult run(const std::vector<double>& slice, int m, Rng& rng, int n_samples) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// One-shot convenience wrapper around Corrector.
CorrectionResult correct(const ModelParams& params, const std::vector<double>& slice, int m, Rng& rng,
                         int n_samples, Precision prec = Precision::f32);

// ---- checkpoint I/O ----------------------------------------------------------

// Versioned binary container: header, shape table, raw little-endian f64
// blobs. Round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// ---- normalization -----------------------------------------------------------

struct SliceNorm {
    double offset = 0.0;
    double scale = 1.0; // guarded against zero range
};
SliceNorm slice_norm(const std::vector<double>& slice);
std::vector<double> apply_norm(const std::vector<double>& slice, const SliceNorm& n);
std::vector<double> undo_norm(const std::vector<double>& slice, const SliceNorm& n);

} // namespace hunet

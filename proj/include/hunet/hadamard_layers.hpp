#pragma once

// Transform-domain trainable layers: per-coefficient scaling and trainable
// hard thresholding, plus the full Hadamard filter block used by the network
// (forward transform -> scaling -> hard threshold -> inverse transform).
//
// Threshold storage is an unconstrained parameter theta mapped through
// softplus, so the effective threshold is always positive and the optimizer
// stays unconstrained.

#include <vector>

#include "hunet/autodiff.hpp"
#include "hunet/tensor.hpp"
#include "hunet/wht.hpp"

namespace hunet {

// y = sign(x) * max(|x| - t, 0)
inline double soft_threshold_value(double x, double t) {
    const double m = (x < 0.0 ? -x : x) - t;
    if (m <= 0.0) return 0.0;
    return x < 0.0 ? -m : m;
}

// Soft threshold plus the sign(.)*t magnitude restoration; algebraically
// x * 1[|x| > t], with ties |x| = t mapping to 0.
inline double hard_threshold_value(double x, double t) {
    const double ax = x < 0.0 ? -x : x;
    return ax > t ? x : 0.0;
}

// Effective threshold from raw parameter and its inverse (for initialization).
double threshold_from_raw(double theta);
double raw_from_threshold(double t);

// ---- plain Spectrum-level layer API ----------------------------------------

Spectrum scaling_layer(const Spectrum& s, const std::vector<double>& w);
Spectrum soft_threshold(const Spectrum& s, const std::vector<double>& t);
Spectrum hard_threshold_layer(const Spectrum& s, const std::vector<double>& t);

// Mean over every entry of a batch of thresholded spectra (batch, channel
// and both spatial axes). Feeds the sparsity penalty.
double mean_activation(const Tensor& z_batch);

// ---- graph builder -----------------------------------------------------------

// One Hadamard filter block over feature maps [B,C,M,M]:
//   transform -> scale by W[C,M,M] -> hard-threshold at softplus(theta) ->
//   inverse transform.
// Returns the filtered maps and the thresholded spectrum Z (for the sparsity
// penalty).
struct HtBlockOut {
    Var filtered;
    Var z;
};
HtBlockOut ht_block(Var x, Var scale_w, Var theta);

} // namespace hunet

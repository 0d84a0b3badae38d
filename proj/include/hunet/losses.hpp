#pragma once

// The four-term training objective and its pieces: latent Gaussian KL,
// Bernoulli sparsity KL on thresholded-spectrum means, anisotropic total
// variation of the scalar field, and MSE against the reference. Plain
// closed-form evaluators for reporting/tests plus graph builders for
// training.

#include <vector>

#include "hunet/autodiff.hpp"
#include "hunet/tensor.hpp"

namespace hunet {

// Diagonal Gaussian over the latent space.
struct LatentGaussian {
    std::vector<double> mean;
    std::vector<double> var; // strictly positive
};

struct LossWeights {
    double lambda_kl = 10.0;       // latent KL(F||G)
    double lambda_sparsity = 0.1;  // sum of Bernoulli KLs over threshold layers
    double lambda_tv = 1.0;        // total variation of the scalar field
    double lambda_mse = 1.0;       // reconstruction
    double beta = 0.05;            // sparsity target in (0,1)
};

// Closed-form KL(F || G) of diagonal Gaussians, summed over dimensions.
double kl_gaussian(const LatentGaussian& f, const LatentGaussian& g);

// KL( Bernoulli(beta) || Bernoulli(sigmoid(z_bar)) ), the sparse-coding
// penalty on the mean thresholded activation.
double kl_sparsity(double z_bar, double beta);
// Same, parameterized by the rate directly (used by convexity checks).
double kl_sparsity_rate(double rho, double beta);

// Anisotropic total variation of an h x w field, normalized by pixel count.
double tv_loss(const std::vector<double>& u, int h, int w);

double mse_loss(const std::vector<double>& a, const std::vector<double>& b);

struct LossTerms {
    double kl_latent = 0.0;
    double sparsity = 0.0;
    double tv = 0.0;
    double mse = 0.0;
    double weighted_total(const LossWeights& w) const {
        return w.lambda_kl * kl_latent + w.lambda_sparsity * sparsity + w.lambda_tv * tv +
               w.lambda_mse * mse;
    }
};

// Weighted sum over all four terms. z_list holds the thresholded spectra
// (one per hard-thresholding layer); u is the scalar field; o/y are the
// network output and the reference.
double total_loss(const LatentGaussian& f, const LatentGaussian& g, const std::vector<Tensor>& z_list,
                  const Tensor& u, const Tensor& o, const Tensor& y, const LossWeights& w);

// ---- graph builders ----------------------------------------------------------

// KL(F||G) averaged over the batch; inputs are [B,D] means and (floored)
// variances.
Var kl_gaussian_graph(Var mean_f, Var var_f, Var mean_g, Var var_g);

// Bernoulli sparsity KL of one thresholded spectrum batch.
Var kl_sparsity_graph(Var z, double beta);

Var mse_graph(Var o, Var y);

} // namespace hunet

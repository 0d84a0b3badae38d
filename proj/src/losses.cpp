#include "hunet/losses.hpp"

#include <cmath>

#include "hunet/hadamard_layers.hpp"

namespace hunet {

double kl_gaussian(const LatentGaussian& f, const LatentGaussian& g) {
    if (f.mean.size() != f.var.size() || g.mean.size() != g.var.size() || f.mean.size() != g.mean.size())
        throw DimensionError("kl_gaussian: dimension mismatch");
    double acc = 0.0;
    for (std::size_t d = 0; d < f.mean.size(); ++d) {
        const double vf = f.var[d], vg = g.var[d];
        if (vf <= 0.0 || vg <= 0.0) throw ContractError("kl_gaussian: variances must be positive");
        const double du = f.mean[d] - g.mean[d];
        acc += 0.5 * (vf / vg + du * du / vg - 1.0 + std::log(vg / vf));
    }
    return acc;
}

double kl_sparsity_rate(double rho, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw ContractError("kl_sparsity: beta must lie in (0,1)");
    if (!(rho > 0.0 && rho < 1.0)) throw ContractError("kl_sparsity: rate must lie in (0,1)");
    return beta * std::log(beta / rho) + (1.0 - beta) * std::log((1.0 - beta) / (1.0 - rho));
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

double kl_sparsity(double z_bar, double beta) { return kl_sparsity_rate(sigmoid(z_bar), beta); }

double tv_loss(const std::vector<double>& u, int h, int w) {
    if (static_cast<std::int64_t>(u.size()) != static_cast<std::int64_t>(h) * w)
        throw DimensionError("tv_loss: size does not match extents");
    if (h * w <= 1) return 0.0;
    double acc = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) acc += std::abs(u[y * w + x + 1] - u[y * w + x]);
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) acc += std::abs(u[(y + 1) * w + x] - u[y * w + x]);
    return acc / (static_cast<double>(h) * w);
}

double mse_loss(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("mse_loss: size mismatch");
    if (a.empty()) throw ContractError("mse_loss: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double total_loss(const LatentGaussian& f, const LatentGaussian& g, const std::vector<Tensor>& z_list,
                  const Tensor& u, const Tensor& o, const Tensor& y, const LossWeights& w) {
    LossTerms terms;
    terms.kl_latent = kl_gaussian(f, g);
    for (const Tensor& z : z_list) terms.sparsity += kl_sparsity(mean_activation(z), w.beta);
    if (u.rank() != 2) throw DimensionError("total_loss: scalar field must be rank 2");
    terms.tv = tv_loss(u.data, u.shape[0], u.shape[1]);
    require_same_shape(o, y, "total_loss mse");
    terms.mse = mse_loss(o.data, y.data);
    return terms.weighted_total(w);
}

Var kl_gaussian_graph(Var mean_f, Var var_f, Var mean_g, Var var_g) {
    const Tensor& mf = mean_f.g->value(mean_f);
    if (mf.rank() != 2) throw DimensionError("kl_gaussian_graph expects [B,D]");
    const int B = mf.shape[0];
    Var du = sub(mean_g, mean_f);
    Var term = add(div(var_f, var_g), div(mul(du, du), var_g));
    term = add(term, sub(log(var_g), log(var_f)));
    term = add_scalar(term, -1.0);
    return mul_scalar(sum(term), 0.5 / static_cast<double>(B));
}

Var kl_sparsity_graph(Var z, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw ContractError("kl_sparsity: beta must lie in (0,1)");
    Var z_bar = mean(z);
    Var rho = sigmoid(z_bar);
    Var rho_c = sigmoid(mul_scalar(z_bar, -1.0)); // 1 - rho, computed stably
    const double c = beta * std::log(beta) + (1.0 - beta) * std::log(1.0 - beta);
    Var kl = add(mul_scalar(log(rho), -beta), mul_scalar(log(rho_c), -(1.0 - beta)));
    return add_scalar(kl, c);
}

Var mse_graph(Var o, Var y) {
    Var d = sub(o, y);
    return mean(mul(d, d));
}

} // namespace hunet

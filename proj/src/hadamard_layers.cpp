#include "hunet/hadamard_layers.hpp"

#include <cmath>

namespace hunet {

double threshold_from_raw(double theta) {
    if (theta > 35.0) return theta;
    if (theta < -35.0) return std::exp(theta);
    return std::log1p(std::exp(theta));
}

double raw_from_threshold(double t) {
    if (t <= 0.0) throw ContractError("raw_from_threshold: threshold must be positive");
    if (t > 35.0) return t;
    return std::log(std::expm1(t));
}

namespace {

void require_matching(const Spectrum& s, const std::vector<double>& p, const char* op) {
    if (p.size() != s.coeffs.size())
        throw DimensionError(std::string(op) + ": parameter size does not match spectrum");
}

} // namespace

Spectrum scaling_layer(const Spectrum& s, const std::vector<double>& w) {
    require_matching(s, w, "scaling_layer");
    Spectrum out = s;
    for (std::size_t i = 0; i < out.coeffs.size(); ++i) out.coeffs[i] *= w[i];
    return out;
}

Spectrum soft_threshold(const Spectrum& s, const std::vector<double>& t) {
    require_matching(s, t, "soft_threshold");
    for (double tv : t)
        if (tv < 0.0) throw ContractError("soft_threshold: thresholds must be nonnegative");
    Spectrum out = s;
    for (std::size_t i = 0; i < out.coeffs.size(); ++i)
        out.coeffs[i] = soft_threshold_value(s.coeffs[i], t[i]);
    return out;
}

Spectrum hard_threshold_layer(const Spectrum& s, const std::vector<double>& t) {
    require_matching(s, t, "hard_threshold_layer");
    for (double tv : t)
        if (tv < 0.0) throw ContractError("hard_threshold_layer: thresholds must be nonnegative");
    Spectrum out = s;
    for (std::size_t i = 0; i < out.coeffs.size(); ++i)
        out.coeffs[i] = hard_threshold_value(s.coeffs[i], t[i]);
    return out;
}

double mean_activation(const Tensor& z_batch) {
    if (z_batch.numel() == 0) throw ContractError("mean_activation: empty input");
    double acc = 0.0;
    for (double v : z_batch.data) acc += v;
    return acc / static_cast<double>(z_batch.numel());
}

HtBlockOut ht_block(Var x, Var scale_w, Var theta) {
    Var spec = hadamard2d(x);
    Var scaled = scale_channels(spec, scale_w);
    Var z = hard_threshold(scaled, softplus(theta));
    Var filtered = hadamard2d(z); // orthogonal convention: the transform is its own inverse
    return HtBlockOut{filtered, z};
}

} // namespace hunet

#include "hunet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hunet/common.hpp"

namespace hunet {

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0; // population variance
    std::int64_t n = 0;
};

Moments masked_moments(const std::vector<double>& img, const Mask& roi) {
    if (img.size() != roi.size()) throw DimensionError("metric: mask size mismatch");
    Moments m;
    double acc = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i)
        if (roi[i]) {
            acc += img[i];
            ++m.n;
        }
    if (m.n == 0) throw ContractError("metric: empty mask");
    m.mean = acc / static_cast<double>(m.n);
    double sq = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i)
        if (roi[i]) {
            const double d = img[i] - m.mean;
            sq += d * d;
        }
    m.var = sq / static_cast<double>(m.n);
    return m;
}

std::int64_t count_and(const Mask& a, const Mask& b) {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] && b[i]) ++n;
    return n;
}

std::int64_t count(const Mask& a) {
    std::int64_t n = 0;
    for (auto v : a)
        if (v) ++n;
    return n;
}

} // namespace

double cv_metric(const std::vector<double>& img, const Mask& roi) {
    Moments m = masked_moments(img, roi);
    if (m.mean == 0.0) throw ContractError("cv undefined: zero mean over ROI");
    return 100.0 * std::sqrt(m.var) / m.mean;
}

double snr_metric(const std::vector<double>& img, const Mask& fg, const Mask& bg) {
    Moments f = masked_moments(img, fg);
    Moments b = masked_moments(img, bg);
    if (b.var == 0.0) throw ContractError("snr undefined: noiseless background");
    return f.mean / std::sqrt(b.var);
}

double snr_to_db(double ratio) {
    if (ratio <= 0.0) throw ContractError("snr_to_db: ratio must be positive");
    return 20.0 * std::log10(ratio);
}

namespace {

void require_same_size(const Mask& a, const Mask& b) {
    if (a.size() != b.size()) throw DimensionError("overlap metric: mask size mismatch");
}

} // namespace

double dice(const Mask& a, const Mask& b) {
    require_same_size(a, b);
    const std::int64_t na = count(a), nb = count(b);
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(count_and(a, b)) / static_cast<double>(na + nb);
}

double iou(const Mask& a, const Mask& b) {
    require_same_size(a, b);
    const std::int64_t inter = count_and(a, b);
    const std::int64_t uni = count(a) + count(b) - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double ppv(const Mask& pred, const Mask& gt) {
    require_same_size(pred, gt);
    const std::int64_t np = count(pred);
    if (np == 0) return count(gt) == 0 ? 1.0 : 0.0;
    return static_cast<double>(count_and(pred, gt)) / static_cast<double>(np);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson_masked(a, b, Mask(a.size(), 1));
}

double pearson_masked(const std::vector<double>& a, const std::vector<double>& b, const Mask& roi) {
    if (a.size() != b.size()) throw DimensionError("pearson: size mismatch");
    Moments ma = masked_moments(a, roi);
    Moments mb = masked_moments(b, roi);
    double cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (roi[i]) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
    cov /= static_cast<double>(ma.n);
    const double denom = std::sqrt(ma.var * mb.var);
    if (denom == 0.0) throw ContractError("pearson undefined: constant input");
    return cov / denom;
}

Mask otsu_mask(const std::vector<double>& img) {
    if (img.empty()) throw ContractError("otsu: empty image");
    const auto [lo_it, hi_it] = std::minmax_element(img.begin(), img.end());
    const double lo = *lo_it, hi = *hi_it;
    if (lo == hi) return Mask(img.size(), 0);

    constexpr int kBins = 256;
    std::vector<std::int64_t> hist(kBins, 0);
    const double scale = (kBins - 1) / (hi - lo);
    for (double v : img) ++hist[static_cast<int>((v - lo) * scale)];

    const double total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int i = 0; i < kBins; ++i) sum_all += i * static_cast<double>(hist[i]);

    double best = -1.0, sum_b = 0.0, w_b = 0.0;
    int thresh = 0;
    for (int i = 0; i < kBins; ++i) {
        w_b += static_cast<double>(hist[i]);
        if (w_b == 0.0) continue;
        const double w_f = total - w_b;
        if (w_f == 0.0) break;
        sum_b += i * static_cast<double>(hist[i]);
        const double mu_b = sum_b / w_b;
        const double mu_f = (sum_all - sum_b) / w_f;
        const double between = w_b * w_f * (mu_b - mu_f) * (mu_b - mu_f);
        if (between > best) {
            best = between;
            thresh = i;
        }
    }
    const double cut = lo + (thresh + 0.5) / scale;
    Mask out(img.size(), 0);
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] > cut ? 1 : 0;
    return out;
}

} // namespace hunet

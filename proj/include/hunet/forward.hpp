#pragma once

// Forward-only model evaluation templated on the scalar type. float is the
// fast inference path; the double instantiation exists to cross-check the
// autodiff graph forward in tests. One slice at a time (B = 1).

#include <array>
#include <cmath>
#include <vector>

#include "hunet/kernels.hpp"
#include "hunet/model.hpp"
#include "hunet/wht.hpp"

namespace hunet {

template <typename T>
struct FastConv {
    std::vector<T> w, b;
    int cout = 0, cin = 0, k = 0;
};

template <typename T>
struct FastHt {
    std::vector<T> scale;  // [C*M*M]
    std::vector<T> thresh; // softplus(theta), precomputed
    int c = 0;
};

template <typename T>
struct FastEncoder {
    std::array<FastConv<T>, 4> block1, block2;
    FastConv<T> head_mean, head_logvar;
};

namespace detail {

template <typename T>
FastConv<T> fast_conv(const ConvPair<Tensor>& c) {
    FastConv<T> out;
    out.cout = c.w.shape[0];
    out.cin = c.w.shape[1];
    out.k = c.w.shape[2];
    out.w.assign(c.w.data.begin(), c.w.data.end());
    out.b.assign(c.b.data.begin(), c.b.data.end());
    return out;
}

template <typename T>
FastConv<T> fast_linear(const ConvPair<Tensor>& c) {
    FastConv<T> out;
    out.cout = c.w.shape[0];
    out.cin = c.w.shape[1];
    out.k = 1;
    out.w.assign(c.w.data.begin(), c.w.data.end());
    out.b.assign(c.b.data.begin(), c.b.data.end());
    return out;
}

template <typename T>
FastEncoder<T> fast_encoder(const EncoderSet<Tensor>& e) {
    FastEncoder<T> out;
    for (int i = 0; i < 4; ++i) {
        out.block1[i] = fast_conv<T>(e.block1[i]);
        out.block2[i] = fast_conv<T>(e.block2[i]);
    }
    out.head_mean = fast_linear<T>(e.head_mean);
    out.head_logvar = fast_linear<T>(e.head_logvar);
    return out;
}

} // namespace detail

template <typename T>
struct FastModel {
    int m = 0, d = 0;
    FastConv<T> conv1, conv2, conv3, conv4, fuse1, fuse2, fuse3;
    FastHt<T> ht1, ht2;
    FastEncoder<T> prior, posterior;

    static FastModel<T> from(const ModelParams& params) {
        FastModel<T> f;
        f.m = params.cfg.image_size;
        f.d = params.cfg.latent_dim;
        f.conv1 = detail::fast_conv<T>(params.p.conv1);
        f.conv2 = detail::fast_conv<T>(params.p.conv2);
        f.conv3 = detail::fast_conv<T>(params.p.conv3);
        f.conv4 = detail::fast_conv<T>(params.p.conv4);
        f.fuse1 = detail::fast_conv<T>(params.p.fuse1);
        f.fuse2 = detail::fast_conv<T>(params.p.fuse2);
        f.fuse3 = detail::fast_conv<T>(params.p.fuse3);
        auto ht = [](const HtPair<Tensor>& h) {
            FastHt<T> out;
            out.c = h.scale_w.shape[0];
            out.scale.assign(h.scale_w.data.begin(), h.scale_w.data.end());
            out.thresh.resize(h.theta.data.size());
            for (std::size_t i = 0; i < out.thresh.size(); ++i)
                out.thresh[i] = static_cast<T>(threshold_from_raw(h.theta.data[i]));
            return out;
        };
        f.ht1 = ht(params.p.ht1);
        f.ht2 = ht(params.p.ht2);
        f.prior = detail::fast_encoder<T>(params.p.prior);
        f.posterior = detail::fast_encoder<T>(params.p.posterior);
        return f;
    }
};

namespace detail {

template <typename T>
std::vector<T> conv_relu(const FastConv<T>& c, const std::vector<T>& x, int h, int w, bool act) {
    std::vector<T> y(static_cast<std::size_t>(c.cout) * h * w);
    conv2d_forward<T>(x.data(), 1, c.cin, h, w, c.w.data(), c.cout, c.k, c.k, c.b.data(),
                      PadMode::replicate, y.data());
    if (act)
        for (auto& v : y)
            if (v < T(0)) v = T(0);
    return y;
}

template <typename T>
void ht_block_fast(const FastHt<T>& ht, std::vector<T>& x, int m) {
    const std::int64_t plane = static_cast<std::int64_t>(m) * m;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < ht.c; ++c) {
        T* p = x.data() + c * plane;
        ht_2d_inplace(p, m);
        const T* sw = ht.scale.data() + c * plane;
        const T* tt = ht.thresh.data() + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            const T v = p[i] * sw[i];
            p[i] = std::abs(v) > tt[i] ? v : T(0);
        }
        ht_2d_inplace(p, m);
    }
}

} // namespace detail

// Scalar field of one normalized slice.
template <typename T>
std::vector<T> hunet_forward_fast(const FastModel<T>& f, const std::vector<T>& x) {
    const int m = f.m;
    auto x1 = detail::conv_relu(f.conv1, x, m, m, true);
    auto h1 = x1;
    detail::ht_block_fast(f.ht1, h1, m);
    auto x2 = detail::conv_relu(f.conv2, h1, m, m, true);
    detail::ht_block_fast(f.ht2, x2, m);
    auto x3 = detail::conv_relu(f.conv3, x2, m, m, true);
    for (std::size_t i = 0; i < x3.size(); ++i) x3[i] += x1[i]; // additive skip
    auto pre = detail::conv_relu(f.conv4, x3, m, m, false);
    std::vector<T> u(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        const double sp = pre[i] > 35.0 ? static_cast<double>(pre[i])
                                        : std::log1p(std::exp(static_cast<double>(pre[i])));
        u[i] = static_cast<T>(sp + ModelConfig::kScalarFieldFloor);
    }
    return u;
}

// (mean, variance) of the latent Gaussian for a 1- or 2-channel input.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> encoder_forward_fast(const FastEncoder<T>& e,
                                                               const std::vector<T>& input, int m) {
    auto h = detail::conv_relu(e.block1[0], input, m, m, true);
    for (int i = 1; i < 4; ++i) h = detail::conv_relu(e.block1[i], h, m, m, true);
    const int c1 = e.block1[3].cout;
    std::vector<T> pooled(static_cast<std::size_t>(c1) * (m / 2) * (m / 2));
    avgpool2d_forward<T>(h.data(), 1, c1, m, m, pooled.data());
    const int mh = m / 2;
    auto h2 = detail::conv_relu(e.block2[0], pooled, mh, mh, true);
    for (int i = 1; i < 4; ++i) h2 = detail::conv_relu(e.block2[i], h2, mh, mh, true);

    const int c2 = e.block2[3].cout;
    const std::int64_t plane = static_cast<std::int64_t>(mh) * mh;
    std::vector<T> feat(c2);
    for (int c = 0; c < c2; ++c) {
        T acc = 0;
        const T* src = h2.data() + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
        feat[c] = acc / static_cast<T>(plane);
    }
    const int d = e.head_mean.cout;
    std::vector<T> mean(d), var(d);
    for (int o = 0; o < d; ++o) {
        T mu = e.head_mean.b[o], lv = e.head_logvar.b[o];
        for (int k = 0; k < c2; ++k) {
            mu += e.head_mean.w[o * c2 + k] * feat[k];
            lv += e.head_logvar.w[o * c2 + k] * feat[k];
        }
        mean[o] = mu;
        var[o] = static_cast<T>(std::exp(static_cast<double>(lv)) + ModelConfig::kVarianceFloor);
    }
    return {mean, var};
}

// Prototype + broadcast latent through the three 1x1 convolutions.
template <typename T>
std::vector<T> fuse_forward_fast(const FastModel<T>& f, const std::vector<T>& prototype,
                                 const std::vector<T>& r) {
    const int m = f.m, d = f.d;
    const std::int64_t plane = static_cast<std::int64_t>(m) * m;
    std::vector<T> fin(static_cast<std::size_t>(1 + d) * plane);
    std::copy(prototype.begin(), prototype.end(), fin.begin());
    for (int i = 0; i < d; ++i) std::fill_n(fin.begin() + (1 + i) * plane, plane, r[i]);
    auto f1 = detail::conv_relu(f.fuse1, fin, m, m, true);
    auto f2 = detail::conv_relu(f.fuse2, f1, m, m, true);
    return detail::conv_relu(f.fuse3, f2, m, m, false);
}

} // namespace hunet

#include "hunet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>

#include "hunet/forward.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace hunet {

namespace {

Tensor glorot(Rng& rng, std::vector<int> shape, double fan_in, double fan_out, double gain) {
    Tensor t(std::move(shape));
    const double limit = gain * std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

ConvPair<Tensor> init_conv(Rng& rng, int cout, int cin, int k, double gain) {
    ConvPair<Tensor> c;
    const double fan_in = static_cast<double>(cin) * k * k;
    const double fan_out = static_cast<double>(cout) * k * k;
    c.w = glorot(rng, {cout, cin, k, k}, fan_in, fan_out, gain);
    c.b = Tensor::zeros({cout});
    return c;
}

ConvPair<Tensor> init_head(Rng& rng, int out, int in) {
    ConvPair<Tensor> c;
    c.w = Tensor({out, in});
    for (auto& v : c.w.data) v = rng.uniform(-0.01, 0.01);
    c.b = Tensor::zeros({out});
    return c;
}

EncoderSet<Tensor> init_encoder(Rng& rng, int in_channels, int latent_dim) {
    EncoderSet<Tensor> e;
    e.block1[0] = init_conv(rng, ModelConfig::kWide, in_channels, ModelConfig::kEncKernel, 1.0);
    for (int i = 1; i < 4; ++i)
        e.block1[i] = init_conv(rng, ModelConfig::kWide, ModelConfig::kWide, ModelConfig::kEncKernel, 1.0);
    e.block2[0] = init_conv(rng, ModelConfig::kWider, ModelConfig::kWide, ModelConfig::kEncKernel, 1.0);
    for (int i = 1; i < 4; ++i)
        e.block2[i] = init_conv(rng, ModelConfig::kWider, ModelConfig::kWider, ModelConfig::kEncKernel, 1.0);
    e.head_mean = init_head(rng, latent_dim, ModelConfig::kWider);
    e.head_logvar = init_head(rng, latent_dim, ModelConfig::kWider);
    return e;
}

HtPair<Tensor> init_ht(int channels, int m) {
    HtPair<Tensor> h;
    h.scale_w = Tensor::full({channels, m, m}, 1.0); // identity filter
    h.theta = Tensor::full({channels, m, m}, raw_from_threshold(ModelConfig::kInitThreshold));
    return h;
}

// pass-through on channel 0 plus low-amplitude noise everywhere else
ConvPair<Tensor> init_fuse(Rng& rng, int cout, int cin) {
    ConvPair<Tensor> c;
    c.w = Tensor({cout, cin, 1, 1});
    for (auto& v : c.w.data) v = rng.uniform(-0.005, 0.005);
    c.w.at({0, 0, 0, 0}) = 1.0;
    c.b = Tensor::zeros({cout});
    return c;
}

// shapes only; used by the checkpoint loader to validate the table
ModelParams make_shell(const ModelConfig& cfg) {
    Rng rng(0);
    ModelParams params;
    params.cfg = cfg;
    ParamSet<Tensor>& p = params.p;
    const int m = cfg.image_size, d = cfg.latent_dim;
    p.conv1 = init_conv(rng, ModelConfig::kWide, 1, ModelConfig::kOuterKernel, 0.0);
    p.conv2 = init_conv(rng, ModelConfig::kWider, ModelConfig::kWide, ModelConfig::kInnerKernel, 0.0);
    p.conv3 = init_conv(rng, ModelConfig::kWide, ModelConfig::kWider, ModelConfig::kInnerKernel, 0.0);
    p.conv4 = init_conv(rng, 1, ModelConfig::kWide, ModelConfig::kOuterKernel, 0.0);
    p.ht1 = init_ht(ModelConfig::kWide, m);
    p.ht2 = init_ht(ModelConfig::kWider, m);
    p.prior = init_encoder(rng, 1, d);
    p.posterior = init_encoder(rng, 2, d);
    p.fuse1 = init_fuse(rng, ModelConfig::kFuseChannels, 1 + d);
    p.fuse2 = init_fuse(rng, ModelConfig::kFuseChannels, ModelConfig::kFuseChannels);
    p.fuse3 = init_fuse(rng, 1, ModelConfig::kFuseChannels);
    return params;
}

} // namespace

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
    require_pow2(cfg.image_size, "model image size");
    if (cfg.latent_dim < 1) throw ContractError("latent dimension must be >= 1");
    ModelParams params;
    params.cfg = cfg;
    ParamSet<Tensor>& p = params.p;
    const int m = cfg.image_size, d = cfg.latent_dim;

    p.conv1 = init_conv(rng, ModelConfig::kWide, 1, ModelConfig::kOuterKernel, 1.0);
    p.conv2 = init_conv(rng, ModelConfig::kWider, ModelConfig::kWide, ModelConfig::kInnerKernel, 1.0);
    p.conv3 = init_conv(rng, ModelConfig::kWide, ModelConfig::kWider, ModelConfig::kInnerKernel, 1.0);
    p.conv4 = init_conv(rng, 1, ModelConfig::kWide, ModelConfig::kOuterKernel, 0.08);
    // positivity head starts at U ~ 1
    p.conv4.b.data[0] = std::log(std::expm1(1.0 - ModelConfig::kScalarFieldFloor));

    p.ht1 = init_ht(ModelConfig::kWide, m);
    p.ht2 = init_ht(ModelConfig::kWider, m);
    p.prior = init_encoder(rng, 1, d);
    p.posterior = init_encoder(rng, 2, d);
    p.fuse1 = init_fuse(rng, ModelConfig::kFuseChannels, 1 + d);
    p.fuse2 = init_fuse(rng, ModelConfig::kFuseChannels, ModelConfig::kFuseChannels);
    p.fuse3 = init_fuse(rng, 1, ModelConfig::kFuseChannels);
    return params;
}

ModelVars register_model(Graph& g, const ModelParams& params) {
    ModelVars vars;
    std::vector<Var*> slots;
    visit_params(vars, [&](const std::string&, Var& v) { slots.push_back(&v); });
    std::size_t i = 0;
    params.for_each([&](const std::string&, const Tensor& t) { *slots[i++] = g.param(t); });
    return vars;
}

// ---- graph forward passes -----------------------------------------------------

HuNetGraphOut hunet_forward_graph(Var x, const ModelVars& v) {
    const Tensor& vx = x.g->value(x);
    if (vx.rank() != 4 || vx.shape[1] != 1) throw DimensionError("hunet_forward expects [B,1,M,M]");
    if (vx.shape[2] != vx.shape[3]) throw DimensionError("hunet_forward expects square slices");
    require_pow2(vx.shape[2], "hunet_forward side");

    Var x1 = relu(conv2d(x, v.conv1.w, v.conv1.b, PadMode::replicate));
    auto b1 = ht_block(x1, v.ht1.scale_w, v.ht1.theta);
    Var x2 = relu(conv2d(b1.filtered, v.conv2.w, v.conv2.b, PadMode::replicate));
    auto b2 = ht_block(x2, v.ht2.scale_w, v.ht2.theta);
    Var x3 = relu(conv2d(b2.filtered, v.conv3.w, v.conv3.b, PadMode::replicate));
    Var x3s = add(x3, x1); // additive skip from the first conv's output
    Var pre = conv2d(x3s, v.conv4.w, v.conv4.b, PadMode::replicate);
    Var u = add_scalar(softplus(pre), ModelConfig::kScalarFieldFloor);
    return HuNetGraphOut{u, {b1.z, b2.z}};
}

namespace {

EncoderGraphOut encoder_forward_graph(Var input, const EncoderSet<Var>& e) {
    Var h = input;
    for (int i = 0; i < 4; ++i) h = relu(conv2d(h, e.block1[i].w, e.block1[i].b, PadMode::replicate));
    h = avgpool2d(h);
    for (int i = 0; i < 4; ++i) h = relu(conv2d(h, e.block2[i].w, e.block2[i].b, PadMode::replicate));
    Var feat = global_avg_pool(h);
    Var mean_v = linear(feat, e.head_mean.w, e.head_mean.b);
    Var logv = linear(feat, e.head_logvar.w, e.head_logvar.b);
    Var var_v = add_scalar(exp(logv), ModelConfig::kVarianceFloor);
    return EncoderGraphOut{mean_v, var_v};
}

} // namespace

EncoderGraphOut prior_forward_graph(Var x, const ModelVars& v) {
    return encoder_forward_graph(x, v.prior);
}

EncoderGraphOut posterior_forward_graph(Var x, Var y, const ModelVars& v) {
    return encoder_forward_graph(concat_channels(x, y), v.posterior);
}

Var fusion_forward_graph(Var prototype, Var r, const ModelVars& v) {
    const Tensor& vp = prototype.g->value(prototype);
    if (vp.rank() != 4) throw DimensionError("fusion expects [B,1,M,M] prototype");
    Var rfield = broadcast_spatial(r, vp.shape[2], vp.shape[3]);
    Var fin = concat_channels(prototype, rfield);
    Var f1 = relu(conv2d(fin, v.fuse1.w, v.fuse1.b, PadMode::replicate));
    Var f2 = relu(conv2d(f1, v.fuse2.w, v.fuse2.b, PadMode::replicate));
    return conv2d(f2, v.fuse3.w, v.fuse3.b, PadMode::replicate);
}

TrainingGraphOut training_graph(Var x, Var y, Var eps, const ModelVars& v, const LossWeights& w) {
    auto hu = hunet_forward_graph(x, v);
    Var proto = mul(x, hu.u);
    auto prior = prior_forward_graph(x, v);
    auto post = posterior_forward_graph(x, y, v);
    Var r = add(post.mean, mul(sqrt(post.var), eps)); // reparameterized posterior draw
    Var out = fusion_forward_graph(proto, r, v);

    Var kl = kl_gaussian_graph(post.mean, post.var, prior.mean, prior.var);
    Var sp = kl_sparsity_graph(hu.z_list[0], w.beta);
    for (std::size_t i = 1; i < hu.z_list.size(); ++i) sp = add(sp, kl_sparsity_graph(hu.z_list[i], w.beta));
    Var tv = total_variation(hu.u);
    Var ms = mse_graph(out, y);

    Var loss = add(add(mul_scalar(kl, w.lambda_kl), mul_scalar(sp, w.lambda_sparsity)),
                   add(mul_scalar(tv, w.lambda_tv), mul_scalar(ms, w.lambda_mse)));
    return TrainingGraphOut{loss, kl, sp, tv, ms, hu.u, out};
}

// ---- plain inference -----------------------------------------------------------

std::vector<double> sample_latent(const LatentGaussian& g, Rng& rng) {
    if (g.mean.size() != g.var.size()) throw DimensionError("sample_latent: dimension mismatch");
    std::vector<double> r(g.mean.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double v = std::max(g.var[i], ModelConfig::kVarianceFloor);
        r[i] = g.mean[i] + std::sqrt(v) * rng.normal();
    }
    return r;
}

SliceNorm slice_norm(const std::vector<double>& slice) {
    const auto [lo, hi] = std::minmax_element(slice.begin(), slice.end());
    SliceNorm n;
    n.offset = *lo;
    n.scale = std::max(*hi - *lo, 1e-12);
    return n;
}

std::vector<double> apply_norm(const std::vector<double>& slice, const SliceNorm& n) {
    std::vector<double> out(slice.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (slice[i] - n.offset) / n.scale;
    return out;
}

std::vector<double> undo_norm(const std::vector<double>& slice, const SliceNorm& n) {
    std::vector<double> out(slice.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = slice[i] * n.scale + n.offset;
    return out;
}

namespace {

template <typename T>
CorrectionResult correct_impl(const FastModel<T>& fm, const std::vector<double>& slice, int m,
                              Rng& rng, int n_samples) {
    const SliceNorm norm = slice_norm(slice);
    const std::vector<double> xn_d = apply_norm(slice, norm);

    std::vector<T> xn(xn_d.begin(), xn_d.end());

    auto u = hunet_forward_fast(fm, xn);
    std::vector<T> proto(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) proto[i] = xn[i] * u[i];

    auto [pmean, pvar] = encoder_forward_fast(fm.prior, xn, m);

    CorrectionResult res;
    res.u = Tensor({m, m});
    std::copy(u.begin(), u.end(), res.u.data.begin());
    res.prior.mean.assign(pmean.begin(), pmean.end());
    res.prior.var.assign(pvar.begin(), pvar.end());

    auto unnorm_to_tensor = [&](const std::vector<T>& v) {
        Tensor t({m, m});
        for (std::size_t i = 0; i < v.size(); ++i)
            t.data[i] = static_cast<double>(v[i]) * norm.scale + norm.offset;
        return t;
    };
    res.prototype = unnorm_to_tensor(proto);

    auto fused_mean = fuse_forward_fast(fm, proto, pmean);
    res.mean_output = unnorm_to_tensor(fused_mean);

    for (int s = 0; s < n_samples; ++s) {
        std::vector<double> r = sample_latent(res.prior, rng);
        std::vector<T> rt(r.begin(), r.end());
        res.samples.push_back(unnorm_to_tensor(fuse_forward_fast(fm, proto, rt)));
    }
    return res;
}

} // namespace

struct Corrector::Impl {
    int image_size = 0;
    Precision prec = Precision::f32;
    std::optional<FastModel<float>> f32;
    std::optional<FastModel<double>> f64;
};

Corrector::Corrector(const ModelParams& params, Precision prec) : impl_(std::make_unique<Impl>()) {
    impl_->image_size = params.cfg.image_size;
    impl_->prec = prec;
    if (prec == Precision::f32)
        impl_->f32 = FastModel<float>::from(params);
    else
        impl_->f64 = FastModel<double>::from(params);
}

Corrector::~Corrector() = default;
Corrector::Corrector(Corrector&&) noexcept = default;
Corrector& Corrector::operator=(Corrector&&) noexcept = default;

CorrectionResult Corrector::run(const std::vector<double>& slice, int m, Rng& rng, int n_samples) const {
    require_pow2(m, "correct: slice side");
    if (static_cast<std::int64_t>(slice.size()) != static_cast<std::int64_t>(m) * m)
        throw DimensionError("correct: slice is not m x m");
    if (m != impl_->image_size)
        throw DimensionError("correct: model was built for " + std::to_string(impl_->image_size) + "x" +
                             std::to_string(impl_->image_size) + " slices, got " + std::to_string(m));
    if (n_samples < 0) throw ContractError("correct: n_samples must be >= 0");
    return impl_->prec == Precision::f32 ? correct_impl<float>(*impl_->f32, slice, m, rng, n_samples)
                                         : correct_impl<double>(*impl_->f64, slice, m, rng, n_samples);
}

CorrectionResult correct(const ModelParams& params, const std::vector<double>& slice, int m, Rng& rng,
                         int n_samples, Precision prec) {
    return Corrector(params, prec).run(slice, m, rng, n_samples);
}

// ---- checkpoint I/O --------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'U', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    }
    void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), n); }
    template <typename V>
    void pod(V v) {
        bytes(&v, sizeof(V));
    }
};

struct Reader {
    std::ifstream in;
    std::uint64_t offset = 0;
    explicit Reader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw IoError("cannot open checkpoint: " + path);
    }
    void bytes(void* p, std::size_t n, const char* field) {
        in.read(static_cast<char*>(p), n);
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw ParseError("truncated checkpoint", offset, field);
        offset += n;
    }
    template <typename V>
    V pod(const char* field) {
        V v;
        bytes(&v, sizeof(V), field);
        return v;
    }
};

} // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.pod<std::uint32_t>(kVersion);
    w.pod<std::int32_t>(params.cfg.image_size);
    w.pod<std::int32_t>(params.cfg.latent_dim);
    w.pod<std::int32_t>(params.epoch);

    std::uint32_t count = 0;
    params.for_each([&](const std::string&, const Tensor&) { ++count; });
    w.pod<std::uint32_t>(count);

    params.for_each([&](const std::string& name, const Tensor& t) {
        w.pod<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.pod<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
        for (int e : t.shape) w.pod<std::int32_t>(e);
        w.bytes(t.data.data(), t.data.size() * sizeof(double));
    });
    if (!w.out) throw IoError("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("bad checkpoint magic", 0, "magic");
    const auto version = r.pod<std::uint32_t>("version");
    if (version != kVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version), 4, "version");

    ModelConfig cfg;
    cfg.image_size = r.pod<std::int32_t>("image_size");
    cfg.latent_dim = r.pod<std::int32_t>("latent_dim");
    if (!is_pow2(cfg.image_size) || cfg.latent_dim < 1)
        throw ParseError("invalid model geometry", 8, "image_size/latent_dim");
    const auto epoch = r.pod<std::int32_t>("epoch");

    ModelParams params = make_shell(cfg);
    params.epoch = epoch;

    const auto count = r.pod<std::uint32_t>("param_count");
    std::uint32_t expected = 0;
    params.for_each([&](const std::string&, const Tensor&) { ++expected; });
    if (count != expected)
        throw ParseError("parameter count mismatch (" + std::to_string(count) + " stored, " +
                             std::to_string(expected) + " expected)",
                         r.offset - 4, "param_count");

    params.for_each([&](const std::string& name, const Tensor& t) {
        auto& dst = const_cast<Tensor&>(t);
        const auto nlen = r.pod<std::uint16_t>("name_len");
        std::string stored(nlen, '\0');
        r.bytes(stored.data(), nlen, "name");
        if (stored != name)
            throw ParseError("parameter name mismatch: stored '" + stored + "', expected '" + name + "'",
                             r.offset - nlen, "name");
        const auto ndim = r.pod<std::uint8_t>("ndim");
        std::vector<int> dims(ndim);
        for (auto& d : dims) d = r.pod<std::int32_t>("dim");
        if (dims != dst.shape)
            throw ParseError("parameter shape mismatch for '" + name + "'", r.offset, "dims");
        r.bytes(dst.data.data(), dst.data.size() * sizeof(double), "data");
    });
    return params;
}

} // namespace hunet

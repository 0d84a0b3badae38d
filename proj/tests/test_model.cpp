#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "hunet/forward.hpp"
#include "hunet/model.hpp"
#include "hunet/rng.hpp"

using namespace hunet;

namespace {

Tensor random_slice(Rng& rng, int m) {
    Tensor t({1, 1, m, m});
    for (auto& v : t.data) v = rng.uniform(0.0, 1.0);
    // pin the range so slice normalization is the identity in graph/fast comparisons
    t.data.front() = 0.0;
    t.data.back() = 1.0;
    return t;
}

ModelParams tied_posterior_model(int m, int d, Rng& rng) {
    ModelConfig cfg;
    cfg.image_size = m;
    cfg.latent_dim = d;
    ModelParams params = init_model(cfg, rng);
    // posterior := prior with the reference-channel taps zeroed
    auto& prior = params.p.prior;
    auto& post = params.p.posterior;
    for (int i = 0; i < 4; ++i) {
        if (i == 0) {
            const int cout = post.block1[0].w.shape[0];
            const int k = post.block1[0].w.shape[2];
            for (int co = 0; co < cout; ++co)
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) {
                        post.block1[0].w.at({co, 0, dy, dx}) = prior.block1[0].w.at({co, 0, dy, dx});
                        post.block1[0].w.at({co, 1, dy, dx}) = 0.0;
                    }
            post.block1[0].b = prior.block1[0].b;
        } else {
            post.block1[i] = prior.block1[i];
        }
        post.block2[i] = prior.block2[i];
    }
    post.head_mean = prior.head_mean;
    post.head_logvar = prior.head_logvar;
    return params;
}

} // namespace

TEST_CASE("architecture parameter shapes") {
    Rng rng(1);
    ModelConfig cfg;
    cfg.image_size = 16;
    ModelParams p = init_model(cfg, rng);
    CHECK(p.p.conv1.w.shape == std::vector<int>{32, 1, 16, 16});
    CHECK(p.p.conv2.w.shape == std::vector<int>{64, 32, 7, 7});
    CHECK(p.p.conv3.w.shape == std::vector<int>{32, 64, 7, 7});
    CHECK(p.p.conv4.w.shape == std::vector<int>{1, 32, 16, 16});
    CHECK(p.p.ht1.scale_w.shape == std::vector<int>{32, 16, 16});
    CHECK(p.p.ht2.theta.shape == std::vector<int>{64, 16, 16});
    CHECK(p.p.prior.block1[0].w.shape == std::vector<int>{32, 1, 3, 3});
    CHECK(p.p.posterior.block1[0].w.shape == std::vector<int>{32, 2, 3, 3});
    CHECK(p.p.prior.head_mean.w.shape == std::vector<int>{6, 64});
    CHECK(p.p.fuse1.w.shape == std::vector<int>{32, 7, 1, 1});
    CHECK(p.p.fuse3.w.shape == std::vector<int>{1, 32, 1, 1});

    int count = 0;
    p.for_each([&](const std::string&, const Tensor&) { ++count; });
    CHECK(count == 8 + 4 + 20 + 20 + 6); // hu convs, ht grids, two encoders, fusion
}

TEST_CASE("identity start: U near one, prototype near input") {
    Rng rng(2);
    for (int m : {16, 64}) {
        ModelConfig cfg;
        cfg.image_size = m;
        ModelParams params = init_model(cfg, rng);

        Graph g;
        ModelVars v = register_model(g, params);
        Tensor x = random_slice(rng, m);
        Var vx = g.input(x);
        auto hu = hunet_forward_graph(vx, v);

        const Tensor& u = g.value(hu.u);
        CHECK(u.shape == std::vector<int>{1, 1, m, m});
        double dev = 0.0;
        for (double uv : u.data) dev = std::max(dev, std::abs(uv - 1.0));
        INFO("max |U-1| = ", dev, " at m=", m);
        CHECK(dev <= 0.05);

        const Tensor& proto = g.value(mul(vx, hu.u));
        for (std::int64_t i = 0; i < x.numel(); ++i)
            CHECK(std::abs(proto.data[i] - x.data[i]) <= 0.05 * std::max(1.0, std::abs(x.data[i])));
        CHECK(g.value(hu.z_list[0]).shape == std::vector<int>{1, 32, m, m});
        CHECK(g.value(hu.z_list[1]).shape == std::vector<int>{1, 64, m, m});
    }
}

TEST_CASE("scalar field stays positive under fuzzed parameters and inputs") {
    Rng rng(3);
    const int m = 8;
    int nonpos = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        ModelConfig cfg;
        cfg.image_size = m;
        Rng prng = rng.split(trial);
        ModelParams params = init_model(cfg, prng);
        // make some parameter draws wild
        if (trial % 3 == 0)
            params.for_each([&](const std::string&, const Tensor& t) {
                auto& mut = const_cast<Tensor&>(t);
                for (auto& vv : mut.data) vv *= 10.0;
            });
        FastModel<float> fm = FastModel<float>::from(params);
        std::vector<float> x(static_cast<std::size_t>(m) * m);
        for (auto& vv : x) vv = static_cast<float>(prng.uniform(0.0, 1.0));
        auto u = hunet_forward_fast(fm, x);
        for (float uv : u)
            if (!(uv > 0.0f)) ++nonpos;
    }
    CHECK(nonpos == 0);
}

TEST_CASE("encoders are deterministic with positive variances") {
    Rng rng(4);
    ModelConfig cfg;
    cfg.image_size = 16;
    ModelParams params = init_model(cfg, rng);
    Tensor x = random_slice(rng, 16);

    Graph g;
    ModelVars v = register_model(g, params);
    Var vx = g.input(x);
    auto g1 = prior_forward_graph(vx, v);
    auto g2 = prior_forward_graph(vx, v);
    CHECK(g.value(g1.mean).data == g.value(g2.mean).data);
    CHECK(g.value(g1.var).data == g.value(g2.var).data);
    for (double vv : g.value(g1.var).data) CHECK(vv > 0.0);
    CHECK(g.value(g1.mean).shape == std::vector<int>{1, 6});
}

TEST_CASE("weight-tied posterior with zeroed reference taps matches the prior exactly") {
    Rng rng(5);
    ModelParams params = tied_posterior_model(16, 6, rng);
    Tensor x = random_slice(rng, 16);
    Tensor y = random_slice(rng, 16);

    Graph g;
    ModelVars v = register_model(g, params);
    Var vx = g.input(x);
    Var vy = g.input(y);
    auto prior = prior_forward_graph(vx, v);
    auto post = posterior_forward_graph(vx, vy, v);

    LatentGaussian F{g.value(post.mean).data, g.value(post.var).data};
    LatentGaussian G{g.value(prior.mean).data, g.value(prior.var).data};
    CHECK(kl_gaussian(F, G) == 0.0);
}

TEST_CASE("sample_latent statistics and floor behavior") {
    Rng rng(6);
    LatentGaussian g{{1.5, -0.5}, {0.8, 2.0}};
    const int n = 100000;
    std::vector<double> acc(2, 0.0), acc2(2, 0.0);
    for (int i = 0; i < n; ++i) {
        auto r = sample_latent(g, rng);
        for (int d = 0; d < 2; ++d) {
            acc[d] += r[d];
            acc2[d] += r[d] * r[d];
        }
    }
    for (int d = 0; d < 2; ++d) {
        const double mean = acc[d] / n;
        const double var = acc2[d] / n - mean * mean;
        const double se_mean = std::sqrt(g.var[d] / n);
        const double se_var = g.var[d] * std::sqrt(2.0 / n);
        CHECK(std::abs(mean - g.mean[d]) <= 4.0 * se_mean);
        CHECK(std::abs(var - g.var[d]) <= 4.0 * se_var);
    }

    LatentGaussian degenerate{{0.7}, {0.0}};
    auto r = sample_latent(degenerate, rng);
    CHECK(std::abs(r[0] - 0.7) < 0.01); // floored variance keeps the draw at the mean
}

TEST_CASE("pass-through fusion reproduces the prototype exactly") {
    Rng rng(7);
    ModelConfig cfg;
    cfg.image_size = 16;
    ModelParams params = init_model(cfg, rng);
    for (Tensor* t : {&params.p.fuse1.w, &params.p.fuse2.w, &params.p.fuse3.w}) {
        std::fill(t->data.begin(), t->data.end(), 0.0);
        t->data[t->flat({0, 0, 0, 0})] = 1.0;
    }

    Rng r1(123);
    auto res = correct(params, random_slice(rng, 16).data, 16, r1, 2, Precision::f64);
    for (std::int64_t i = 0; i < res.prototype.numel(); ++i) {
        CHECK(res.mean_output.data[i] == res.prototype.data[i]);
        CHECK(res.samples[0].data[i] == res.prototype.data[i]);
    }
}

TEST_CASE("correct() is deterministic and precision paths agree") {
    Rng rng(8);
    ModelConfig cfg;
    cfg.image_size = 16;
    ModelParams params = init_model(cfg, rng);
    Tensor x = random_slice(rng, 16);

    Rng ra(42), rb(42);
    auto a = correct(params, x.data, 16, ra, 3, Precision::f32);
    auto b = correct(params, x.data, 16, rb, 3, Precision::f32);
    CHECK(std::memcmp(a.u.data.data(), b.u.data.data(), a.u.numel() * sizeof(double)) == 0);
    for (int s = 0; s < 3; ++s)
        CHECK(std::memcmp(a.samples[s].data.data(), b.samples[s].data.data(),
                          a.samples[s].numel() * sizeof(double)) == 0);

    Rng rc(42);
    auto c = correct(params, x.data, 16, rc, 1, Precision::f64);
    double dev = 0.0;
    for (std::int64_t i = 0; i < a.u.numel(); ++i)
        dev = std::max(dev, std::abs(a.u.data[i] - c.u.data[i]));
    CHECK(dev < 1e-3); // f32 path against f64 path
    CHECK(a.samples.size() == 3);
    CHECK(c.samples.size() == 1);

    CHECK_THROWS_AS(correct(params, std::vector<double>(15 * 15, 0.0), 15, rc, 1), DimensionError);
    CHECK_THROWS_AS(correct(params, std::vector<double>(32 * 32, 0.0), 32, rc, 1), DimensionError);
}

TEST_CASE("fast f64 forward matches the autodiff graph forward") {
    Rng rng(9);
    ModelConfig cfg;
    cfg.image_size = 16;
    ModelParams params = init_model(cfg, rng);
    Tensor x = random_slice(rng, 16);

    Graph g;
    ModelVars v = register_model(g, params);
    Var vx = g.input(x);
    auto hu = hunet_forward_graph(vx, v);
    auto prior = prior_forward_graph(vx, v);
    Var proto = mul(vx, hu.u);
    Var out = fusion_forward_graph(proto, prior.mean, v);

    FastModel<double> fm = FastModel<double>::from(params);
    std::vector<double> xv = x.data;
    auto u_fast = hunet_forward_fast(fm, xv);
    auto [pmean, pvar] = encoder_forward_fast(fm.prior, xv, 16);
    std::vector<double> proto_fast(u_fast.size());
    for (std::size_t i = 0; i < u_fast.size(); ++i) proto_fast[i] = xv[i] * u_fast[i];
    auto out_fast = fuse_forward_fast(fm, proto_fast, pmean);

    double dev = 0.0;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(u_fast.size()); ++i)
        dev = std::max(dev, std::abs(u_fast[i] - g.value(hu.u).data[i]));
    for (int d = 0; d < 6; ++d) {
        dev = std::max(dev, std::abs(pmean[d] - g.value(prior.mean).data[d]));
        dev = std::max(dev, std::abs(pvar[d] - g.value(prior.var).data[d]));
    }
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_fast.size()); ++i)
        dev = std::max(dev, std::abs(out_fast[i] - g.value(out).data[i]));
    CHECK(dev < 1e-12);
}

TEST_CASE("latent samples change the output even at initialization") {
    Rng rng(10);
    ModelConfig cfg;
    cfg.image_size = 16;
    ModelParams params = init_model(cfg, rng);
    Rng rs(5);
    auto res = correct(params, random_slice(rng, 16).data, 16, rs, 8, Precision::f64);
    double maxstd = 0.0;
    for (std::int64_t i = 0; i < res.samples[0].numel(); ++i) {
        double mean = 0.0;
        for (auto& s : res.samples) mean += s.data[i];
        mean /= res.samples.size();
        double var = 0.0;
        for (auto& s : res.samples) var += (s.data[i] - mean) * (s.data[i] - mean);
        maxstd = std::max(maxstd, std::sqrt(var / res.samples.size()));
    }
    CHECK(maxstd > 0.0);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(11);
    ModelConfig cfg;
    cfg.image_size = 16;
    ModelParams params = init_model(cfg, rng);
    params.epoch = 12;

    const std::string path = "test_ckpt.bin";
    save_checkpoint(params, path);
    ModelParams loaded = load_checkpoint(path);
    CHECK(loaded.cfg.image_size == 16);
    CHECK(loaded.cfg.latent_dim == 6);
    CHECK(loaded.epoch == 12);

    std::vector<const Tensor*> a, b;
    params.for_each([&](const std::string&, const Tensor& t) { a.push_back(&t); });
    loaded.for_each([&](const std::string&, const Tensor& t) { b.push_back(&t); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->shape == b[i]->shape);
        CHECK(std::memcmp(a[i]->data.data(), b[i]->data.data(), a[i]->data.size() * sizeof(double)) == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects malformed files") {
    Rng rng(12);
    ModelConfig cfg;
    cfg.image_size = 8;
    ModelParams params = init_model(cfg, rng);
    const std::string path = "test_ckpt_bad.bin";
    save_checkpoint(params, path);

    // corrupt the magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);

    // rewrite, then truncate
    save_checkpoint(params, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() / 2);
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
        load_checkpoint(path);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
    CHECK_THROWS_AS(load_checkpoint("does_not_exist.bin"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("end-to-end loss gradients match finite differences on a tiny configuration") {
    Rng rng(13);
    ModelConfig cfg;
    cfg.image_size = 8;
    ModelParams params = init_model(cfg, rng);
    Tensor x = random_slice(rng, 8);
    Tensor y = random_slice(rng, 8);
    Tensor eps({1, 6});
    for (auto& v : eps.data) v = rng.normal();
    LossWeights w;

    auto eval = [&](const ModelParams& p) {
        Graph g;
        ModelVars v = register_model(g, p);
        auto out = training_graph(g.input(x), g.input(y), g.input(eps), v, w);
        return g.value(out.loss).data[0];
    };

    Graph g;
    ModelVars v = register_model(g, params);
    auto out = training_graph(g.input(x), g.input(y), g.input(eps), v, w);
    g.backward(out.loss);

    // collect (name, tensor, var) triples in visitation order
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    params.for_each([&](const std::string& n, const Tensor& t) { tensors.emplace_back(n, &t); });
    std::vector<Var> vars;
    visit_params(v, [&](const std::string&, Var& vv) { vars.push_back(vv); });
    REQUIRE(tensors.size() == vars.size());

    Rng pick(99);
    int checked = 0, skipped_kink = 0;
    const double h = 1e-5;
    while (checked + skipped_kink < 50) {
        const std::size_t pi = static_cast<std::size_t>(pick.below(tensors.size()));
        // threshold grids carry a defined gradient convention rather than the
        // a.e.-zero forward derivative; they are verified separately
        if (tensors[pi].first.find("theta") != std::string::npos) continue;
        const std::int64_t e = static_cast<std::int64_t>(pick.below(tensors[pi].second->numel()));

        ModelParams pp = params, pm = params;
        std::size_t idx = 0;
        pp.for_each([&](const std::string&, const Tensor& t) {
            if (idx++ == pi) const_cast<Tensor&>(t).data[e] += h;
        });
        idx = 0;
        pm.for_each([&](const std::string&, const Tensor& t) {
            if (idx++ == pi) const_cast<Tensor&>(t).data[e] -= h;
        });
        const double fd = (eval(pp) - eval(pm)) / (2 * h);

        // a second step size flags kink-contaminated estimates
        ModelParams pp2 = params, pm2 = params;
        idx = 0;
        pp2.for_each([&](const std::string&, const Tensor& t) {
            if (idx++ == pi) const_cast<Tensor&>(t).data[e] += h / 4;
        });
        idx = 0;
        pm2.for_each([&](const std::string&, const Tensor& t) {
            if (idx++ == pi) const_cast<Tensor&>(t).data[e] -= h / 4;
        });
        const double fd2 = (eval(pp2) - eval(pm2)) / (h / 2);
        const double scale = std::max({std::abs(fd), std::abs(fd2), 1e-10});
        if (std::abs(fd - fd2) / scale > 1e-3) {
            ++skipped_kink;
            continue;
        }

        const double an = g.grad(vars[pi]).data[e];
        if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) {
            ++checked;
            continue;
        }
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-12});
        INFO("param ", tensors[pi].first, " entry ", e, " analytic ", an, " fd ", fd);
        CHECK(rel <= 1e-3);
        ++checked;
    }
    CHECK(checked >= 40);
}

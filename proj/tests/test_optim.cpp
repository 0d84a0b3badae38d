#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "hunet/rng.hpp"
#include "hunet/train.hpp"

using namespace hunet;

namespace {

// Minimal reference Adam (no weight decay), derived independently of the
// AdamW implementation under test.
struct RefAdam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    int t = 0;
    explicit RefAdam(double lr, std::size_t n) : lr(lr), m(n, 0.0), v(n, 0.0) {}
    void step(std::vector<double>& p, const std::vector<double>& g) {
        ++t;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            p[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

} // namespace

TEST_CASE("config defaults") {
    TrainConfig c;
    CHECK(c.learning_rate == 1e-4);
    CHECK(c.batch_size == 128);
    CHECK(c.epochs == 100);
    CHECK(c.weight_decay == 1e-2);
    CHECK(c.image_size == 256);

    TrainConfig d = TrainConfig::desk();
    CHECK(d.batch_size == 16);
    CHECK(d.epochs == 30);
    CHECK(d.image_size == 64);
}

TEST_CASE("adamw zero gradient without decay leaves parameters unchanged") {
    Tensor p({3}, {1.0, -2.0, 0.5});
    Tensor g = Tensor::zeros({3});

    AdamWConfig nc;
    nc.weight_decay = 0.0;
    AdamW opt(nc);
    Tensor p0 = p;
    opt.step({&p}, {&g});
    opt.step({&p}, {&g});
    CHECK(p.data == p0.data);
}

TEST_CASE("adamw decoupled decay scales parameters") {
    AdamWConfig dc;
    dc.lr = 0.01;
    dc.weight_decay = 0.1;
    AdamW opt(dc);
    Tensor p({2}, {4.0, -8.0});
    Tensor g = Tensor::zeros({2});
    opt.step({&p}, {&g});
    CHECK(p.data[0] == doctest::Approx(4.0 * (1 - 0.01 * 0.1)).epsilon(1e-15));
    CHECK(p.data[1] == doctest::Approx(-8.0 * (1 - 0.01 * 0.1)).epsilon(1e-15));
    opt.step({&p}, {&g});
    CHECK(p.data[0] == doctest::Approx(4.0 * std::pow(1 - 0.001, 2)).epsilon(1e-14));
}

TEST_CASE("adamw constant-gradient step approaches lr * sign(g)") {
    AdamWConfig c;
    c.lr = 0.05;
    c.weight_decay = 0.0;
    AdamW opt(c);
    Tensor p({2}, {0.0, 0.0});
    Tensor g({2}, {0.37, -2.2});
    double prev0 = p.data[0];
    for (int t = 0; t < 1000; ++t) {
        prev0 = p.data[0];
        opt.step({&p}, {&g});
    }
    CHECK(std::abs(p.data[0] - prev0) == doctest::Approx(c.lr).epsilon(1e-6));
    CHECK(p.data[0] < 0.0);
    CHECK(p.data[1] > 0.0);
}

TEST_CASE("adamw with wd=0 matches reference Adam on a quadratic bowl") {
    AdamWConfig c;
    c.lr = 0.1;
    c.weight_decay = 0.0;
    AdamW opt(c);
    Tensor p({3}, {5.0, -3.0, 1.0});
    std::vector<double> pref = p.data;
    RefAdam ref(0.1, 3);
    const std::vector<double> target{1.0, 2.0, -0.5};
    for (int t = 0; t < 100; ++t) {
        Tensor g({3});
        std::vector<double> gref(3);
        for (int i = 0; i < 3; ++i) {
            g.data[i] = p.data[i] - target[i];
            gref[i] = pref[i] - target[i];
        }
        opt.step({&p}, {&g});
        ref.step(pref, gref);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(p.data[i] - pref[i]) < 1e-10);
    }
}

TEST_CASE("adamw rejects shape mismatches") {
    AdamW opt(AdamWConfig{});
    Tensor p({3});
    Tensor g({4});
    CHECK_THROWS_AS(opt.step({&p}, {&g}), DimensionError);
}

TEST_CASE("training overfits a single pair with MSE only") {
    Rng rng(31);
    const int m = 8;
    TrainPair pair;
    pair.x.resize(m * m);
    pair.y.resize(m * m);
    for (int i = 0; i < m * m; ++i) {
        pair.x[i] = rng.uniform(0.1, 0.9);
        pair.y[i] = pair.x[i] * rng.uniform(0.8, 1.25); // consistent multiplicative pair
    }

    TrainConfig cfg = TrainConfig::desk();
    cfg.image_size = m;
    cfg.batch_size = 1;
    cfg.epochs = 800;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 0.0;
    cfg.weights = LossWeights{0.0, 0.0, 0.0, 1.0, 0.05};
    cfg.seed = 7;

    auto result = train({pair}, cfg);
    REQUIRE(result.history.size() == 800);
    CHECK(result.history.back().mse < 1e-3);
}

TEST_CASE("loss history length equals epochs and seeds reproduce bitwise") {
    Rng rng(32);
    const int m = 8;
    std::vector<TrainPair> data(6);
    for (auto& p : data) {
        p.x.resize(m * m);
        p.y.resize(m * m);
        for (int i = 0; i < m * m; ++i) {
            p.y[i] = rng.uniform(0.1, 0.9);
            p.x[i] = p.y[i] * rng.uniform(0.8, 1.25);
        }
    }
    TrainConfig cfg = TrainConfig::desk();
    cfg.image_size = m;
    cfg.batch_size = 3;
    cfg.epochs = 5;
    cfg.seed = 99;

    auto r1 = train(data, cfg);
    auto r2 = train(data, cfg);
    REQUIRE(r1.history.size() == 5);
    REQUIRE(r2.history.size() == 5);
    CHECK(std::memcmp(r1.history.data(), r2.history.data(), r1.history.size() * sizeof(EpochRecord)) == 0);

    cfg.seed = 100;
    auto r3 = train(data, cfg);
    bool differs = false;
    for (std::size_t i = 0; i < r3.history.size(); ++i)
        differs = differs || r3.history[i].total != r1.history[i].total;
    CHECK(differs);
}

TEST_CASE("training aborts with a named component on divergence") {
    Rng rng(33);
    const int m = 8;
    TrainPair pair;
    pair.x.assign(m * m, 0.5);
    pair.y.assign(m * m, 0.5);
    pair.x[0] = 0.0;
    pair.x[1] = 1.0;

    TrainConfig cfg = TrainConfig::desk();
    cfg.image_size = m;
    cfg.batch_size = 1;
    cfg.epochs = 50;
    cfg.learning_rate = 1e14; // force a blow-up
    cfg.seed = 1;
    CHECK_THROWS_AS(train({pair}, cfg), NonFiniteError);
}

TEST_CASE("training rejects bad inputs") {
    TrainConfig cfg = TrainConfig::desk();
    CHECK_THROWS_AS(train({}, cfg), ContractError);
    TrainPair wrong;
    wrong.x.assign(10, 0.0);
    wrong.y.assign(10, 0.0);
    CHECK_THROWS_AS(train({wrong}, cfg), DimensionError);
}

TEST_CASE("resume continues epoch numbering") {
    Rng rng(34);
    const int m = 8;
    std::vector<TrainPair> data(2);
    for (auto& p : data) {
        p.x.resize(m * m);
        p.y.resize(m * m);
        for (int i = 0; i < m * m; ++i) {
            p.y[i] = rng.uniform(0.1, 0.9);
            p.x[i] = p.y[i];
        }
    }
    TrainConfig cfg = TrainConfig::desk();
    cfg.image_size = m;
    cfg.batch_size = 2;
    cfg.epochs = 3;
    cfg.seed = 5;
    auto first = train(data, cfg);
    CHECK(first.params.epoch == 3);
    auto second = train(data, cfg, "", first.params);
    REQUIRE(second.history.size() == 3);
    CHECK(second.history.front().epoch == 4);
    CHECK(second.params.epoch == 6);
}

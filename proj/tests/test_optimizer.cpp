#include <cmath>
#include <vector>

#include "doctest.h"
#include "vitdp/errors.hpp"
#include "vitdp/optimizer.hpp"
#include "vitdp/rng.hpp"

using vitdp::ParamSet;
using vitdp::Tensor;
using vitdp::TrainConfig;

namespace {

ParamSet<double> two_tensors(uint64_t seed) {
    vitdp::Rng rng(seed);
    ParamSet<double> p;
    Tensor<double> a({2, 3}), b({4});
    for (auto& v : a.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b.data) v = rng.uniform(-1.0, 1.0);
    p.add("a", std::move(a));
    p.add("b", std::move(b));
    return p;
}

TrainConfig sgd_config(double lr, double mu) {
    TrainConfig cfg;
    cfg.optimizer = vitdp::OptimizerKind::sgd;
    cfg.learning_rate = lr;
    cfg.momentum = mu;
    return cfg;
}

TrainConfig adam_config(double lr) {
    TrainConfig cfg;
    cfg.optimizer = vitdp::OptimizerKind::adam;
    cfg.learning_rate = lr;
    return cfg;
}

}  // namespace

TEST_CASE("make_optimizer sizes state to the parameters") {
    auto params = two_tensors(1);
    auto sgd = vitdp::make_optimizer(sgd_config(0.1, 0.9), params);
    CHECK(sgd.kind == vitdp::OptimizerKind::sgd);
    CHECK(sgd.step == 0);
    REQUIRE(sgd.m.count() == 2);
    CHECK(sgd.v.count() == 0);
    CHECK(sgd.m.total_elems() == params.total_elems());
    for (const auto& [name, t] : sgd.m.entries)
        for (double z : t.data) CHECK(z == 0.0);

    auto adam = vitdp::make_optimizer(adam_config(0.001), params);
    CHECK(adam.kind == vitdp::OptimizerKind::adam);
    CHECK(adam.m.total_elems() == params.total_elems());
    CHECK(adam.v.total_elems() == params.total_elems());
}

TEST_CASE("plain sgd takes exact gradient steps") {
    ParamSet<double> p;
    p.add("w", Tensor<double>({2}, {1.0, -2.0}));
    ParamSet<double> g;
    g.add("w", Tensor<double>({2}, {0.5, 0.25}));
    auto st = vitdp::make_optimizer(sgd_config(0.1, 0.0), p);
    vitdp::optimizer_step(st, p, g);
    CHECK(p.at("w").data[0] == 1.0 - 0.1 * 0.5);
    CHECK(p.at("w").data[1] == -2.0 - 0.1 * 0.25);
    CHECK(st.step == 1);
    vitdp::optimizer_step(st, p, g);
    CHECK(st.step == 2);
    CHECK(p.at("w").data[0] == doctest::Approx(1.0 - 2 * 0.1 * 0.5).epsilon(1e-15));
}

TEST_CASE("sgd momentum matches a hand-run recurrence") {
    auto params = two_tensors(2);
    auto ref_params = params;
    const double lr = 0.05, mu = 0.9;
    auto st = vitdp::make_optimizer(sgd_config(lr, mu), params);

    std::vector<double> velo(static_cast<size_t>(params.total_elems()), 0.0);
    vitdp::Rng rng(33);
    for (int step = 0; step < 5; ++step) {
        auto grads = vitdp::zeros_like(params);
        for (auto& [name, t] : grads.entries)
            for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
        vitdp::optimizer_step(st, params, grads);

        auto flatg = grads.flatten();
        auto flatp = ref_params.flatten();
        for (size_t i = 0; i < velo.size(); ++i) {
            velo[i] = mu * velo[i] + flatg[i];
            flatp[i] -= lr * velo[i];
        }
        ref_params.unflatten(flatp);

        auto got = params.flatten();
        auto want = ref_params.flatten();
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
    }
}

TEST_CASE("adam first step moves each coordinate by about the learning rate") {
    ParamSet<double> p;
    p.add("w", Tensor<double>({3}, {0.0, 1.0, -1.0}));
    ParamSet<double> g;
    g.add("w", Tensor<double>({3}, {10.0, -0.01, 3.0}));
    const double lr = 0.002;
    auto st = vitdp::make_optimizer(adam_config(lr), p);
    vitdp::optimizer_step(st, p, g);
    // With bias correction, |update| = lr * g / (|g| + eps') regardless of scale.
    CHECK(p.at("w").data[0] == doctest::Approx(0.0 - lr).epsilon(1e-4));
    CHECK(p.at("w").data[1] == doctest::Approx(1.0 + lr).epsilon(1e-4));
    CHECK(p.at("w").data[2] == doctest::Approx(-1.0 - lr).epsilon(1e-4));
}

TEST_CASE("adam matches an independent reference over many steps") {
    auto params = two_tensors(3);
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    TrainConfig cfg = adam_config(lr);
    cfg.beta1 = b1;
    cfg.beta2 = b2;
    cfg.adam_eps = eps;
    auto st = vitdp::make_optimizer(cfg, params);

    const size_t n = static_cast<size_t>(params.total_elems());
    std::vector<double> m(n, 0.0), v(n, 0.0), ref = params.flatten();
    vitdp::Rng rng(44);
    for (int step = 1; step <= 20; ++step) {
        auto grads = vitdp::zeros_like(params);
        for (auto& [name, t] : grads.entries)
            for (auto& x : t.data) x = rng.uniform(-2.0, 2.0);
        vitdp::optimizer_step(st, params, grads);

        auto fg = grads.flatten();
        for (size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * fg[i];
            v[i] = b2 * v[i] + (1.0 - b2) * fg[i] * fg[i];
            const double mhat = m[i] / (1.0 - std::pow(b1, step));
            const double vhat = v[i] / (1.0 - std::pow(b2, step));
            ref[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        auto got = params.flatten();
        for (size_t i = 0; i < n; ++i) {
            const double denom = std::max(1.0, std::abs(ref[i]));
            CHECK(std::abs(got[i] - ref[i]) / denom < 1e-12);
        }
    }
    CHECK(st.step == 20);
}

TEST_CASE("optimizer_step rejects mismatched gradient shapes") {
    auto params = two_tensors(4);
    auto st = vitdp::make_optimizer(sgd_config(0.1, 0.0), params);
    ParamSet<double> bad;
    bad.add("a", Tensor<double>({2, 3}));
    CHECK_THROWS_AS(vitdp::optimizer_step(st, params, bad), vitdp::ShapeError);
    ParamSet<double> wrong_shape;
    wrong_shape.add("a", Tensor<double>({3, 2}));
    wrong_shape.add("b", Tensor<double>({4}));
    CHECK_THROWS_AS(vitdp::optimizer_step(st, params, wrong_shape), vitdp::ShapeError);
}

TEST_CASE("float and double paths implement the same update") {
    auto params = two_tensors(5);
    auto fparams = params.cast<float>();
    auto stf = vitdp::make_optimizer(sgd_config(0.1, 0.9), fparams);
    auto std_ = vitdp::make_optimizer(sgd_config(0.1, 0.9), params);
    auto grads = vitdp::zeros_like(params);
    vitdp::Rng rng(6);
    for (auto& [name, t] : grads.entries)
        for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    auto fgrads = grads.cast<float>();
    vitdp::optimizer_step(std_, params, grads);
    vitdp::optimizer_step(stf, fparams, fgrads);
    auto d = params.flatten();
    auto f = fparams.flatten();
    for (size_t i = 0; i < d.size(); ++i)
        CHECK(static_cast<float>(f[i]) == doctest::Approx(static_cast<float>(d[i])).epsilon(1e-6));
}

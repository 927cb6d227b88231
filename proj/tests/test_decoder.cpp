#include "doctest.h"

#include "genshin/decoder.hpp"
#include "genshin/grad_check.hpp"
#include "genshin/graph.hpp"
#include "genshin/rng.hpp"

#include <cmath>
#include <cstring>

using namespace genshin;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

void check_row_stochastic(const Tensor& a) {
    const std::size_t n = a.shape()[1];
    for (std::size_t r = 0; r < a.shape()[0]; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            CHECK(a.at({r, c}) >= 0.0);
            total += a.at({r, c});
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

struct Fixture {
    ModelConfig cfg = ModelConfig::toy();
    std::size_t nodes = 5;
    std::size_t batch = 3;
    ParamStore store;
    Tensor h_t, h_mem, a_init;
    std::vector<Tensor> states;

    explicit Fixture(bool static_graph = false) : store(17) {
        cfg.ablation.static_graph = static_graph;
        add_decoder_params(store, cfg, cfg.cheb_order + 1);
        Rng rng(4);
        h_t = random_tensor(rng, {batch, nodes, cfg.hidden_dim});
        h_mem = random_tensor(rng, {batch, nodes, cfg.proto_dim});
        a_init = row_normalize_real(random_tensor(rng, {nodes, nodes}, 0.0, 1.0));
        for (std::size_t l = 0; l < cfg.gcru_layers; ++l) states.push_back(random_tensor(rng, {batch, nodes, cfg.hidden_dim}));
    }

    DecodeInputs inputs() const { return {h_t, h_mem, states, a_init, nullptr, 0.0}; }
};

}  // namespace

TEST_CASE("update_graph") {
    Rng rng(2);
    SUBCASE("zero weights leave the graph unchanged") {
        UpdaterWeights w{Tensor::zeros({6, 4}), Tensor::zeros({4}), Tensor::zeros({4, 3}), Tensor::zeros({4, 3}), 0.1};
        Tensor a = row_normalize_real(random_tensor(rng, {3, 3}, 0.0, 1.0));
        Tensor out = update_graph(random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 2}), a, w);
        CHECK(bitwise_equal(out, a));
    }
    SUBCASE("mass added to one column shrinks the others") {
        // Hidden = [tanh(h0), tanh(1)]; U reads the constant unit, V the node feature.
        const double feature = 0.8, eta = 0.1;
        Tensor h({1, 2, 2}, {0.0, 0.0, feature, 0.0});
        UpdaterWeights w{Tensor({2, 2}, {1, 0, 0, 0}), Tensor({2}, {0.0, 1.0}), Tensor({2, 1}, {0.0, 1.0}),
                         Tensor({2, 1}, {1.0, 0.0}), eta};
        Tensor a({2, 2}, {0.6, 0.4, 0.3, 0.7});
        Tensor out = update_graph(h, Tensor(), a, w);
        const double delta = eta * std::tanh(1.0) * std::tanh(feature);
        CHECK(out.at({0, 0}) == doctest::Approx(0.6 / (1 + delta)).epsilon(1e-14));
        CHECK(out.at({0, 1}) == doctest::Approx((0.4 + delta) / (1 + delta)).epsilon(1e-14));
        CHECK(out.at({1, 0}) == doctest::Approx(0.3 / (1 + delta)).epsilon(1e-14));
        CHECK(out.at({0, 0}) < 0.6);
        CHECK(out.at({1, 0}) < 0.3);
    }
    SUBCASE("repeated updates stay row-stochastic") {
        UpdaterWeights w{random_tensor(rng, {6, 4}, -2, 2), random_tensor(rng, {4}), random_tensor(rng, {4, 3}, -2, 2),
                         random_tensor(rng, {4, 3}, -2, 2), 0.5};
        Tensor a = row_normalize_real(random_tensor(rng, {4, 4}, 0.0, 1.0));
        for (int step = 0; step < 50; ++step) {
            a = update_graph(random_tensor(rng, {2, 4, 4}), random_tensor(rng, {2, 4, 2}), a, w);
            check_row_stochastic(a);
        }
    }
    SUBCASE("gradients match central differences") {
        Tensor h = random_tensor(rng, {2, 3, 2});
        Tensor m = random_tensor(rng, {2, 3, 2});
        Tensor a = row_normalize_real(random_tensor(rng, {3, 3}, 0.0, 1.0));
        Tensor probe = random_tensor(rng, {3, 3});
        std::vector<Tensor> in = {random_tensor(rng, {4, 5}), random_tensor(rng, {5}), random_tensor(rng, {5, 2}),
                                  random_tensor(rng, {5, 2}), h, m};
        auto f = [&](const std::vector<Tensor>& p) {
            UpdaterWeights w{p[0], p[1], p[2], p[3], 0.3};
            return sum_all(mul(update_graph(p[4], p[5], a, w), probe));
        };
        auto report = grad_check(f, in, 1e-5, 1e-6);
        CHECK(report.max_rel_error() < 1e-6);
    }
}

TEST_CASE("decode shapes and graph trajectory") {
    Fixture fx;
    Rng rng(0);
    SUBCASE("single step") {
        auto out = decode(fx.inputs(), fx.store, fx.cfg, 1, rng, true);
        CHECK(out.y_hat.shape() == Shape{fx.batch, 1, fx.nodes, 1});
        CHECK(out.graphs.size() == 1);
        CHECK_FALSE(bitwise_equal(out.graphs[0], fx.a_init));
    }
    SUBCASE("every step keeps a row-stochastic graph") {
        auto out = decode(fx.inputs(), fx.store, fx.cfg, 7, rng, true);
        CHECK(out.y_hat.shape() == Shape{fx.batch, 7, fx.nodes, 1});
        REQUIRE(out.graphs.size() == 7);
        for (const auto& g : out.graphs) check_row_stochastic(g);
    }
    SUBCASE("static graph ablation freezes the seed graph") {
        Fixture frozen(true);
        CHECK_FALSE(frozen.store.contains("upd.w1"));
        auto out = decode(frozen.inputs(), frozen.store, frozen.cfg, 4, rng, true);
        for (const auto& g : out.graphs) CHECK(bitwise_equal(g, frozen.a_init));
    }
    CHECK_THROWS_AS(decode(fx.inputs(), fx.store, fx.cfg, 0, rng), std::invalid_argument);
    auto bad = fx.inputs();
    bad.tf_prob = 0.5;
    CHECK_THROWS_AS(decode(bad, fx.store, fx.cfg, 3, rng), std::invalid_argument);
}

TEST_CASE("zeroed updater reproduces the static ablation bitwise") {
    Fixture dynamic;
    for (const char* name : {"upd.w1", "upd.b1", "upd.wu", "upd.wv"}) {
        for (double& v : dynamic.store.get(name).data_mut()) v = 0.0;
    }
    Fixture frozen(true);
    Rng r1(0), r2(0);
    auto a = decode(dynamic.inputs(), dynamic.store, dynamic.cfg, 5, r1);
    auto b = decode(frozen.inputs(), frozen.store, frozen.cfg, 5, r2);
    CHECK(bitwise_equal(a.y_hat, b.y_hat));
}

TEST_CASE("teacher forcing with the model's own outputs is a no-op") {
    Fixture fx;
    Rng rng(0);
    auto free_run = decode(fx.inputs(), fx.store, fx.cfg, 4, rng);
    auto in = fx.inputs();
    in.teacher = &free_run.y_hat;
    in.tf_prob = 1.0;
    auto forced = decode(in, fx.store, fx.cfg, 4, rng);
    CHECK(bitwise_equal(free_run.y_hat, forced.y_hat));

    // Forcing with different targets changes every step after the first.
    Tensor other = add_scalar(free_run.y_hat, 1.0);
    in.teacher = &other;
    auto shifted = decode(in, fx.store, fx.cfg, 4, rng);
    CHECK(bitwise_equal(slice(shifted.y_hat, 1, 0, 1), slice(free_run.y_hat, 1, 0, 1)));
    CHECK_FALSE(bitwise_equal(slice(shifted.y_hat, 1, 1, 1), slice(free_run.y_hat, 1, 1, 1)));
}

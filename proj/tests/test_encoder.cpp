#include "doctest.h"

#include "genshin/encoder.hpp"
#include "genshin/graph.hpp"
#include "genshin/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace genshin;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

GcruWeights constant_gcru(std::size_t rows, std::size_t hidden, double bz, double br, double bh) {
    return {Tensor::zeros({rows, hidden}), Tensor::zeros({rows, hidden}), Tensor::zeros({rows, hidden}),
            Tensor({hidden}, bz),          Tensor({hidden}, br),          Tensor({hidden}, bh)};
}

// P with P[i, perm[i]] = 1, so (P·X)[i] = X[perm[i]].
Tensor permutation_matrix(const std::vector<std::size_t>& perm) {
    const std::size_t n = perm.size();
    Tensor p = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) p.data_mut()[i * n + perm[i]] = 1.0;
    return p;
}

}  // namespace

TEST_CASE("gcru gate endpoints") {
    Rng rng(1);
    const std::size_t batch = 2, nodes = 3, in = 2, hidden = 4;
    Tensor x = random_tensor(rng, {batch, nodes, in});
    Tensor h_prev = random_tensor(rng, {batch, nodes, hidden});
    const std::vector<Tensor> supports = {Tensor::eye(nodes)};
    const std::size_t rows = in + hidden;

    SUBCASE("open update gate keeps the previous state") {
        auto step = gcru_cell(x, h_prev, supports, constant_gcru(rows, hidden, 60.0, 0.0, 0.3));
        for (std::size_t i = 0; i < step.h.numel(); ++i) CHECK(step.h.data()[i] == doctest::Approx(h_prev.data()[i]).epsilon(1e-15));
    }
    SUBCASE("closed update gate takes the candidate") {
        auto step = gcru_cell(x, h_prev, supports, constant_gcru(rows, hidden, -60.0, 0.0, 0.3));
        for (double v : step.h.data()) CHECK(v == doctest::Approx(std::tanh(0.3)).epsilon(1e-12));
    }
    SUBCASE("zero weights halve the state") {
        auto step = gcru_cell(x, h_prev, supports, constant_gcru(rows, hidden, 0.0, 0.0, 0.0));
        for (std::size_t i = 0; i < step.h.numel(); ++i) CHECK(step.h.data()[i] == 0.5 * h_prev.data()[i]);
        for (double v : step.z.data()) CHECK(v == 0.5);
    }
}

TEST_CASE("gcru state is a convex blend with gates in [0, 1]") {
    Rng rng(2);
    const std::size_t nodes = 4, in = 3, hidden = 5;
    Tensor adj = row_normalize_real(random_tensor(rng, {nodes, nodes}, 0.0, 1.0));
    const auto supports = chebyshev_supports(adj, 2);
    const std::size_t rows = supports.size() * (in + hidden);
    std::size_t samples = 0;
    for (int trial = 0; trial < 10; ++trial) {
        GcruWeights w{random_tensor(rng, {rows, hidden}, -2, 2), random_tensor(rng, {rows, hidden}, -2, 2),
                      random_tensor(rng, {rows, hidden}, -2, 2), random_tensor(rng, {hidden}),
                      random_tensor(rng, {hidden}),             random_tensor(rng, {hidden})};
        Tensor x = random_tensor(rng, {5, nodes, in}, -3, 3);
        Tensor h_prev = random_tensor(rng, {5, nodes, hidden});
        auto step = gcru_cell(x, h_prev, supports, w);
        for (std::size_t i = 0; i < step.h.numel(); ++i, ++samples) {
            const double z = step.z.data()[i], r = step.r.data()[i];
            CHECK((z >= 0.0 && z <= 1.0));
            CHECK((r >= 0.0 && r <= 1.0));
            const double a = h_prev.data()[i], b = step.candidate.data()[i];
            const double v = step.h.data()[i];
            CHECK(v >= std::min(a, b) - 1e-12);
            CHECK(v <= std::max(a, b) + 1e-12);
        }
    }
    CHECK(samples >= 1000);
}

TEST_CASE("transformer attention") {
    Rng rng(3);
    ParamStore store(5);
    add_transformer_params(store, "tf", 4, 16);
    const auto w = transformer_weights(store, "tf");

    SUBCASE("a single step attends to itself") {
        Tensor attn;
        transformer_layer(random_tensor(rng, {6, 1, 4}), w, 2, 0.0, false, rng, &attn);
        CHECK(attn.shape() == Shape{6, 2, 1, 1});
        for (double v : attn.data()) CHECK(v == 1.0);
    }
    SUBCASE("weights are distributions over keys") {
        Tensor attn;
        transformer_layer(random_tensor(rng, {3, 5, 4}, -3, 3), w, 2, 0.0, false, rng, &attn);
        const auto d = attn.data();
        for (std::size_t row = 0; row < d.size() / 5; ++row) {
            double total = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                CHECK(d[row * 5 + k] >= 0.0);
                total += d[row * 5 + k];
            }
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
    }
    SUBCASE("sequences are processed independently") {
        Tensor x = random_tensor(rng, {4, 3, 4});
        Tensor full = transformer_layer(x, w, 2, 0.0, false, rng);
        Tensor one = transformer_layer(slice(x, 0, 2, 1), w, 2, 0.0, false, rng);
        Tensor part = slice(full, 0, 2, 1);
        for (std::size_t i = 0; i < one.numel(); ++i) CHECK(one.data()[i] == doctest::Approx(part.data()[i]).epsilon(1e-13));
    }
}

TEST_CASE("positional encoding") {
    Tensor pe = positional_encoding(4, 6);
    CHECK(pe.at({0, 0}) == 0.0);
    CHECK(pe.at({0, 1}) == 1.0);
    CHECK(pe.at({2, 0}) == doctest::Approx(std::sin(2.0)));
    CHECK(pe.at({1, 3}) == doctest::Approx(std::cos(std::pow(10000.0, -2.0 / 6.0))));
}

TEST_CASE("encoder is equivariant to node relabeling") {
    ModelConfig cfg = ModelConfig::toy();
    cfg.n_nodes = 5;
    Rng rng(4);
    Tensor adj = row_normalize_real(random_tensor(rng, {5, 5}, 0.0, 1.0));
    auto supports = chebyshev_supports(adj, cfg.cheb_order);
    ParamStore store(9);
    add_encoder_params(store, cfg, supports.size());

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    const Tensor p = permutation_matrix(perm);
    std::vector<Tensor> permuted_supports;
    for (const auto& s : supports) permuted_supports.push_back(matmul(matmul(p, s), transpose(p, 0, 1)));

    Tensor x = random_tensor(rng, {2, cfg.window, 5, 1}, -2, 2);
    Rng r1(0), r2(0);
    auto base = encode(x, supports, store, cfg, false, r1);
    auto moved = encode(matmul(p, x), permuted_supports, store, cfg, false, r2);
    Tensor expected = matmul(p, base.h_t);
    REQUIRE(moved.h_t.shape() == expected.shape());
    for (std::size_t i = 0; i < expected.numel(); ++i) {
        CHECK(moved.h_t.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("encoder outputs and ablation") {
    ModelConfig cfg = ModelConfig::toy();
    Rng rng(6);
    const std::size_t n = 4;
    auto supports = chebyshev_supports(Tensor::eye(n), cfg.cheb_order);
    Tensor x = random_tensor(rng, {3, cfg.window, n, 1});

    ParamStore store(1);
    add_encoder_params(store, cfg, supports.size());
    auto out = encode(x, supports, store, cfg, false, rng, true);
    CHECK(out.h_gcru.shape() == Shape{3, cfg.window, n, cfg.hidden_dim});
    CHECK(out.h_t.shape() == Shape{3, n, cfg.hidden_dim});
    CHECK(out.final_states.size() == cfg.gcru_layers);
    REQUIRE(out.attention.size() == cfg.transformer_layers);
    CHECK(out.attention[0].shape() == Shape{3 * n, cfg.n_heads, cfg.window, cfg.window});

    cfg.ablation.no_transformer = true;
    ParamStore plain(1);
    add_encoder_params(plain, cfg, supports.size());
    CHECK_FALSE(plain.contains("enc.tf0.wq"));
    auto bare = encode(x, supports, plain, cfg, false, rng);
    const auto last = bare.final_states.back().data();
    CHECK(std::equal(last.begin(), last.end(), bare.h_t.data().begin()));
    // Shared GCRU parameters are identical across the two stores.
    const auto a = store.get("enc.gcru1.wz").data();
    CHECK(std::equal(a.begin(), a.end(), plain.get("enc.gcru1.wz").data().begin()));

    CHECK_THROWS_AS(encode(Tensor::zeros({3, n, 1}), supports, plain, cfg, false, rng), ShapeError);
    CHECK_THROWS_AS(encode(Tensor::zeros({1, 2, n, 2}), supports, plain, cfg, false, rng), ShapeError);
}

#include "doctest.h"

#include "genshin/memory.hpp"
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

}  // namespace

TEST_CASE("top2") {
    const std::vector<double> a = {0.1, 0.5, 0.3, 0.05, 0.05};
    CHECK(top2(a) == std::pair<std::size_t, std::size_t>{1, 2});
    const std::vector<double> b = {0.25, 0.25, 0.25, 0.25};
    CHECK(top2(b) == std::pair<std::size_t, std::size_t>{0, 1});
    const std::vector<double> c = {0.1, 0.4, 0.1, 0.4};
    CHECK(top2(c) == std::pair<std::size_t, std::size_t>{1, 3});
    const std::vector<double> d = {0.9, 0.1};
    CHECK(top2(d) == std::pair<std::size_t, std::size_t>{0, 1});
    const std::vector<double> one = {1.0};
    CHECK_THROWS_AS(top2(one), std::invalid_argument);
}

TEST_CASE("top2 agrees with a stable sort") {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + rng.below(9);
        std::vector<double> row(k);
        // Coarse values force frequent ties.
        for (auto& v : row) v = static_cast<double>(rng.below(4));
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return row[i] > row[j]; });
        CHECK(top2(row) == std::pair<std::size_t, std::size_t>{order[0], order[1]});
    }
}

TEST_CASE("memory readout") {
    Rng rng(5);
    const std::size_t dm = 4, k = 3;
    Tensor memory = random_tensor(rng, {k, dm});

    SUBCASE("zero query reads the prototype mean") {
        auto r = query_memory(random_tensor(rng, {2, 3, 5}), Tensor::zeros({5, dm}), memory);
        for (double s : r.s.data()) CHECK(s == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        for (std::size_t d = 0; d < dm; ++d) {
            const double mean = (memory.at({0, d}) + memory.at({1, d}) + memory.at({2, d})) / 3.0;
            CHECK(r.h_mem.at({1, 2, d}) == doctest::Approx(mean).epsilon(1e-14));
        }
        CHECK(r.pos_idx[0] == 0);
        CHECK(r.neg_idx[0] == 1);
    }
    SUBCASE("a sharp query saturates on one prototype") {
        Tensor proto({k, dm}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
        // H = One-hot state, W_q scaled so Q = 200·e_2.
        Tensor h({1, 1, 2}, {1.0, 0.0});
        Tensor wq({2, dm}, {0, 200, 0, 0, 0, 0, 0, 0});
        auto r = query_memory(h, wq, proto);
        CHECK(r.s.at({0, 0, 1}) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(r.h_mem.at({0, 0, 1}) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(r.pos_idx[0] == 1);
    }
    SUBCASE("scores use the square-root temperature") {
        Tensor h = random_tensor(rng, {1, 2, 3});
        Tensor wq = random_tensor(rng, {3, dm});
        auto r = query_memory(h, wq, memory);
        for (std::size_t n = 0; n < 2; ++n) {
            std::vector<double> logits(k);
            for (std::size_t j = 0; j < k; ++j)
                for (std::size_t d = 0; d < dm; ++d) logits[j] += r.q.at({0, n, d}) * memory.at({j, d}) / 2.0;
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double l : logits) z += std::exp(l - mx);
            for (std::size_t j = 0; j < k; ++j)
                CHECK(r.s.at({0, n, j}) == doctest::Approx(std::exp(logits[j] - mx) / z).epsilon(1e-13));
        }
    }
    SUBCASE("readout stays inside the prototype bounding box") {
        auto r = query_memory(random_tensor(rng, {4, 5, 6}, -5, 5), random_tensor(rng, {6, dm}, -3, 3), memory);
        for (std::size_t i = 0; i < r.h_mem.numel(); ++i) {
            const std::size_t d = i % dm;
            double lo = memory.at({0, d}), hi = lo;
            for (std::size_t j = 1; j < k; ++j) {
                lo = std::min(lo, memory.at({j, d}));
                hi = std::max(hi, memory.at({j, d}));
            }
            CHECK(r.h_mem.data()[i] >= lo - 1e-12);
            CHECK(r.h_mem.data()[i] <= hi + 1e-12);
        }
        CHECK(r.pos_idx.size() == 20);
    }
    CHECK_THROWS_AS(query_memory(Tensor::zeros({1, 1, 2}), Tensor::zeros({2, dm}), Tensor::zeros({1, dm})),
                    std::invalid_argument);
    CHECK_THROWS_AS(query_memory(Tensor::zeros({1, 1, 2}), Tensor::zeros({3, dm}), memory), ShapeError);
}

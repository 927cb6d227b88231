#include "doctest.h"

#include "genshin/grad_check.hpp"
#include "genshin/losses.hpp"
#include "genshin/rng.hpp"

#include <cmath>
#include <sstream>

using namespace genshin;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

MemoryReadout manual_readout(Tensor q, std::vector<std::size_t> pos, std::vector<std::size_t> neg) {
    MemoryReadout r;
    r.q = std::move(q);
    r.pos_idx = std::move(pos);
    r.neg_idx = std::move(neg);
    return r;
}

}  // namespace

TEST_CASE("task loss") {
    Tensor y({2}, {3.0, 0.0});
    CHECK(task_loss(y, y).item() == 0.0);
    CHECK(task_loss(add_scalar(y, 1.0), y).item() == 1.0);
    CHECK(task_loss(Tensor({2}, {1.0, 2.0}), y).item() == 2.0);
    CHECK_THROWS(task_loss(Tensor::zeros({0}), Tensor::zeros({0})));
    CHECK_THROWS_AS(task_loss(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("memory losses") {
    Tensor memory({2, 2}, {3.0, 4.0, 1.0, 0.0});
    auto single = manual_readout(Tensor::zeros({1, 1, 2}), {0}, {1});
    CHECK(consistency_loss(single, memory).item() == 25.0);
    // ‖Q−M⁺‖² = 25, ‖Q−M⁻‖² = 1.
    CHECK(contrastive_loss(single, memory, 1.0).item() == 25.0);

    auto on_top = manual_readout(Tensor({1, 1, 2}, {3.0, 4.0}), {0}, {1});
    CHECK(consistency_loss(on_top, memory).item() == 0.0);

    Tensor far({2, 2}, {0.0, 0.0, 1.0, 2.0});
    auto satisfied = manual_readout(Tensor::zeros({1, 1, 2}), {0}, {1});
    CHECK(contrastive_loss(satisfied, far, 1.0).item() == 0.0);

    Tensor mirror({2, 2}, {1.0, 0.0, -1.0, 0.0});
    CHECK(contrastive_loss(satisfied, mirror, 1.0).item() == 1.0);
    CHECK(contrastive_loss(satisfied, mirror, 0.25).item() == 0.25);
}

TEST_CASE("memory losses match an argmax oracle") {
    Rng rng(8);
    const std::size_t b = 3, n = 4, d = 5, k = 6;
    Tensor h = random_tensor(rng, {b, n, 3});
    Tensor wq = random_tensor(rng, {3, d}, -2, 2);
    Tensor memory = random_tensor(rng, {k, d});
    auto r = query_memory(h, wq, memory);
    double cons = 0.0, contrast = 0.0;
    for (std::size_t row = 0; row < b * n; ++row) {
        // Argmax computed independently from the score tensor.
        std::size_t best = 0, second = 1;
        const auto s = r.s.data().subspan(row * k, k);
        if (s[1] > s[0]) std::swap(best, second);
        for (std::size_t j = 2; j < k; ++j) {
            if (s[j] > s[best]) {
                second = best;
                best = j;
            } else if (s[j] > s[second]) {
                second = j;
            }
        }
        double dp = 0.0, dn = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double qv = r.q.data()[row * d + c];
            dp += std::pow(qv - memory.at({best, c}), 2);
            dn += std::pow(qv - memory.at({second, c}), 2);
        }
        cons += dp;
        contrast += std::max(0.0, dp - dn + 1.0);
    }
    CHECK(consistency_loss(r, memory).item() == doctest::Approx(cons / (b * n)).epsilon(1e-13));
    CHECK(contrastive_loss(r, memory, 1.0).item() == doctest::Approx(contrast / (b * n)).epsilon(1e-13));
    CHECK(contrastive_loss(r, memory, 1.0).item() >= 0.0);
}

TEST_CASE("total loss") {
    LossWeights w;
    CHECK(total_loss(Tensor::scalar(1.0), Tensor::scalar(0.0), Tensor::scalar(0.0), w).item() == 1.0);
    CHECK(total_loss(Tensor::scalar(2.0), Tensor::scalar(3.0), Tensor::scalar(4.0), w).item() ==
          doctest::Approx(2.07).epsilon(1e-15));
    LossWeights off{0.0, 0.0, 1.0};
    CHECK(total_loss(Tensor::scalar(2.5), Tensor::scalar(3.0), Tensor::scalar(4.0), off).item() == 2.5);

    Rng rng(3);
    Tensor yh = random_tensor(rng, {2, 3});
    Tensor y = random_tensor(rng, {2, 3});
    Tensor h = random_tensor(rng, {1, 2, 2});
    Tensor wq = random_tensor(rng, {2, 3});
    Tensor memory = random_tensor(rng, {3, 3});
    auto f = [&](const std::vector<Tensor>& in) {
        auto r = query_memory(h, in[1], in[2]);
        return total_loss(task_loss(in[0], y), consistency_loss(r, in[2]), contrastive_loss(r, in[2], 1.0),
                          LossWeights{0.3, 0.7, 1.0});
    };
    auto report = grad_check(f, {yh, wq, memory}, 1e-6, 1e-5);
    CHECK(report.max_rel_error() < 1e-5);
}

TEST_CASE("metrics examples") {
    auto r = compute_metrics(Tensor({1}, {10.0}), Tensor({1}, {8.0}), 0.0, -1);
    CHECK(r.overall.mae == 2.0);
    CHECK(r.overall.rmse == 2.0);
    CHECK(r.overall.mape == 25.0);

    auto masked = compute_metrics(Tensor({2}, {5.0, 8.0}), Tensor({2}, {0.0, 8.0}), 0.0, -1);
    CHECK(masked.overall.mae == 0.0);
    CHECK(masked.overall.rmse == 0.0);
    CHECK(masked.overall.mape == 0.0);
    CHECK(masked.mask_count() == 1);

    auto empty = compute_metrics(Tensor({2}, {5.0, 1.0}), Tensor({2}, {0.0, 0.0}), 0.0, -1);
    CHECK_FALSE(empty.overall.defined());
    CHECK(empty.mask_count() == 0);
    CHECK_FALSE(std::isnan(empty.overall.mae));
}

TEST_CASE("metrics match a scalar loop") {
    Rng rng(12);
    const std::size_t b = 4, tau = 5, n = 5;
    Tensor yh = random_tensor(rng, {b, tau, n, 1}, 0, 60);
    Tensor y = random_tensor(rng, {b, tau, n, 1}, 0, 60);
    for (std::size_t i = 0; i < y.numel(); i += 7) y.data_mut()[i] = 0.0;
    auto r = compute_metrics(yh, y, 0.0);
    REQUIRE(r.per_horizon.size() == tau);
    double ae = 0, se = 0, pe = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        if (y.data()[i] == 0.0) continue;
        const double e = yh.data()[i] - y.data()[i];
        ae += std::abs(e);
        se += e * e;
        pe += std::abs(e / y.data()[i]);
        ++count;
    }
    CHECK(r.mask_count() == count);
    CHECK(r.overall.mae == doctest::Approx(ae / count).epsilon(1e-13));
    CHECK(r.overall.rmse == doctest::Approx(std::sqrt(se / count)).epsilon(1e-13));
    CHECK(r.overall.mape == doctest::Approx(100.0 * pe / count).epsilon(1e-13));
    CHECK(r.overall.rmse >= r.overall.mae);

    // Horizon step 3 alone.
    double h_ae = 0;
    std::size_t h_count = 0;
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t ni = 0; ni < n; ++ni) {
            const double t = y.at({bi, 2, ni, 0});
            if (t == 0.0) continue;
            h_ae += std::abs(yh.at({bi, 2, ni, 0}) - t);
            ++h_count;
        }
    }
    CHECK(r.per_horizon[2].mae == doctest::Approx(h_ae / h_count).epsilon(1e-13));
    for (const auto& h : r.per_horizon) CHECK(h.rmse >= h.mae);

    std::ostringstream csv;
    r.write_csv(csv);
    CHECK(csv.str().rfind("horizon,mae,rmse,mape_pct\n", 0) == 0);
    CHECK(csv.str().find("\navg,") != std::string::npos);
}

TEST_CASE("masked entries never move a metric") {
    Rng rng(13);
    Tensor yh = random_tensor(rng, {20}, 1, 9);
    Tensor y = random_tensor(rng, {20}, 1, 9);
    auto base = compute_metrics(yh, y, 0.0, -1);
    std::vector<double> ph(yh.data().begin(), yh.data().end()), py(y.data().begin(), y.data().end());
    for (int i = 0; i < 10; ++i) {
        ph.push_back(rng.uniform(-100, 100));
        py.push_back(0.0);
    }
    auto padded = compute_metrics(Tensor({30}, ph), Tensor({30}, py), 0.0, -1);
    CHECK(padded.overall.mae == base.overall.mae);
    CHECK(padded.overall.rmse == base.overall.rmse);
    CHECK(padded.overall.mape == base.overall.mape);
    CHECK(padded.mask_count() == 20);
}

TEST_CASE("historical average") {
    SUBCASE("two periods of slot values") {
        Tensor train({4, 1, 1}, {10.0, 20.0, 10.0, 20.0});
        Tensor p = historical_average(train, {4, 5}, 3, 2);
        CHECK(p.shape() == Shape{2, 3, 1, 1});
        CHECK(p.at({0, 0, 0, 0}) == 10.0);
        CHECK(p.at({0, 1, 0, 0}) == 20.0);
        CHECK(p.at({0, 2, 0, 0}) == 10.0);
        CHECK(p.at({1, 0, 0, 0}) == 20.0);
    }
    SUBCASE("constant series") {
        Tensor train({12, 2, 1}, 7.5);
        Tensor p = historical_average(train, {20}, 4, 5);
        for (double v : p.data()) CHECK(v == 7.5);
    }
    SUBCASE("exactly periodic series has zero error") {
        const std::size_t period = 6, n = 3;
        auto value = [](std::size_t t, std::size_t node) { return 50.0 + 10.0 * std::sin(t * 1.047 + node); };
        std::vector<double> v;
        for (std::size_t t = 0; t < 4 * period; ++t)
            for (std::size_t node = 0; node < n; ++node) v.push_back(value(t % period, node));
        Tensor p = historical_average(Tensor({4 * period, n, 1}, v), {31, 40}, 3, period);
        for (std::size_t b = 0; b < 2; ++b) {
            const std::size_t start = b == 0 ? 31 : 40;
            for (std::size_t h = 0; h < 3; ++h)
                for (std::size_t node = 0; node < n; ++node)
                    CHECK(p.at({b, h, node, 0}) == doctest::Approx(value((start + h) % period, node)).epsilon(1e-12));
        }
    }
    SUBCASE("unseen slots fall back to the global mean") {
        Tensor train({3, 1, 1}, {1.0, 2.0, 6.0});
        Tensor p = historical_average(train, {3}, 2, 10);
        CHECK(p.at({0, 0, 0, 0}) == 3.0);
        CHECK(p.at({0, 1, 0, 0}) == 3.0);
    }
}

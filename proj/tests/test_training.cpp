#include "doctest.h"

#include "genshin/training.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace genshin;
namespace fs = std::filesystem;

namespace {

ParamStore store_with_grad(std::vector<double> value, std::vector<double> grad, bool decay = true) {
    ParamStore store;
    Tensor& t = store.add("p", Tensor(Shape{value.size()}, value), decay);
    t.zero_grad();
    auto g = t.grad_mut();
    std::copy(grad.begin(), grad.end(), g.begin());
    return store;
}

struct TinyTask {
    RawDataset raw;
    DatasetBundle data;
    ModelConfig cfg = ModelConfig::toy();

    TinyTask() {
        SynthSpec spec;
        spec.period = 12;
        spec.noise = 0.05;
        raw = generate_synthetic(4, 90, spec, 2);
        cfg.n_nodes = 4;
        cfg.epochs = 3;
        cfg.batch_size = 8;
        cfg.seed = 5;
        data = make_windows(raw, cfg.window, cfg.horizon);
    }
    GenshinModel model() const { return GenshinModel(cfg, raw.adjacency, data.scaler); }
};

bool same_params(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = a.all()[i].value.data();
        const auto y = b.all()[i].value.data();
        if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("gradient clipping") {
    auto store = store_with_grad({0.0, 0.0}, {3.0, 4.0});
    CHECK(gradient_norm(store) == 5.0);
    CHECK(clip_gradients(store, 10.0) == 1.0);
    CHECK(store.get("p").grad()[0] == 3.0);
    CHECK(clip_gradients(store, 1.0) == doctest::Approx(0.2));
    CHECK(store.get("p").grad()[0] == doctest::Approx(0.6));
    CHECK(store.get("p").grad()[1] == doctest::Approx(0.8));
    CHECK(gradient_norm(store) == doctest::Approx(1.0));
}

TEST_CASE("clipping examples") {
    auto store = store_with_grad({0.0, 0.0}, {3.0, 4.0});
    CHECK(clip_gradients(store, 2.5) == doctest::Approx(0.5));
    CHECK(store.get("p").grad()[0] == doctest::Approx(1.5));
    CHECK(store.get("p").grad()[1] == doctest::Approx(2.0));

    auto small = store_with_grad({0.0}, {3.0});
    CHECK(clip_gradients(small, 5.0) == 1.0);
    CHECK(small.get("p").grad()[0] == 3.0);
}

TEST_CASE("clipped norm never exceeds the bound") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> g(1 + trial % 13);
        for (auto& x : g) x = rng.uniform(-50.0, 50.0);
        auto store = store_with_grad(std::vector<double>(g.size(), 0.0), g);
        const double bound = rng.uniform(0.01, 20.0);
        clip_gradients(store, bound);
        CHECK(gradient_norm(store) <= bound + 1e-9);
    }
}

TEST_CASE("AdamW first step examples") {
    auto store = store_with_grad({1.0}, {1.0}, false);
    AdamW opt(AdamWSettings{1e-3, 0.0, 0.9, 0.999, 1e-8});
    opt.step(store);
    CHECK(store.get("p").data()[0] == doctest::Approx(0.999).epsilon(1e-8));

    auto decayed = store_with_grad({1.0}, {0.0});
    AdamW decay_only(AdamWSettings{0.01, 0.1, 0.9, 0.999, 1e-8});
    decay_only.step(decayed);
    CHECK(decayed.get("p").data()[0] == doctest::Approx(0.999).epsilon(1e-15));
}

TEST_CASE("AdamW steps by hand") {
    const AdamWSettings s{0.1, 0.01, 0.9, 0.999, 1e-8};
    SUBCASE("decayed parameter") {
        auto store = store_with_grad({1.0}, {0.5});
        AdamW opt(s);
        opt.step(store);
        // First step: bias-corrected moments give m̂ = g, v̂ = g².
        double theta = 1.0 - 0.1 * 0.01 * 1.0;
        theta -= 0.1 * 0.5 / (0.5 + 1e-8);
        CHECK(store.get("p").data()[0] == doctest::Approx(theta).epsilon(1e-15));

        auto g = store.get("p").grad_mut();
        g[0] = -0.2;
        opt.step(store);
        const double m = 0.9 * 0.05 + 0.1 * -0.2;
        const double v = 0.999 * 0.00025 + 0.001 * 0.04;
        const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
        theta -= 0.1 * 0.01 * theta;
        theta -= 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
        CHECK(store.get("p").data()[0] == doctest::Approx(theta).epsilon(1e-14));
        CHECK(opt.steps() == 2);
    }
    SUBCASE("undecayed parameter") {
        auto store = store_with_grad({1.0}, {0.5}, false);
        AdamW opt(s);
        opt.step(store);
        CHECK(store.get("p").data()[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-15));
    }
    SUBCASE("zero gradient only decays") {
        auto store = store_with_grad({2.0}, {0.0});
        AdamW opt(s);
        opt.step(store);
        CHECK(store.get("p").data()[0] == doctest::Approx(2.0 * (1 - 0.001)).epsilon(1e-15));
    }
}

TEST_CASE("teacher forcing schedule") {
    ModelConfig cfg;
    cfg.epochs = 10;
    cfg.teacher_forcing_decay = 0.5;
    CHECK(teacher_forcing_prob(cfg, 0) == 1.0);
    CHECK(teacher_forcing_prob(cfg, 2) == doctest::Approx(0.6));
    CHECK(teacher_forcing_prob(cfg, 5) == 0.0);
    CHECK(teacher_forcing_prob(cfg, 9) == 0.0);
    cfg.teacher_forcing_decay = 0.0;
    CHECK(teacher_forcing_prob(cfg, 0) == 0.0);
}

TEST_CASE("fit is deterministic and restores the best epoch") {
    TinyTask task;
    auto a = task.model();
    auto b = task.model();
    const auto ra = fit(a, task.data);
    const auto rb = fit(b, task.data);
    REQUIRE(ra.history.size() == 3);
    CHECK(same_params(a.params(), b.params()));
    for (std::size_t i = 0; i < ra.history.size(); ++i) CHECK(ra.history[i].train_loss == rb.history[i].train_loss);

    double best = ra.history[0].val_mae;
    std::size_t best_epoch = 1;
    for (const auto& e : ra.history) {
        if (e.val_mae < best) {
            best = e.val_mae;
            best_epoch = e.epoch;
        }
    }
    CHECK(ra.best_epoch == best_epoch);
    CHECK(ra.best_val == best);
    CHECK(evaluate(a, task.data.val, 0.0, task.cfg.batch_size).normalized_mae == ra.best_val);
    CHECK(ra.test.metrics.overall.defined());
}

TEST_CASE("early stopping honors patience") {
    TinyTask task;
    task.cfg.epochs = 12;
    task.cfg.patience = 1;
    task.cfg.lr = 0.5;  // large steps make validation regress quickly
    auto model = task.model();
    const auto r = fit(model, task.data);
    if (r.stopped_early) {
        CHECK(r.history.size() == r.best_epoch + 1);
        CHECK(r.history.back().val_mae >= r.best_val);
    } else {
        CHECK(r.history.size() == 12);
    }
    CHECK(r.history.size() < 12);
}

TEST_CASE("checkpoint contents") {
    TinyTask task;
    task.cfg.epochs = 2;
    auto model = task.model();
    const fs::path dir = fs::temp_directory_path() / "genshin_test_training_ckpt";
    fs::remove_all(dir);
    FitOptions opts;
    opts.checkpoint_dir = dir;
    std::size_t calls = 0;
    opts.on_epoch = [&](const EpochRecord&) { ++calls; };
    const auto r = fit(model, task.data, opts);
    CHECK(calls == 2);
    CHECK(fs::exists(dir / "config.json"));
    CHECK(fs::exists(dir / "optim" / "memory.M.bin"));
    std::ifstream state_in(dir / "trainstate.json");
    const auto state = nlohmann::json::parse(state_in);
    CHECK(state["epoch"] == 2);
    CHECK(state["best_epoch"] == r.best_epoch);
    std::ifstream curve(dir / "loss_curve.csv");
    std::string header;
    std::getline(curve, header);
    CHECK(header == "epoch,train_loss,val_mae");

    auto reloaded = GenshinModel::load(dir);
    CHECK(same_params(reloaded.params(), model.params()));
    AdamW opt;
    CHECK_NOTHROW(opt.load(dir / "optim", reloaded.params(), state["optimizer_steps"].get<std::size_t>()));
    fs::remove_all(dir);
}

#include "doctest.h"

#include "genshin/model.hpp"
#include "genshin/model_check.hpp"
#include "genshin/rng.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace genshin;
namespace fs = std::filesystem;

namespace {

struct Setup {
    RawDataset raw;
    DatasetBundle data;
    ModelConfig cfg = ModelConfig::toy();

    explicit Setup(std::size_t nodes = 5) {
        SynthSpec spec;
        spec.period = 24;
        spec.noise = 0.2;
        spec.edges = {{0, 2, 1, 0.6}};
        raw = generate_synthetic(nodes, 120, spec, 3);
        data = make_windows(raw, cfg.window, cfg.horizon);
        cfg.n_nodes = nodes;
        cfg.seed = 11;
    }
    GenshinModel model(const AblationFlags& flags = {}) const {
        ModelConfig c = cfg;
        c.ablation = flags;
        if (flags.no_memory) c.lambda1 = c.lambda2 = 0.0;
        return GenshinModel(c, raw.adjacency, data.scaler);
    }
    Batch batch() const {
        const std::vector<std::size_t> idx = {0, 5, 9};
        return data.train.batch(idx);
    }
};

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("genshin_test_model_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("forward shapes and loss parts") {
    Setup s;
    auto model = s.model();
    CHECK(model.n_nodes() == 5);
    auto b = s.batch();
    auto r = model.forward(b.x);
    CHECK(r.y_hat.shape() == Shape{3, s.cfg.horizon, 5, 1});
    REQUIRE(r.readout);
    auto l = model.loss(r, b.y);
    CHECK(l.total.item() == doctest::Approx(l.task.item() + 0.01 * l.consistency.item() + 0.01 * l.contrast.item()));
    CHECK(l.consistency.item() >= 0.0);
    CHECK(l.contrast.item() >= 0.0);

    auto p = model.predict(b.x, {.memory_scores = true, .dynamic_graphs = true, .attention = true});
    CHECK(p.memory_scores->shape() == Shape{3, 5, s.cfg.n_prototypes});
    CHECK(p.dynamic_graphs.size() == s.cfg.horizon);
    CHECK(p.attention.size() == s.cfg.transformer_layers);
    const double mean = s.data.scaler.mean[0], sd = s.data.scaler.stddev[0];
    CHECK(p.y.data()[4] == doctest::Approx(r.y_hat.data()[4] * sd + mean).epsilon(1e-13));
}

TEST_CASE("node count is taken from the adjacency and checked against the config") {
    Setup s;
    ModelConfig c = s.cfg;
    c.n_nodes = 0;
    CHECK(GenshinModel(c, s.raw.adjacency, s.data.scaler).config().n_nodes == 5);
    c.n_nodes = 7;
    CHECK_THROWS_AS(GenshinModel(c, s.raw.adjacency, s.data.scaler), ShapeError);
    auto model = s.model();
    CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 3, 4, 1})), ShapeError);
}

TEST_CASE("every ablation flag changes the model") {
    Setup s;
    const auto full = s.model();
    const auto b = s.batch();
    const Tensor reference = full.predict(b.x).y;
    const std::vector<std::pair<const char*, AblationFlags>> variants = {
        {"no_transformer", {.no_transformer = true}}, {"single_embed", {.single_embed = true}},
        {"no_memory", {.no_memory = true}},           {"static_graph", {.static_graph = true}},
        {"no_real_graph", {.no_real_graph = true}},
    };
    for (const auto& [name, flags] : variants) {
        CAPTURE(name);
        const auto variant = s.model(flags);
        const bool count_differs = variant.params().count() != full.params().count();
        const bool output_differs = !bitwise_equal(variant.predict(b.x).y, reference);
        CHECK(count_differs);
        CHECK(output_differs);
    }
    const auto tied = s.model({.single_embed = true});
    const auto g = tied.build_graphs();
    CHECK(bitwise_equal(g.learned.score1, transpose(g.learned.score1, 0, 1)));
    CHECK(tied.build_graphs().alpha.item() == 0.5);
    CHECK(s.model({.no_real_graph = true}).build_graphs().alpha.item() == 0.0);
}

TEST_CASE("shared parameters agree across variants") {
    Setup s;
    const auto full = s.model();
    const auto variant = s.model({.static_graph = true});
    for (const auto& p : variant.params().all()) {
        CAPTURE(p.name);
        CHECK(bitwise_equal(p.value, full.params().get(p.name)));
    }
}

TEST_CASE("save and load round trip") {
    Setup s;
    auto model = s.model();
    const auto dir = scratch_dir("roundtrip");
    model.save(dir);
    const auto b = s.batch();
    auto loaded = GenshinModel::load(dir);
    CHECK(bitwise_equal(loaded.predict(b.x).y, model.predict(b.x).y));
    CHECK(loaded.config().seed == s.cfg.seed);
    CHECK(loaded.params().size() == model.params().size());

    CHECK_NOTHROW(GenshinModel::load(dir, AblationFlags{}));
    CHECK_THROWS_AS(GenshinModel::load(dir, AblationFlags{.static_graph = true}), CheckpointError);

    SUBCASE("corrupt parameter file") {
        std::ofstream(dir / "params" / "memory.M.bin", std::ios::binary | std::ios::trunc) << "garbage";
        CHECK_THROWS_AS(GenshinModel::load(dir), CheckpointError);
    }
    SUBCASE("missing parameter file") {
        fs::remove(dir / "params" / "dec.out.w.bin");
        CHECK_THROWS_AS(GenshinModel::load(dir), CheckpointError);
    }
    SUBCASE("version mismatch") {
        std::ifstream in(dir / "config.json");
        auto meta = nlohmann::json::parse(in);
        in.close();
        meta["format_version"] = 99;
        std::ofstream(dir / "config.json") << meta.dump();
        try {
            GenshinModel::load(dir);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(std::string(e.what()).find("99") != std::string::npos);
        }
    }
    CHECK_THROWS_AS(GenshinModel::load(scratch_dir("missing")), CheckpointError);
    fs::remove_all(dir);
}

TEST_CASE("model gradient check agrees with central differences") {
    Setup s(4);
    auto model = s.model();
    auto report = model_grad_check(model, s.batch(), 1e-5, 1e-4, 4);
    CHECK(report.params.size() == model.params().size());
    CHECK(report.checked() <= 4 * model.params().size());
    CHECK(report.max_abs_diff() < 1e-9);
    for (const auto& p : model.params().all()) CHECK_FALSE(p.value.has_grad());

    CHECK(parameter_group("enc.gcru0.wz") == "enc.gcru0");
    CHECK(parameter_group("dec.out.w") == "dec.out");
    CHECK(parameter_group("graph.we1") == "graph");
    CHECK(parameter_group("upd.w1") == "upd");
}

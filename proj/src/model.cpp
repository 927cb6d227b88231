#include "genshin/model.hpp"

#include "genshin/decoder.hpp"
#include "genshin/serialize.hpp"

#include <cmath>
#include <fstream>

namespace genshin {

namespace fs = std::filesystem;

nlohmann::json scaler_to_json(const Scaler& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

Scaler scaler_from_json(const nlohmann::json& j) {
    Scaler s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("stddev").get<std::vector<double>>();
    return s;
}

GenshinModel::GenshinModel(ModelConfig cfg, const Tensor& adjacency, Scaler scaler)
    : GenshinModel(std::move(cfg), row_normalize_real(adjacency), std::move(scaler), true) {}

GenshinModel::GenshinModel(ModelConfig cfg, Tensor a_real, Scaler scaler, bool)
    : cfg_(std::move(cfg)), params_(cfg_.seed), a_real_(std::move(a_real)), scaler_(std::move(scaler)) {
    const std::size_t n = a_real_.shape()[0];
    if (cfg_.n_nodes == 0) cfg_.n_nodes = n;
    if (cfg_.n_nodes != n) {
        throw ShapeError("model: config has n_nodes=" + std::to_string(cfg_.n_nodes) + " but adjacency is " +
                         shape_str(a_real_.shape()));
    }
    cfg_.validate();
    if (scaler_.mean.empty()) {
        scaler_.mean.assign(cfg_.in_channels, 0.0);
        scaler_.stddev.assign(cfg_.in_channels, 1.0);
    }
    if (scaler_.mean.size() != cfg_.in_channels || scaler_.stddev.size() != cfg_.in_channels) {
        throw ShapeError("model: scaler has " + std::to_string(scaler_.mean.size()) + " channels, config has " +
                         std::to_string(cfg_.in_channels));
    }
    params_ = ParamStore(cfg_.seed);
    build_params();
}

void GenshinModel::build_params() {
    const std::size_t n = cfg_.n_nodes;
    const std::size_t k = cfg_.n_prototypes;
    const std::size_t dm = cfg_.proto_dim;
    const auto& ab = cfg_.ablation;
    if (ab.no_memory) {
        params_.add_normal("graph.z1", {n, dm}, 1.0 / std::sqrt(static_cast<double>(dm)));
        if (!ab.single_embed) params_.add_normal("graph.z2", {n, dm}, 1.0 / std::sqrt(static_cast<double>(dm)));
    } else {
        params_.add_normal("memory.M", {k, dm}, 1.0 / std::sqrt(static_cast<double>(dm)), false);
        params_.add_fan_in("memory.wq", {cfg_.hidden_dim, dm});
        const double bound = 1.0 / std::sqrt(static_cast<double>(k));
        params_.add_uniform("graph.we1", {n, k}, bound);
        if (!ab.single_embed) params_.add_uniform("graph.we2", {n, k}, bound);
    }
    if (!ab.no_real_graph) params_.add_constant("graph.alpha_logit", {1}, 0.0, false);
    add_encoder_params(params_, cfg_, encoder_support_count());
    add_decoder_params(params_, cfg_, decoder_support_count());
}

GraphSet GenshinModel::build_graphs() const {
    const auto& ab = cfg_.ablation;
    Tensor z1, z2;
    if (ab.no_memory) {
        z1 = params_.get("graph.z1");
        z2 = ab.single_embed ? z1 : params_.get("graph.z2");
    } else {
        const Tensor& we1 = params_.get("graph.we1");
        const Tensor& we2 = ab.single_embed ? we1 : params_.get("graph.we2");
        std::tie(z1, z2) = compute_embeddings(we1, we2, params_.get("memory.M"));
        if (ab.single_embed) z2 = z1;
    }
    GraphSet g;
    g.a_real = a_real_;
    g.learned = build_learned_graphs(z1, z2, ab.single_embed);
    g.alpha = ab.no_real_graph ? Tensor::scalar(0.0) : sigmoid(params_.get("graph.alpha_logit"));
    std::tie(g.a1, g.a2) = fuse_with_real(g.learned.tilde1, g.learned.tilde2, a_real_, g.alpha);
    g.supports1 = chebyshev_supports(g.a1, cfg_.cheb_order, cfg_.laplacian);
    g.supports2 = chebyshev_supports(g.a2, cfg_.cheb_order, cfg_.laplacian);
    return g;
}

ForwardResult GenshinModel::forward(const Tensor& x, const ForwardOptions& opts) const {
    if (x.rank() != 4 || x.shape()[2] != n_nodes() || x.shape()[3] != cfg_.in_channels) {
        throw ShapeError("forward: expected B×T×" + std::to_string(n_nodes()) + "×" +
                         std::to_string(cfg_.in_channels) + " input, got " + shape_str(x.shape()));
    }
    Rng local(cfg_.seed);
    Rng& rng = opts.rng ? *opts.rng : local;

    ForwardResult r;
    r.graphs = build_graphs();
    r.encoder = encode(x, r.graphs.encoder_supports(), params_, cfg_, opts.train, rng, opts.keep_attention);
    if (!cfg_.ablation.no_memory) {
        r.readout = query_memory(r.encoder.h_t, params_.get("memory.wq"), params_.get("memory.M"));
    }

    DecodeInputs in;
    in.h_t = r.encoder.h_t;
    if (r.readout) in.h_mem = r.readout->h_mem;
    in.encoder_states = r.encoder.final_states;
    in.a_init = r.graphs.a1;
    in.teacher = opts.teacher;
    in.tf_prob = opts.train ? opts.tf_prob : 0.0;
    if (in.teacher && in.teacher->shape() != Shape{x.shape()[0], cfg_.horizon, n_nodes(), cfg_.in_channels}) {
        throw ShapeError("forward: teacher targets have shape " + shape_str(in.teacher->shape()));
    }
    auto dec = decode(in, params_, cfg_, cfg_.horizon, rng, opts.keep_graphs);
    r.y_hat = dec.y_hat;
    r.dyn_graphs = std::move(dec.graphs);
    return r;
}

LossBreakdown GenshinModel::loss(const ForwardResult& result, const Tensor& y) const {
    LossBreakdown l;
    l.task = task_loss(result.y_hat, y);
    if (result.readout) {
        const Tensor& m = params_.get("memory.M");
        l.consistency = consistency_loss(*result.readout, m);
        l.contrast = contrastive_loss(*result.readout, m, cfg_.gamma);
    } else {
        l.consistency = Tensor::scalar(0.0);
        l.contrast = Tensor::scalar(0.0);
    }
    l.total = total_loss(l.task, l.consistency, l.contrast, {cfg_.lambda1, cfg_.lambda2, cfg_.gamma});
    return l;
}

Prediction GenshinModel::predict(const Tensor& x, const PredictOptions& opts) const {
    NoGradGuard guard;
    const Tensor input = opts.normalized_input ? x : scaler_.transform(x);
    ForwardOptions fo;
    fo.keep_attention = opts.attention;
    fo.keep_graphs = opts.dynamic_graphs;
    auto r = forward(input, fo);
    Prediction p;
    p.y = scaler_.inverse(r.y_hat);
    if (opts.memory_scores && r.readout) p.memory_scores = r.readout->s;
    p.dynamic_graphs = std::move(r.dyn_graphs);
    p.attention = std::move(r.encoder.attention);
    return p;
}

void GenshinModel::save(const fs::path& dir) const {
    fs::create_directories(dir / "params");
    fs::create_directories(dir / "buffers");
    nlohmann::json meta;
    meta["format_version"] = kCheckpointVersion;
    meta["config"] = to_json(cfg_);
    meta["scaler"] = scaler_to_json(scaler_);
    nlohmann::json names = nlohmann::json::array();
    for (const auto& p : params_.all()) {
        names.push_back({{"name", p.name}, {"shape", p.value.shape()}});
        save_tensor(dir / "params" / (p.name + ".bin"), p.value);
    }
    meta["params"] = names;
    save_tensor(dir / "buffers" / "a_real.bin", a_real_);
    std::ofstream(dir / "config.json") << meta.dump(2) << '\n';
}

GenshinModel GenshinModel::load(const fs::path& dir, const std::optional<AblationFlags>& expected) {
    std::ifstream in(dir / "config.json");
    if (!in) throw CheckpointError((dir / "config.json").string() + ": cannot open");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw CheckpointError((dir / "config.json").string() + ": " + e.what());
    }
    const int version = meta.value("format_version", -1);
    if (version != kCheckpointVersion) {
        throw CheckpointError((dir / "config.json").string() + ": checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion));
    }
    ModelConfig cfg;
    Scaler scaler;
    try {
        cfg = config_from_json(meta.at("config"));
        scaler = scaler_from_json(meta.at("scaler"));
    } catch (const std::exception& e) {
        throw CheckpointError((dir / "config.json").string() + ": " + e.what());
    }
    if (expected && !(*expected == cfg.ablation)) {
        throw CheckpointError(dir.string() + ": checkpoint ablation flags do not match the requested model");
    }
    Tensor a_real;
    try {
        a_real = load_tensor(dir / "buffers" / "a_real.bin");
    } catch (const FormatError& e) {
        throw CheckpointError(e.what());
    }
    GenshinModel model(cfg, a_real, scaler, true);
    for (auto& p : model.params_.all()) {
        const fs::path file = dir / "params" / (p.name + ".bin");
        Tensor stored;
        try {
            stored = load_tensor(file);
        } catch (const FormatError& e) {
            throw CheckpointError(e.what());
        }
        if (stored.shape() != p.value.shape()) {
            throw CheckpointError(file.string() + ": shape " + shape_str(stored.shape()) + ", model expects " +
                                  shape_str(p.value.shape()));
        }
        auto dst = p.value.data_mut();
        std::copy(stored.data().begin(), stored.data().end(), dst.begin());
    }
    if (meta.contains("params") && meta["params"].size() != model.params_.size()) {
        throw CheckpointError(dir.string() + ": checkpoint lists " + std::to_string(meta["params"].size()) +
                              " parameters, model has " + std::to_string(model.params_.size()));
    }
    return model;
}

}  // namespace genshin

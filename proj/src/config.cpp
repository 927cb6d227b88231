#include "genshin/config.hpp"

#include <charconv>
#include <cmath>
#include <concepts>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace genshin {

namespace {

// Visits every configurable field with its key. Keeps parse, print and JSON in step.
template <typename Config, typename F>
void for_each_field(Config& c, F&& f) {
    f("n_nodes", c.n_nodes);
    f("in_channels", c.in_channels);
    f("hidden_dim", c.hidden_dim);
    f("gcru_layers", c.gcru_layers);
    f("cheb_order", c.cheb_order);
    f("laplacian", c.laplacian);
    f("n_prototypes", c.n_prototypes);
    f("proto_dim", c.proto_dim);
    f("transformer_layers", c.transformer_layers);
    f("n_heads", c.n_heads);
    f("ffn_dim", c.ffn_dim);
    f("dropout", c.dropout);
    f("window", c.window);
    f("horizon", c.horizon);
    f("updater_hidden", c.updater_hidden);
    f("updater_dim", c.updater_dim);
    f("updater_eta", c.updater_eta);
    f("lambda1", c.lambda1);
    f("lambda2", c.lambda2);
    f("gamma", c.gamma);
    f("lr", c.lr);
    f("weight_decay", c.weight_decay);
    f("beta1", c.beta1);
    f("beta2", c.beta2);
    f("adam_eps", c.adam_eps);
    f("batch_size", c.batch_size);
    f("epochs", c.epochs);
    f("patience", c.patience);
    f("clip_norm", c.clip_norm);
    f("teacher_forcing_decay", c.teacher_forcing_decay);
    f("train_ratio", c.train_ratio);
    f("val_ratio", c.val_ratio);
    f("test_ratio", c.test_ratio);
    f("null_value", c.null_value);
    f("no_transformer", c.ablation.no_transformer);
    f("single_embed", c.ablation.single_embed);
    f("no_memory", c.ablation.no_memory);
    f("static_graph", c.ablation.static_graph);
    f("no_real_graph", c.ablation.no_real_graph);
    f("seed", c.seed);
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <std::unsigned_integral Int>
bool assign(const std::string& text, Int& out) {
    const char* end = text.data() + text.size();
    auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc() && res.ptr == end;
}
bool assign(const std::string& text, double& out) {
    const char* end = text.data() + text.size();
    auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc() && res.ptr == end;
}
bool assign(const std::string& text, bool& out) {
    if (text == "true" || text == "1" || text == "yes") {
        out = true;
        return true;
    }
    if (text == "false" || text == "0" || text == "no") {
        out = false;
        return true;
    }
    return false;
}
bool assign(const std::string& text, LaplacianKind& out) {
    try {
        out = parse_laplacian(text);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

template <std::unsigned_integral Int>
std::string render(Int v) {
    return std::to_string(v);
}
std::string render(bool v) { return v ? "true" : "false"; }
std::string render(LaplacianKind v) { return std::string(to_string(v)); }
std::string render(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

std::string_view to_string(LaplacianKind kind) {
    return kind == LaplacianKind::directed ? "directed" : "symmetric";
}

LaplacianKind parse_laplacian(std::string_view text) {
    if (text == "directed") return LaplacianKind::directed;
    if (text == "symmetric") return LaplacianKind::symmetric;
    throw ConfigError("unknown laplacian '" + std::string(text) + "' (expected directed or symmetric)");
}

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("invalid config: " + what);
    };
    require(in_channels >= 1, "in_channels must be at least 1");
    require(hidden_dim >= 1, "hidden_dim must be at least 1");
    require(gcru_layers >= 1, "gcru_layers must be at least 1");
    require(cheb_order >= 1, "cheb_order must be at least 1");
    require(n_prototypes >= 2, "n_prototypes must be at least 2");
    require(proto_dim >= 1, "proto_dim must be at least 1");
    require(n_heads >= 1 && hidden_dim % n_heads == 0, "hidden_dim must be divisible by n_heads");
    require(ablation.no_transformer || transformer_layers >= 1, "transformer_layers must be at least 1");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
    require(window >= 1 && horizon >= 1, "window and horizon must be at least 1");
    require(updater_hidden >= 1 && updater_dim >= 1, "updater dimensions must be at least 1");
    require(updater_eta > 0.0, "updater_eta must be positive");
    require(lambda1 >= 0.0 && lambda2 >= 0.0, "loss weights must be nonnegative");
    require(gamma > 0.0, "gamma must be positive");
    require(lr > 0.0, "lr must be positive");
    require(weight_decay >= 0.0, "weight_decay must be nonnegative");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must be in [0, 1)");
    require(adam_eps > 0.0, "adam_eps must be positive");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(epochs >= 1, "epochs must be at least 1");
    require(patience >= 1, "patience must be at least 1");
    require(clip_norm > 0.0, "clip_norm must be positive");
    require(teacher_forcing_decay >= 0.0 && teacher_forcing_decay <= 1.0, "teacher_forcing_decay must be in [0, 1]");
    require(train_ratio > 0.0 && val_ratio >= 0.0 && test_ratio >= 0.0 &&
                std::abs(train_ratio + val_ratio + test_ratio - 1.0) < 1e-9,
            "split ratios must sum to 1");
    require(!(ablation.no_memory && (lambda1 > 0.0 || lambda2 > 0.0)),
            "no_memory disables the memory readout; set lambda1 = lambda2 = 0");
}

ModelConfig ModelConfig::reference() {
    ModelConfig c;
    c.n_nodes = 207;
    c.hidden_dim = 128;
    c.gcru_layers = 5;
    c.cheb_order = 3;
    c.n_prototypes = 20;
    c.proto_dim = 64;
    c.transformer_layers = 2;
    c.n_heads = 4;
    c.window = 12;
    c.horizon = 12;
    c.updater_hidden = 128;
    c.updater_dim = 64;
    c.lambda1 = 0.01;
    c.lambda2 = 0.01;
    c.gamma = 1.0;
    c.lr = 1e-3;
    c.weight_decay = 1e-4;
    c.batch_size = 64;
    c.epochs = 100;
    c.patience = 20;
    c.clip_norm = 5.0;
    return c;
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.n_nodes = 8;
    c.hidden_dim = 8;
    c.gcru_layers = 2;
    c.cheb_order = 2;
    c.n_prototypes = 4;
    c.proto_dim = 8;
    c.transformer_layers = 1;
    c.n_heads = 2;
    c.window = 3;
    c.horizon = 3;
    c.updater_hidden = 16;
    c.updater_dim = 8;
    c.batch_size = 1024;
    c.epochs = 200;
    c.patience = 200;
    c.lr = 5e-4;
    return c;
}

ModelConfig parse_config(std::string_view text, const std::string& source) {
    ModelConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(std::string_view(stripped).substr(0, eq));
        const std::string value = trim(std::string_view(stripped).substr(eq + 1));
        bool found = false;
        for_each_field(cfg, [&](std::string_view name, auto& field) {
            if (name != key) return;
            found = true;
            if (!assign(value, field)) throw ConfigError(where + ": bad value '" + value + "' for " + key);
        });
        if (!found) throw ConfigError(where + ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

ModelConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.string());
}

std::string format_config(const ModelConfig& cfg) {
    std::ostringstream os;
    for_each_field(cfg, [&](std::string_view name, const auto& field) { os << name << " = " << render(field) << '\n'; });
    return os.str();
}

nlohmann::json to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    for_each_field(cfg, [&](std::string_view name, const auto& field) {
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, LaplacianKind>) {
            j[std::string(name)] = std::string(to_string(field));
        } else {
            j[std::string(name)] = field;
        }
    });
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    for_each_field(cfg, [&](std::string_view name, auto& field) {
        const std::string key(name);
        if (!j.contains(key)) throw ConfigError("config snapshot is missing key '" + key + "'");
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, LaplacianKind>) {
            field = parse_laplacian(j[key].get<std::string>());
        } else {
            field = j[key].get<T>();
        }
    });
    cfg.validate();
    return cfg;
}

}  // namespace genshin

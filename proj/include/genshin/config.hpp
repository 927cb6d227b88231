#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace genshin {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class LaplacianKind {
    directed,   // L̃ = -D⁻¹A, keeps edge direction
    symmetric,  // L̃ = -D^{-1/2} ((A+Aᵀ)/2) D^{-1/2}
};

std::string_view to_string(LaplacianKind kind);
LaplacianKind parse_laplacian(std::string_view text);

/// Switches for the five ablation variants.
struct AblationFlags {
    bool no_transformer = false;  // use the last GCRU state as the encoding
    bool single_embed = false;    // tie the second association matrix to the first
    bool no_memory = false;       // no memory readout; free node embeddings for the graphs
    bool static_graph = false;    // decoder graph stays at the fused graph
    bool no_real_graph = false;   // fusion weight fixed at 0

    bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
    // Architecture
    std::size_t n_nodes = 0;  // 0: take from the dataset
    std::size_t in_channels = 1;
    std::size_t hidden_dim = 8;
    std::size_t gcru_layers = 2;
    std::size_t cheb_order = 2;
    LaplacianKind laplacian = LaplacianKind::directed;
    std::size_t n_prototypes = 4;
    std::size_t proto_dim = 8;
    std::size_t transformer_layers = 1;
    std::size_t n_heads = 2;
    std::size_t ffn_dim = 0;  // 0: 4 × hidden_dim
    double dropout = 0.0;
    std::size_t window = 3;
    std::size_t horizon = 3;
    std::size_t updater_hidden = 16;
    std::size_t updater_dim = 8;
    double updater_eta = 0.1;

    // Objective
    double lambda1 = 0.01;
    double lambda2 = 0.01;
    double gamma = 1.0;

    // Optimization
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 64;
    std::size_t epochs = 100;
    std::size_t patience = 20;
    double clip_norm = 5.0;
    double teacher_forcing_decay = 0.5;  // fraction of epochs over which tf_prob falls 1 → 0

    // Data
    double train_ratio = 0.7;
    double val_ratio = 0.1;
    double test_ratio = 0.2;
    double null_value = 0.0;

    AblationFlags ablation;
    std::uint64_t seed = 0;

    std::size_t effective_ffn_dim() const { return ffn_dim ? ffn_dim : 4 * hidden_dim; }

    /// Throws ConfigError on inconsistent settings.
    void validate() const;

    /// Hyperparameters of the full-scale METR-LA setup.
    static ModelConfig reference();
    /// Desk-scale configuration used by the gradient and overfit checks.
    static ModelConfig toy();
};

/// Parses flat `key = value` text. `#` starts a comment; unknown keys are errors.
ModelConfig parse_config(std::string_view text, const std::string& source = "<config>");
ModelConfig load_config(const std::filesystem::path& path);
std::string format_config(const ModelConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace genshin

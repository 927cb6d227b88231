#pragma once

#include "genshin/config.hpp"
#include "genshin/data.hpp"
#include "genshin/encoder.hpp"
#include "genshin/graph.hpp"
#include "genshin/losses.hpp"
#include "genshin/memory.hpp"
#include "genshin/params.hpp"
#include "genshin/rng.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace genshin {

/// Checkpoint is missing, corrupt, or does not match the requested model.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct ForwardOptions {
    bool train = false;
    const Tensor* teacher = nullptr;  // normalized targets for teacher forcing
    double tf_prob = 0.0;
    Rng* rng = nullptr;  // dropout and teacher-forcing draws; a fixed local one when null
    bool keep_attention = false;
    bool keep_graphs = false;
};

struct ForwardResult {
    Tensor y_hat;  // B×τ×N×C, normalized
    GraphSet graphs;
    EncoderOutput encoder;
    std::optional<MemoryReadout> readout;
    std::vector<Tensor> dyn_graphs;
};

struct LossBreakdown {
    Tensor task;
    Tensor consistency;
    Tensor contrast;
    Tensor total;
};

struct PredictOptions {
    bool normalized_input = true;
    bool memory_scores = false;
    bool dynamic_graphs = false;
    bool attention = false;
};

struct Prediction {
    Tensor y;  // B×τ×N×C, original units
    std::optional<Tensor> memory_scores;
    std::vector<Tensor> dynamic_graphs;
    std::vector<Tensor> attention;
};

class GenshinModel {
public:
    /// Builds a freshly initialized model. `adjacency` is the raw nonnegative
    /// road graph; it is row-normalized here.
    GenshinModel(ModelConfig cfg, const Tensor& adjacency, Scaler scaler);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Tensor& a_real() const { return a_real_; }
    const Scaler& scaler() const { return scaler_; }
    std::size_t n_nodes() const { return a_real_.shape()[0]; }

    std::size_t encoder_support_count() const { return 2 * cfg_.cheb_order + 1; }
    std::size_t decoder_support_count() const { return cfg_.cheb_order + 1; }

    /// Learned and fused graphs with their Chebyshev supports.
    GraphSet build_graphs() const;
    /// X: B×T×N×C normalized.
    ForwardResult forward(const Tensor& x, const ForwardOptions& opts = {}) const;
    LossBreakdown loss(const ForwardResult& result, const Tensor& y) const;
    /// Evaluation-mode prediction in original units.
    Prediction predict(const Tensor& x, const PredictOptions& opts = {}) const;

    void save(const std::filesystem::path& dir) const;
    /// With `expected` set, the stored ablation flags must match it.
    static GenshinModel load(const std::filesystem::path& dir, const std::optional<AblationFlags>& expected = {});

private:
    GenshinModel(ModelConfig cfg, Tensor a_real, Scaler scaler, bool normalized);
    void build_params();

    ModelConfig cfg_;
    ParamStore params_;
    Tensor a_real_;
    Scaler scaler_;
};

nlohmann::json scaler_to_json(const Scaler& s);
Scaler scaler_from_json(const nlohmann::json& j);

}  // namespace genshin

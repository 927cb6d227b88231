#pragma once

#include "genshin/data.hpp"
#include "genshin/losses.hpp"
#include "genshin/model.hpp"
#include "genshin/params.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace genshin {

/// Global L2 norm over every gradient in `store`.
double gradient_norm(const ParamStore& store);

/// Scales all gradients by max_norm/norm when the norm exceeds max_norm.
/// Returns the factor applied (1.0 when unclipped).
double clip_gradients(ParamStore& store, double max_norm);

struct AdamWSettings {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Decoupled weight decay Adam. Only parameters flagged `decay` are decayed.
class AdamW {
public:
    explicit AdamW(AdamWSettings settings = {}) : s_(settings) {}

    void step(ParamStore& store);
    std::size_t steps() const { return t_; }
    const AdamWSettings& settings() const { return s_; }

    void save(const std::filesystem::path& dir) const;
    void load(const std::filesystem::path& dir, const ParamStore& store, std::size_t steps);

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    AdamWSettings s_;
    std::size_t t_ = 0;
    std::map<std::string, Moments> moments_;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_mae = 0.0;   // normalized units
    double tf_prob = 0.0;
};

struct EvalResult {
    double normalized_mae = 0.0;
    MetricReport metrics;  // original units
    Tensor predictions;    // B×τ×N×C original units
};

struct TrainReport {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    bool stopped_early = false;
    EvalResult test;
};

struct FitOptions {
    std::optional<std::filesystem::path> checkpoint_dir;
    /// Called after each epoch; a non-null function may log progress.
    std::function<void(const EpochRecord&)> on_epoch;
};

struct AblationVariant {
    std::string name;  // display name, e.g. "w/o Memory"
    std::string slug;  // directory-safe name
    AblationFlags flags;
};

/// The full model followed by the five single-flag variants.
std::vector<AblationVariant> ablation_variants();

/// `base` with the variant's flags applied; memory losses are switched off
/// when the memory bank is removed.
ModelConfig variant_config(const ModelConfig& base, const AblationFlags& flags);

/// Teacher-forcing probability at a 0-based epoch.
double teacher_forcing_prob(const ModelConfig& cfg, std::size_t epoch);

/// Evaluation-mode pass over a split (tf_prob = 0).
EvalResult evaluate(const GenshinModel& model, const WindowedSplit& split, double null_value,
                    std::size_t batch_size = 64);

/// Trains in place and restores the parameters of the best validation epoch.
TrainReport fit(GenshinModel& model, const DatasetBundle& data, const FitOptions& options = {});

/// Writes the model plus optimizer state and trainstate.json.
void save_training_checkpoint(const std::filesystem::path& dir, const GenshinModel& model, const AdamW& opt,
                              const nlohmann::json& trainstate);

/// Loss curve CSV: epoch,train_loss,val_mae.
void write_loss_curve(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace genshin

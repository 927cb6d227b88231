#pragma once

#include "genshin/memory.hpp"
#include "genshin/tensor.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace genshin {

/// Mean absolute error over every entry.
Tensor task_loss(const Tensor& y_hat, const Tensor& y);

/// Mean over (b, n) of ‖Q − M[pos]‖².
Tensor consistency_loss(const MemoryReadout& readout, const Tensor& memory);

/// Mean over (b, n) of max(0, ‖Q − M[pos]‖² − ‖Q − M[neg]‖² + gamma).
Tensor contrastive_loss(const MemoryReadout& readout, const Tensor& memory, double gamma);

struct LossWeights {
    double lambda1 = 0.01;
    double lambda2 = 0.01;
    double gamma = 1.0;
};

/// task + lambda1·consistency + lambda2·contrast.
Tensor total_loss(const Tensor& task, const Tensor& consistency, const Tensor& contrast, const LossWeights& w);

struct MetricTriple {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
    std::size_t count = 0;
    bool defined() const { return count > 0; }
};

struct MetricReport {
    MetricTriple overall;
    std::vector<MetricTriple> per_horizon;  // steps 1..τ

    std::size_t mask_count() const { return overall.count; }
    /// Aligned table with one row per horizon plus "avg".
    void write_table(std::ostream& os) const;
    /// CSV: horizon,mae,rmse,mape_pct with a final "avg" row.
    void write_csv(std::ostream& os) const;
};

/// Metrics in original units. Entries whose target equals `null_value` are
/// masked out. Tensors are B×τ×N×C (axis 1 is the horizon) or any shape with
/// `horizon_axis` < 0 for no breakdown.
MetricReport compute_metrics(const Tensor& y_hat, const Tensor& y, double null_value = 0.0, int horizon_axis = 1);

/// Historical average: per (node, channel, slot) training mean with slot =
/// step mod period. `train_raw` is T×N×C starting at absolute step 0; the
/// result has B×τ×N×C for targets starting at the given absolute steps.
/// Slots never seen fall back to the node's global training mean.
Tensor historical_average(const Tensor& train_raw, const std::vector<std::size_t>& target_start, std::size_t horizon,
                          std::size_t period);

/// One week of steps when timestamps are available, else one day.
std::size_t default_ha_period(bool has_timestamps, int interval_minutes);

}  // namespace genshin

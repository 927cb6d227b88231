#pragma once

#include "genshin/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace genshin {

/// Dataset contents or layout violate the documented format.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A multivariate sensor series plus its road graph.
///
/// `adjacency(r, c) > 0` means node r draws information from node c; this is
/// the orientation used for graph aggregation (row r of A·X mixes the
/// features of the columns it weights).
struct RawDataset {
    Tensor values;     // T_total × N × C
    Tensor adjacency;  // N × N, nonnegative
    int interval_minutes = 5;
    std::vector<std::int64_t> timestamps;  // empty or one per step

    std::size_t n_steps() const { return values.shape()[0]; }
    std::size_t n_nodes() const { return values.shape()[1]; }
    std::size_t n_channels() const { return values.shape()[2]; }

    /// Throws DataError naming the offending dimensions.
    void validate() const;
    std::string describe() const;
};

RawDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const RawDataset& data, const std::filesystem::path& dir);

/// Ingests a CSV (header row: timestamp column then node ids; one row per
/// step) and an optional N×N adjacency CSV into a RawDataset. Without an
/// adjacency file the graph is the identity.
RawDataset convert_csv(const std::filesystem::path& series_csv,
                       const std::optional<std::filesystem::path>& adjacency_csv, int interval_minutes);

/// Per-channel z-score statistics.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    /// Fits on the first `steps` rows of a T×N×C tensor. Standard deviations
    /// below 1e-8 are replaced by 1.0.
    static Scaler fit(const Tensor& values, std::size_t steps);
    /// Both act on tensors whose last axis is the channel axis.
    Tensor transform(const Tensor& x) const;
    Tensor inverse(const Tensor& x) const;
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct Batch {
    Tensor x;      // B×T×N×C normalized inputs
    Tensor y;      // B×τ×N×C normalized targets
    Tensor y_raw;  // B×τ×N×C targets in original units
    std::vector<std::size_t> target_start;  // absolute raw step of each Y[b, 0]
};

/// Windows inside one chronological segment of the raw series.
class WindowedSplit {
public:
    WindowedSplit() = default;
    WindowedSplit(Tensor raw_segment, const Scaler& scaler, std::size_t offset, std::size_t window,
                  std::size_t horizon);

    /// Number of (X, Y) windows.
    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    /// Absolute raw step where the segment starts.
    std::size_t offset() const { return offset_; }
    std::size_t segment_length() const { return length_; }
    std::size_t window() const { return window_; }
    std::size_t horizon() const { return horizon_; }

    Batch batch(std::span<const std::size_t> indices) const;
    Batch all() const;
    const Tensor& raw_segment() const { return raw_; }

private:
    Tensor raw_;
    Tensor normalized_;
    std::size_t offset_ = 0;
    std::size_t length_ = 0;
    std::size_t window_ = 0;
    std::size_t horizon_ = 0;
    std::size_t count_ = 0;
};

struct DatasetBundle {
    WindowedSplit train;
    WindowedSplit val;
    WindowedSplit test;
    Scaler scaler;
    Tensor adjacency;
    std::size_t window = 0;
    std::size_t horizon = 0;
    std::size_t train_end = 0;  // raw step boundaries between segments
    std::size_t val_end = 0;
    int interval_minutes = 5;
    bool has_timestamps = false;

    std::size_t n_nodes() const { return adjacency.shape()[0]; }
};

/// Splits the raw series chronologically at the train/val boundaries, fits the
/// scaler on the training segment, and windows each segment independently so
/// no window straddles a boundary.
DatasetBundle make_windows(const RawDataset& raw, std::size_t window, std::size_t horizon, SplitRatios ratios = {});

/// Directed lag dependency: `target` at time t receives `weight` times the own
/// signal of `source` at time t - lag.
struct PlantedEdge {
    std::size_t source = 0;
    std::size_t target = 0;
    std::size_t lag = 1;
    double weight = 0.5;
};

struct SynthSpec {
    std::size_t period = 288;
    double base = 0.0;
    double amplitude = 1.0;
    double noise = 0.0;
    std::size_t channels = 1;
    int interval_minutes = 5;
    std::vector<PlantedEdge> edges;
};

/// Per-node sinusoids (phase 2π·i/N, plus π/4 per extra channel) with seeded
/// Gaussian noise and the planted lag edges. The returned adjacency is the
/// planted graph in aggregation orientation: identity plus weight at
/// (target, source) for each edge. With zero noise every series is exactly
/// periodic.
RawDataset generate_synthetic(std::size_t n_nodes, std::size_t t_total, const SynthSpec& spec, std::uint64_t seed);

}  // namespace genshin

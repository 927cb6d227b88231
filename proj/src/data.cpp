#include "genshin/data.hpp"

#include "genshin/rng.hpp"
#include "genshin/serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace genshin {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            cells.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell.push_back(ch);
        }
    }
    cells.push_back(cell);
    for (auto& c : cells) {
        const auto first = c.find_first_not_of(" \t");
        const auto last = c.find_last_not_of(" \t");
        c = first == std::string::npos ? std::string() : c.substr(first, last - first + 1);
    }
    return cells;
}

std::optional<double> parse_double(const std::string& text) {
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return value;
}

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
    std::int64_t epoch = 0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, epoch);
    if (res.ec == std::errc() && res.ptr == end) return epoch;
    std::tm tm{};
    for (const char* fmt : {"%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"}) {
        std::istringstream is(text);
        tm = {};
        is >> std::get_time(&tm, fmt);
        if (!is.fail()) return static_cast<std::int64_t>(timegm(&tm));
    }
    return std::nullopt;
}

std::string location(const fs::path& file, std::size_t line) { return file.string() + ":" + std::to_string(line); }

}  // namespace

// ---------------------------------------------------------------------------
// RawDataset

void RawDataset::validate() const {
    if (!values.defined() || values.rank() != 3) {
        throw DataError("dataset values must be T×N×C, got " + shape_str(values.shape()));
    }
    if (!adjacency.defined() || adjacency.rank() != 2 || adjacency.shape()[0] != adjacency.shape()[1]) {
        throw DataError("adjacency must be square, got " + shape_str(adjacency.shape()));
    }
    if (adjacency.shape()[0] != n_nodes()) {
        throw DataError("adjacency is " + std::to_string(adjacency.shape()[0]) + "×" +
                        std::to_string(adjacency.shape()[1]) + " but values have N=" + std::to_string(n_nodes()) +
                        " nodes");
    }
    for (double a : adjacency.data()) {
        if (a < 0.0) throw DataError("adjacency has a negative entry");
    }
    if (interval_minutes <= 0) throw DataError("interval_minutes must be positive");
    if (!timestamps.empty() && timestamps.size() != n_steps()) {
        throw DataError("timestamps has " + std::to_string(timestamps.size()) + " entries for " +
                        std::to_string(n_steps()) + " steps");
    }
}

std::string RawDataset::describe() const {
    std::ostringstream os;
    os << "steps=" << n_steps() << " nodes=" << n_nodes() << " channels=" << n_channels()
       << " interval_minutes=" << interval_minutes << " timestamps=" << (timestamps.empty() ? "no" : "yes");
    return os.str();
}

RawDataset load_dataset(const fs::path& dir) {
    const fs::path meta_path = dir / "meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw DataError(meta_path.string() + ": cannot open");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(meta_path.string() + ": " + e.what());
    }
    for (const char* key : {"n_nodes", "n_steps", "channels", "interval_minutes"}) {
        if (!meta.contains(key) || !meta[key].is_number_integer()) {
            throw DataError(meta_path.string() + ": missing integer key '" + key + "'");
        }
    }

    RawDataset data;
    try {
        data.values = load_tensor(dir / "values.bin");
        data.adjacency = load_tensor(dir / "adj.bin");
    } catch (const FormatError& e) {
        throw DataError(e.what());
    }
    data.interval_minutes = meta["interval_minutes"].get<int>();

    const Shape expected{meta["n_steps"].get<std::size_t>(), meta["n_nodes"].get<std::size_t>(),
                         meta["channels"].get<std::size_t>()};
    if (data.values.shape() != expected) {
        throw DataError((dir / "values.bin").string() + ": shape " + shape_str(data.values.shape()) +
                        " does not match meta.json " + shape_str(expected));
    }

    const fs::path ts_path = dir / "timestamps.txt";
    if (fs::exists(ts_path)) {
        std::ifstream ts(ts_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(ts, line)) {
            ++lineno;
            if (line.empty() || line == "\r") continue;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto value = parse_timestamp(line);
            if (!value) throw DataError(location(ts_path, lineno) + ": bad timestamp '" + line + "'");
            data.timestamps.push_back(*value);
        }
    }
    data.validate();
    return data;
}

void save_dataset(const RawDataset& data, const fs::path& dir) {
    data.validate();
    fs::create_directories(dir);
    nlohmann::json meta = {{"n_nodes", data.n_nodes()},
                           {"n_steps", data.n_steps()},
                           {"channels", data.n_channels()},
                           {"interval_minutes", data.interval_minutes}};
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
    save_tensor(dir / "values.bin", data.values);
    save_tensor(dir / "adj.bin", data.adjacency);
    if (!data.timestamps.empty()) {
        std::ofstream ts(dir / "timestamps.txt");
        for (auto t : data.timestamps) ts << t << '\n';
    } else if (fs::exists(dir / "timestamps.txt")) {
        fs::remove(dir / "timestamps.txt");
    }
}

RawDataset convert_csv(const fs::path& series_csv, const std::optional<fs::path>& adjacency_csv,
                       int interval_minutes) {
    std::ifstream in(series_csv);
    if (!in) throw DataError(series_csv.string() + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw DataError(series_csv.string() + ": empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 2) throw DataError(location(series_csv, 1) + ": need a timestamp column and node columns");
    const std::size_t n_nodes = header.size() - 1;

    std::vector<double> values;
    std::vector<std::int64_t> timestamps;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError(location(series_csv, lineno) + ": expected " + std::to_string(header.size()) +
                            " columns, got " + std::to_string(cells.size()));
        }
        auto ts = parse_timestamp(cells[0]);
        if (!ts) throw DataError(location(series_csv, lineno) + ": bad timestamp '" + cells[0] + "'");
        timestamps.push_back(*ts);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c].empty()) {
                values.push_back(0.0);  // missing reading, masked by metrics like a zero
                continue;
            }
            auto v = parse_double(cells[c]);
            if (!v || !std::isfinite(*v)) {
                throw DataError(location(series_csv, lineno) + ": bad value '" + cells[c] + "' in column " +
                                std::to_string(c + 1));
            }
            values.push_back(*v);
        }
    }
    if (timestamps.empty()) throw DataError(series_csv.string() + ": no data rows");

    RawDataset data;
    const std::size_t steps = timestamps.size();
    data.values = Tensor(Shape{steps, n_nodes, 1}, std::move(values));
    data.timestamps = std::move(timestamps);
    data.interval_minutes = interval_minutes;

    if (adjacency_csv) {
        std::ifstream adj(*adjacency_csv);
        if (!adj) throw DataError(adjacency_csv->string() + ": cannot open");
        std::vector<double> entries;
        std::size_t rows = 0;
        std::size_t adj_line = 0;
        while (std::getline(adj, line)) {
            ++adj_line;
            if (line.empty() || line == "\r") continue;
            auto cells = split_csv_line(line);
            if (rows == 0 && adj_line == 1 && !parse_double(cells.back())) continue;  // header row
            // Allow a leading row label column.
            if (cells.size() == n_nodes + 1 && !parse_double(cells.front())) cells.erase(cells.begin());
            if (cells.size() != n_nodes) {
                throw DataError(location(*adjacency_csv, adj_line) + ": expected " + std::to_string(n_nodes) +
                                " entries, got " + std::to_string(cells.size()));
            }
            for (const auto& c : cells) {
                auto v = parse_double(c);
                if (!v) throw DataError(location(*adjacency_csv, adj_line) + ": bad value '" + c + "'");
                entries.push_back(*v);
            }
            ++rows;
        }
        if (rows != n_nodes) {
            throw DataError(adjacency_csv->string() + ": adjacency has " + std::to_string(rows) + " rows for " +
                            std::to_string(n_nodes) + " nodes");
        }
        data.adjacency = Tensor(Shape{n_nodes, n_nodes}, std::move(entries));
    } else {
        data.adjacency = Tensor::eye(n_nodes);
    }
    data.validate();
    return data;
}

// ---------------------------------------------------------------------------
// Scaler

Scaler Scaler::fit(const Tensor& values, std::size_t steps) {
    if (values.rank() != 3) throw DataError("Scaler::fit expects T×N×C values");
    const std::size_t nodes = values.shape()[1];
    const std::size_t channels = values.shape()[2];
    steps = std::min(steps, values.shape()[0]);
    if (steps == 0) throw DataError("Scaler::fit: no training steps");
    Scaler s;
    s.mean.assign(channels, 0.0);
    s.stddev.assign(channels, 0.0);
    const auto v = values.data();
    const double count = static_cast<double>(steps * nodes);
    for (std::size_t i = 0; i < steps * nodes; ++i) {
        for (std::size_t c = 0; c < channels; ++c) s.mean[c] += v[i * channels + c];
    }
    for (auto& m : s.mean) m /= count;
    for (std::size_t i = 0; i < steps * nodes; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double d = v[i * channels + c] - s.mean[c];
            s.stddev[c] += d * d;
        }
    }
    for (auto& sd : s.stddev) {
        sd = std::sqrt(sd / count);
        if (sd < 1e-8) sd = 1.0;
    }
    return s;
}

Tensor Scaler::transform(const Tensor& x) const {
    const std::size_t c = mean.size();
    Tensor m(Shape{c}, mean);
    Tensor s(Shape{c}, stddev);
    return div(sub(x, m), s);
}

Tensor Scaler::inverse(const Tensor& x) const {
    const std::size_t c = mean.size();
    Tensor m(Shape{c}, mean);
    Tensor s(Shape{c}, stddev);
    return add(mul(x, s), m);
}

// ---------------------------------------------------------------------------
// Windowing

WindowedSplit::WindowedSplit(Tensor raw_segment, const Scaler& scaler, std::size_t offset, std::size_t window,
                             std::size_t horizon)
    : raw_(std::move(raw_segment)), offset_(offset), window_(window), horizon_(horizon) {
    length_ = raw_.defined() ? raw_.shape()[0] : 0;
    count_ = length_ >= window + horizon ? length_ - window - horizon + 1 : 0;
    if (length_ > 0) {
        NoGradGuard guard;
        normalized_ = scaler.transform(raw_);
    }
}

Batch WindowedSplit::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw std::invalid_argument("WindowedSplit::batch: empty index list");
    const std::size_t nodes = raw_.shape()[1];
    const std::size_t channels = raw_.shape()[2];
    const std::size_t frame = nodes * channels;
    const std::size_t b = indices.size();
    std::vector<double> x(b * window_ * frame);
    std::vector<double> y(b * horizon_ * frame);
    std::vector<double> y_raw(b * horizon_ * frame);
    Batch out;
    const auto norm = normalized_.data();
    const auto raw = raw_.data();
    for (std::size_t k = 0; k < b; ++k) {
        const std::size_t start = indices[k];
        if (start >= count_) throw std::out_of_range("WindowedSplit::batch: window index out of range");
        std::copy_n(norm.data() + start * frame, window_ * frame, x.data() + k * window_ * frame);
        std::copy_n(norm.data() + (start + window_) * frame, horizon_ * frame, y.data() + k * horizon_ * frame);
        std::copy_n(raw.data() + (start + window_) * frame, horizon_ * frame, y_raw.data() + k * horizon_ * frame);
        out.target_start.push_back(offset_ + start + window_);
    }
    out.x = Tensor(Shape{b, window_, nodes, channels}, std::move(x));
    out.y = Tensor(Shape{b, horizon_, nodes, channels}, std::move(y));
    out.y_raw = Tensor(Shape{b, horizon_, nodes, channels}, std::move(y_raw));
    return out;
}

Batch WindowedSplit::all() const {
    std::vector<std::size_t> idx(count_);
    for (std::size_t i = 0; i < count_; ++i) idx[i] = i;
    return batch(idx);
}

DatasetBundle make_windows(const RawDataset& raw, std::size_t window, std::size_t horizon, SplitRatios ratios) {
    raw.validate();
    if (window < 1 || horizon < 1) throw DataError("window and horizon must be at least 1");
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw DataError("split ratios must be nonnegative and sum to 1");
    }
    const std::size_t total = raw.n_steps();
    if (total < window + horizon) {
        throw DataError("series too short: " + std::to_string(total) + " steps for window " + std::to_string(window) +
                        " + horizon " + std::to_string(horizon));
    }
    const auto boundary = [total](double fraction) {
        return std::min(total, static_cast<std::size_t>(std::floor(static_cast<double>(total) * fraction + 1e-9)));
    };
    DatasetBundle bundle;
    bundle.train_end = boundary(ratios.train);
    bundle.val_end = std::max(bundle.train_end, boundary(ratios.train + ratios.val));
    if (bundle.train_end < window + horizon) {
        throw DataError("series too short: training segment of " + std::to_string(bundle.train_end) +
                        " steps holds no window of " + std::to_string(window + horizon));
    }

    bundle.scaler = Scaler::fit(raw.values, bundle.train_end);
    bundle.window = window;
    bundle.horizon = horizon;
    bundle.adjacency = raw.adjacency;
    bundle.interval_minutes = raw.interval_minutes;
    bundle.has_timestamps = !raw.timestamps.empty();

    auto segment = [&](std::size_t begin, std::size_t end) -> WindowedSplit {
        if (end <= begin) return WindowedSplit(Tensor(), bundle.scaler, begin, window, horizon);
        NoGradGuard guard;
        return WindowedSplit(slice(raw.values, 0, begin, end - begin), bundle.scaler, begin, window, horizon);
    };
    bundle.train = segment(0, bundle.train_end);
    bundle.val = segment(bundle.train_end, bundle.val_end);
    bundle.test = segment(bundle.val_end, total);
    return bundle;
}

// ---------------------------------------------------------------------------
// Synthetic data

RawDataset generate_synthetic(std::size_t n_nodes, std::size_t t_total, const SynthSpec& spec, std::uint64_t seed) {
    if (n_nodes < 2) throw DataError("generate_synthetic: need at least 2 nodes");
    if (t_total < 2) throw DataError("generate_synthetic: need at least 2 steps");
    if (spec.period < 1) throw DataError("generate_synthetic: period must be positive");
    if (spec.channels < 1) throw DataError("generate_synthetic: channels must be positive");
    if (spec.noise < 0.0) throw DataError("generate_synthetic: noise must be nonnegative");
    for (const auto& e : spec.edges) {
        if (e.source >= n_nodes || e.target >= n_nodes || e.source == e.target || e.lag < 1) {
            throw DataError("generate_synthetic: invalid planted edge " + std::to_string(e.source) + "->" +
                            std::to_string(e.target));
        }
    }

    const std::size_t channels = spec.channels;
    Rng rng(seed);
    // Own signal of each node: sinusoid plus noise.
    std::vector<double> own(t_total * n_nodes * channels);
    const double period = static_cast<double>(spec.period);
    auto sinusoid = [&](std::int64_t t, std::size_t node, std::size_t channel) {
        const auto p = static_cast<std::int64_t>(spec.period);
        const std::int64_t slot = ((t % p) + p) % p;
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(node) / static_cast<double>(n_nodes) +
                             std::numbers::pi / 4.0 * static_cast<double>(channel);
        return spec.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(slot) / period + phase);
    };
    for (std::size_t t = 0; t < t_total; ++t) {
        for (std::size_t n = 0; n < n_nodes; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
                double v = sinusoid(static_cast<std::int64_t>(t), n, c);
                if (spec.noise > 0.0) v += spec.noise * rng.normal();
                own[(t * n_nodes + n) * channels + c] = v;
            }
        }
    }
    auto own_at = [&](std::int64_t t, std::size_t node, std::size_t channel) {
        // Before the series starts the noise is absent but the sinusoid continues.
        if (t < 0) return sinusoid(t, node, channel);
        return own[(static_cast<std::size_t>(t) * n_nodes + node) * channels + channel];
    };

    std::vector<double> values(own.size());
    for (std::size_t t = 0; t < t_total; ++t) {
        for (std::size_t n = 0; n < n_nodes; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
                double v = own[(t * n_nodes + n) * channels + c];
                for (const auto& e : spec.edges) {
                    if (e.target != n) continue;
                    v += e.weight * own_at(static_cast<std::int64_t>(t) - static_cast<std::int64_t>(e.lag), e.source, c);
                }
                values[(t * n_nodes + n) * channels + c] = spec.base + v;
            }
        }
    }

    RawDataset data;
    data.values = Tensor(Shape{t_total, n_nodes, channels}, std::move(values));
    Tensor adj = Tensor::eye(n_nodes);
    auto a = adj.data_mut();
    for (const auto& e : spec.edges) a[e.target * n_nodes + e.source] += std::abs(e.weight);
    data.adjacency = adj;
    data.interval_minutes = spec.interval_minutes;
    return data;
}

}  // namespace genshin

#include "genshin/losses.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace genshin {

namespace {

std::pair<Tensor, Tensor> squared_distances(const MemoryReadout& r, const Tensor& memory) {
    const std::size_t rows = r.pos_idx.size();
    const std::size_t dim = memory.shape()[1];
    if (r.q.numel() != rows * dim) throw ShapeError("memory losses: readout does not match memory");
    const Tensor q = reshape(r.q, {rows, dim});
    const Tensor dp = sub(q, index_select(memory, r.pos_idx));
    const Tensor dn = sub(q, index_select(memory, r.neg_idx));
    return {sum(mul(dp, dp), 1), sum(mul(dn, dn), 1)};
}

std::string fmt(double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

}  // namespace

Tensor task_loss(const Tensor& y_hat, const Tensor& y) {
    if (y_hat.shape() != y.shape()) {
        throw ShapeError("task_loss: prediction " + shape_str(y_hat.shape()) + " vs target " + shape_str(y.shape()));
    }
    if (y.numel() == 0) throw std::invalid_argument("task_loss: empty tensors");
    return mean_all(abs(sub(y_hat, y)));
}

Tensor consistency_loss(const MemoryReadout& readout, const Tensor& memory) {
    return mean_all(squared_distances(readout, memory).first);
}

Tensor contrastive_loss(const MemoryReadout& readout, const Tensor& memory, double gamma) {
    auto [pos, neg] = squared_distances(readout, memory);
    return mean_all(relu(add_scalar(sub(pos, neg), gamma)));
}

Tensor total_loss(const Tensor& task, const Tensor& consistency, const Tensor& contrast, const LossWeights& w) {
    return add(add(task, scale(consistency, w.lambda1)), scale(contrast, w.lambda2));
}

void MetricReport::write_table(std::ostream& os) const {
    auto row = [&](const std::string& label, const MetricTriple& m) {
        os << std::left << std::setw(8) << label << std::right;
        if (!m.defined()) {
            os << std::setw(10) << "n/a" << std::setw(10) << "n/a" << std::setw(10) << "n/a" << '\n';
            return;
        }
        os << std::setw(10) << fmt(m.mae, 4) << std::setw(10) << fmt(m.rmse, 4) << std::setw(10)
           << fmt(m.mape, 2) + "%" << '\n';
    };
    os << std::left << std::setw(8) << "horizon" << std::right << std::setw(10) << "MAE" << std::setw(10) << "RMSE"
       << std::setw(10) << "MAPE" << '\n';
    for (std::size_t h = 0; h < per_horizon.size(); ++h) row(std::to_string(h + 1), per_horizon[h]);
    row("avg", overall);
}

void MetricReport::write_csv(std::ostream& os) const {
    auto row = [&](const std::string& label, const MetricTriple& m) {
        os << label << ',';
        if (!m.defined()) {
            os << ",,\n";
            return;
        }
        os << std::setprecision(17) << m.mae << ',' << m.rmse << ',' << m.mape << '\n';
    };
    os << "horizon,mae,rmse,mape_pct\n";
    for (std::size_t h = 0; h < per_horizon.size(); ++h) row(std::to_string(h + 1), per_horizon[h]);
    row("avg", overall);
}

MetricReport compute_metrics(const Tensor& y_hat, const Tensor& y, double null_value, int horizon_axis) {
    if (y_hat.shape() != y.shape()) {
        throw ShapeError("metrics: prediction " + shape_str(y_hat.shape()) + " vs target " + shape_str(y.shape()));
    }
    std::size_t outer = 1;
    std::size_t steps = 1;
    std::size_t inner = y.numel();
    if (horizon_axis >= 0) {
        const auto ax = static_cast<std::size_t>(horizon_axis);
        if (ax >= y.rank()) throw ShapeError("metrics: horizon axis out of range for " + shape_str(y.shape()));
        steps = y.shape()[ax];
        outer = 1;
        for (std::size_t i = 0; i < ax; ++i) outer *= y.shape()[i];
        inner = y.numel() / (outer * steps);
    }
    struct Acc {
        double abs = 0.0, sq = 0.0, pct = 0.0;
        std::size_t n = 0, pct_n = 0;
    };
    std::vector<Acc> acc(steps);
    const auto p = y_hat.data();
    const auto t = y.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t s = 0; s < steps; ++s) {
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t idx = (o * steps + s) * inner + i;
                if (t[idx] == null_value) continue;
                const double e = std::abs(p[idx] - t[idx]);
                acc[s].abs += e;
                acc[s].sq += e * e;
                ++acc[s].n;
                if (t[idx] != 0.0) {
                    acc[s].pct += e / std::abs(t[idx]);
                    ++acc[s].pct_n;
                }
            }
        }
    }
    auto finish = [](const Acc& a) {
        MetricTriple m;
        m.count = a.n;
        if (a.n == 0) return m;
        const double n = static_cast<double>(a.n);
        m.mae = a.abs / n;
        m.rmse = std::sqrt(a.sq / n);
        m.mape = a.pct_n ? 100.0 * a.pct / static_cast<double>(a.pct_n) : 0.0;
        return m;
    };
    MetricReport report;
    Acc total;
    for (const auto& a : acc) {
        total.abs += a.abs;
        total.sq += a.sq;
        total.pct += a.pct;
        total.n += a.n;
        total.pct_n += a.pct_n;
        if (horizon_axis >= 0) report.per_horizon.push_back(finish(a));
    }
    report.overall = finish(total);
    return report;
}

Tensor historical_average(const Tensor& train_raw, const std::vector<std::size_t>& target_start, std::size_t horizon,
                          std::size_t period) {
    if (train_raw.rank() != 3) throw ShapeError("historical_average: expected T×N×C training values");
    if (period == 0) throw std::invalid_argument("historical_average: period must be positive");
    const std::size_t steps = train_raw.shape()[0];
    const std::size_t frame = train_raw.shape()[1] * train_raw.shape()[2];
    const auto v = train_raw.data();

    std::vector<double> slot_sum(period * frame, 0.0);
    std::vector<std::size_t> slot_count(period, 0);
    std::vector<double> global(frame, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t slot = t % period;
        ++slot_count[slot];
        for (std::size_t i = 0; i < frame; ++i) {
            slot_sum[slot * frame + i] += v[t * frame + i];
            global[i] += v[t * frame + i];
        }
    }
    for (auto& g : global) g /= static_cast<double>(std::max<std::size_t>(steps, 1));

    const std::size_t batch = target_start.size();
    std::vector<double> out(batch * horizon * frame);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < horizon; ++h) {
            const std::size_t slot = (target_start[b] + h) % period;
            for (std::size_t i = 0; i < frame; ++i) {
                out[(b * horizon + h) * frame + i] = slot_count[slot]
                                                         ? slot_sum[slot * frame + i] / static_cast<double>(slot_count[slot])
                                                         : global[i];
            }
        }
    }
    return Tensor(Shape{batch, horizon, train_raw.shape()[1], train_raw.shape()[2]}, std::move(out));
}

std::size_t default_ha_period(bool has_timestamps, int interval_minutes) {
    if (interval_minutes <= 0) throw std::invalid_argument("default_ha_period: interval must be positive");
    const std::size_t day = static_cast<std::size_t>(24 * 60 / interval_minutes);
    return has_timestamps ? 7 * day : day;
}

}  // namespace genshin

#include "genshin/training.hpp"

#include "genshin/serialize.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace genshin {

namespace fs = std::filesystem;

double gradient_norm(const ParamStore& store) {
    double total = 0.0;
    for (const auto& p : store.all()) {
        if (!p.value.has_grad()) continue;
        for (double g : p.value.grad()) total += g * g;
    }
    return std::sqrt(total);
}

double clip_gradients(ParamStore& store, double max_norm) {
    const double norm = gradient_norm(store);
    if (!(norm > max_norm)) return 1.0;
    const double factor = max_norm / norm;
    for (auto& p : store.all()) {
        if (!p.value.has_grad()) continue;
        for (double& g : p.value.grad_mut()) g *= factor;
    }
    return factor;
}

void AdamW::step(ParamStore& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (auto& p : store.all()) {
        auto& mom = moments_[p.name];
        const std::size_t n = p.value.numel();
        if (mom.m.size() != n) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        }
        auto theta = p.value.data_mut();
        const bool has_grad = p.value.has_grad();
        const auto grad = has_grad ? p.value.grad() : std::span<const double>();
        const double decay = p.decay ? s_.lr * s_.weight_decay : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = has_grad ? grad[i] : 0.0;
            theta[i] -= decay * theta[i];
            mom.m[i] = s_.beta1 * mom.m[i] + (1.0 - s_.beta1) * g;
            mom.v[i] = s_.beta2 * mom.v[i] + (1.0 - s_.beta2) * g * g;
            const double m_hat = mom.m[i] / c1;
            const double v_hat = mom.v[i] / c2;
            theta[i] -= s_.lr * m_hat / (std::sqrt(v_hat) + s_.eps);
        }
    }
}

void AdamW::save(const fs::path& dir) const {
    fs::create_directories(dir);
    for (const auto& [name, mom] : moments_) {
        std::vector<double> both(mom.m);
        both.insert(both.end(), mom.v.begin(), mom.v.end());
        save_tensor(dir / (name + ".bin"), Tensor(Shape{2, mom.m.size()}, std::move(both)));
    }
}

void AdamW::load(const fs::path& dir, const ParamStore& store, std::size_t steps) {
    moments_.clear();
    for (const auto& p : store.all()) {
        const fs::path file = dir / (p.name + ".bin");
        if (!fs::exists(file)) continue;
        Tensor t = load_tensor(file);
        if (t.shape() != Shape{2, p.value.numel()}) {
            throw FormatError(file.string() + ": optimizer state shape " + shape_str(t.shape()) + " does not match");
        }
        const auto d = t.data();
        Moments mom;
        mom.m.assign(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(p.value.numel()));
        mom.v.assign(d.begin() + static_cast<std::ptrdiff_t>(p.value.numel()), d.end());
        moments_[p.name] = std::move(mom);
    }
    t_ = steps;
}

std::vector<AblationVariant> ablation_variants() {
    return {
        {"Whole Model", "full", {}},
        {"w/o Transformer", "no_transformer", {.no_transformer = true}},
        {"w/o Dual Embed", "single_embed", {.single_embed = true}},
        {"w/o Memory", "no_memory", {.no_memory = true}},
        {"w/o Dynamic Graph", "static_graph", {.static_graph = true}},
        {"w/o Real Graph", "no_real_graph", {.no_real_graph = true}},
    };
}

ModelConfig variant_config(const ModelConfig& base, const AblationFlags& flags) {
    ModelConfig cfg = base;
    cfg.ablation = flags;
    if (flags.no_memory) cfg.lambda1 = cfg.lambda2 = 0.0;
    return cfg;
}

double teacher_forcing_prob(const ModelConfig& cfg, std::size_t epoch) {
    const double span = cfg.teacher_forcing_decay * static_cast<double>(cfg.epochs);
    if (span <= 0.0) return 0.0;
    return std::max(0.0, 1.0 - static_cast<double>(epoch) / span);
}

EvalResult evaluate(const GenshinModel& model, const WindowedSplit& split, double null_value, std::size_t batch_size) {
    if (split.empty()) throw DataError("evaluate: split has no windows");
    NoGradGuard guard;
    double abs_total = 0.0;
    std::size_t count = 0;
    std::vector<Tensor> preds;
    std::vector<Tensor> truths;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < split.size(); start += batch_size) {
        idx.resize(std::min(batch_size, split.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        Batch b = split.batch(idx);
        auto r = model.forward(b.x);
        const auto yh = r.y_hat.data();
        const auto y = b.y.data();
        for (std::size_t i = 0; i < yh.size(); ++i) abs_total += std::abs(yh[i] - y[i]);
        count += yh.size();
        preds.push_back(model.scaler().inverse(r.y_hat));
        truths.push_back(b.y_raw);
    }
    EvalResult out;
    out.normalized_mae = abs_total / static_cast<double>(count);
    out.predictions = concat(preds, 0);
    out.metrics = compute_metrics(out.predictions, concat(truths, 0), null_value);
    return out;
}

void save_training_checkpoint(const fs::path& dir, const GenshinModel& model, const AdamW& opt,
                              const nlohmann::json& trainstate) {
    model.save(dir);
    opt.save(dir / "optim");
    std::ofstream(dir / "trainstate.json") << trainstate.dump(2) << '\n';
}

void write_loss_curve(const fs::path& path, const std::vector<EpochRecord>& history) {
    std::ofstream os(path);
    os << "epoch,train_loss,val_mae\n" << std::setprecision(17);
    for (const auto& e : history) os << e.epoch << ',' << e.train_loss << ',' << e.val_mae << '\n';
}

TrainReport fit(GenshinModel& model, const DatasetBundle& data, const FitOptions& options) {
    const ModelConfig& cfg = model.config();
    if (data.n_nodes() != model.n_nodes()) {
        throw ShapeError("fit: dataset has " + std::to_string(data.n_nodes()) + " nodes, model has " +
                         std::to_string(model.n_nodes()));
    }
    if (data.window != cfg.window || data.horizon != cfg.horizon) {
        throw ShapeError("fit: dataset windows do not match the configured window/horizon");
    }
    if (data.train.empty()) throw DataError("fit: training split has no windows");
    const WindowedSplit& val_split = data.val.empty() ? data.train : data.val;

    AdamW opt({cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps});
    Rng rng(cfg.seed ^ 0x5deece66dull);
    ParamStore& params = model.params();

    std::vector<std::vector<double>> best(params.size());
    auto snapshot = [&] {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto d = params.all()[i].value.data();
            best[i].assign(d.begin(), d.end());
        }
    };

    TrainReport report;
    std::size_t since_improve = 0;
    std::vector<std::size_t> order(data.train.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double tf = teacher_forcing_prob(cfg, epoch);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        double loss_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, len);
            Batch b = data.train.batch(idx);
            ForwardOptions fo;
            fo.train = true;
            fo.teacher = &b.y;
            fo.tf_prob = tf;
            fo.rng = &rng;
            params.zero_grad();
            LossBreakdown l;
            try {
                auto r = model.forward(b.x, fo);
                l = model.loss(r, b.y);
                l.total.backward();
            } catch (const NumericError& e) {
                throw NumericError("fit: epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(batches) +
                                   ": " + e.what());
            }
            if (!std::isfinite(gradient_norm(params))) {
                throw NumericError("fit: non-finite gradient at epoch " + std::to_string(epoch + 1) + " batch " +
                                   std::to_string(batches));
            }
            clip_gradients(params, cfg.clip_norm);
            opt.step(params);
            loss_total += l.total.item();
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = loss_total / static_cast<double>(batches);
        rec.val_mae = evaluate(model, val_split, cfg.null_value, cfg.batch_size).normalized_mae;
        rec.tf_prob = tf;
        report.history.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec);

        if (report.best_epoch == 0 || rec.val_mae < report.best_val) {
            report.best_val = rec.val_mae;
            report.best_epoch = rec.epoch;
            since_improve = 0;
            snapshot();
        } else if (++since_improve >= cfg.patience) {
            report.stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto d = params.all()[i].value.data_mut();
        std::copy(best[i].begin(), best[i].end(), d.begin());
        params.all()[i].value.zero_grad();
    }
    if (!data.test.empty()) report.test = evaluate(model, data.test, cfg.null_value, cfg.batch_size);

    if (options.checkpoint_dir) {
        nlohmann::json state = {{"epoch", report.history.size()},
                                {"best_epoch", report.best_epoch},
                                {"best_val_mae", report.best_val},
                                {"epochs_since_improvement", since_improve},
                                {"stopped_early", report.stopped_early},
                                {"optimizer_steps", opt.steps()},
                                {"rng_state", rng.state()}};
        save_training_checkpoint(*options.checkpoint_dir, model, opt, state);
        write_loss_curve(*options.checkpoint_dir / "loss_curve.csv", report.history);
    }
    return report;
}

}  // namespace genshin

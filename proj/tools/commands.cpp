#include "commands.hpp"

#include "genshin/data.hpp"
#include "genshin/grad_check.hpp"
#include "genshin/losses.hpp"
#include "genshin/model.hpp"
#include "genshin/model_check.hpp"
#include "genshin/serialize.hpp"
#include "genshin/training.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

namespace genshin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

json versions() {
    return {{"genshin", GENSHIN_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__},
            {"checkpoint_format", kCheckpointVersion}};
}

void write_manifest(const fs::path& out, const std::string& command, const std::vector<std::string>& argv,
                    const json& details) {
    fs::create_directories(out);
    json m = details;
    m["command"] = command;
    m["arguments"] = argv;
    m["versions"] = versions();
    m["threads"] = Eigen::nbThreads();
    m["created_utc"] = utc_now();
    std::ofstream(out / "manifest.json") << m.dump(2) << '\n';
}

ModelConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
    ModelConfig cfg = path.empty() ? ModelConfig::toy() : load_config(path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
}

void require_arg(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

DatasetBundle load_bundle(const std::string& dir, const ModelConfig& cfg, RawDataset* raw_out = nullptr) {
    RawDataset raw = load_dataset(dir);
    if (cfg.in_channels != raw.n_channels()) {
        throw DataError(dir + ": dataset has C=" + std::to_string(raw.n_channels()) + " channels, config has " +
                        std::to_string(cfg.in_channels));
    }
    if (cfg.n_nodes != 0 && cfg.n_nodes != raw.n_nodes()) {
        throw DataError(dir + ": dataset has N=" + std::to_string(raw.n_nodes()) + " nodes, config has " +
                        std::to_string(cfg.n_nodes));
    }
    DatasetBundle bundle =
        make_windows(raw, cfg.window, cfg.horizon, {cfg.train_ratio, cfg.val_ratio, cfg.test_ratio});
    if (raw_out) *raw_out = std::move(raw);
    return bundle;
}

void write_report(const fs::path& out, const MetricReport& report, const std::string& title) {
    std::ofstream csv(out / "metrics.csv");
    report.write_csv(csv);
    std::ostringstream table;
    table << title << '\n';
    report.write_table(table);
    std::ofstream(out / "metrics.txt") << table.str();
    std::cout << table.str();
}

void write_memory_csv(const fs::path& path, const Tensor& scores, std::size_t first_n) {
    // Scores are B×N×K; the first batch element is exported node by prototype.
    const std::size_t nodes = scores.shape()[1];
    const std::size_t protos = scores.shape()[2];
    const std::size_t rows = first_n ? std::min(first_n, nodes) : nodes;
    std::ofstream os(path);
    os << "node";
    for (std::size_t k = 0; k < protos; ++k) os << ",p" << k;
    os << '\n' << std::setprecision(10);
    for (std::size_t n = 0; n < rows; ++n) {
        os << n;
        for (std::size_t k = 0; k < protos; ++k) os << ',' << scores.at({0, n, k});
        os << '\n';
    }
}

void write_dumps(const GenshinModel& model, const WindowedSplit& split, const fs::path& out, const DumpArgs& d) {
    if (!d.attention && !d.memory_attention && !d.dynamic_graph) return;
    if (split.empty()) throw DataError("dump: evaluation split has no windows");
    std::vector<std::size_t> idx(std::min(model.config().batch_size, split.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const Batch b = split.batch(idx);
    PredictOptions po;
    po.attention = d.attention;
    po.memory_scores = d.memory_attention;
    po.dynamic_graphs = d.dynamic_graph;
    const Prediction p = model.predict(b.x, po);
    const fs::path dir = out / "dumps";
    fs::create_directories(dir);
    if (d.attention) {
        for (std::size_t l = 0; l < p.attention.size(); ++l) {
            save_tensor(dir / ("attention_layer" + std::to_string(l) + ".bin"), p.attention[l]);
        }
        if (p.attention.empty()) std::cerr << "note: model has no Transformer layers; no attention written\n";
    }
    if (d.memory_attention) {
        if (p.memory_scores) {
            save_tensor(dir / "memory_attention.bin", *p.memory_scores);
            write_memory_csv(dir / "memory_attention.csv", *p.memory_scores, d.first_n);
        } else {
            std::cerr << "note: model has no memory bank; no memory attention written\n";
        }
    }
    if (d.dynamic_graph) {
        for (std::size_t t = 0; t < p.dynamic_graphs.size(); ++t) {
            const std::string stem = "dyn_graph_step" + std::to_string(t + 1);
            save_tensor(dir / (stem + ".bin"), p.dynamic_graphs[t]);
            save_csv(dir / (stem + ".csv"), p.dynamic_graphs[t]);
        }
    }
}

json metrics_json(const MetricReport& r) {
    auto triple = [](const MetricTriple& t) {
        return json{{"mae", t.mae}, {"rmse", t.rmse}, {"mape_pct", t.mape}, {"count", t.count}};
    };
    json j = {{"average", triple(r.overall)}};
    if (!r.per_horizon.empty()) j["final_step"] = triple(r.per_horizon.back());
    return j;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

PlantedEdge parse_edge(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() != 4) throw UsageError("--edge expects source:target:lag:weight, got '" + text + "'");
    try {
        return {std::stoul(parts[0]), std::stoul(parts[1]), std::stoul(parts[2]), std::stod(parts[3])};
    } catch (const std::exception&) {
        throw UsageError("--edge has a non-numeric field: '" + text + "'");
    }
}

}  // namespace

int configure_threads() {
    int threads = 1;
    if (const char* env = std::getenv("GENSHIN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw UsageError("GENSHIN_THREADS must be a positive integer");
        threads = static_cast<int>(v);
    }
    Eigen::setNbThreads(threads);
    return threads;
}

int run_synth(const SynthArgs& a) {
    require_arg(a.out, "--out");
    SynthSpec spec;
    spec.period = a.period;
    spec.base = a.base;
    spec.amplitude = a.amplitude;
    spec.noise = a.noise;
    spec.channels = a.channels;
    spec.interval_minutes = a.interval;
    for (const auto& e : a.edges) spec.edges.push_back(parse_edge(e));
    RawDataset raw = generate_synthetic(a.nodes, a.steps, spec, a.seed);
    if (a.timestamps) {
        for (std::size_t t = 0; t < a.steps; ++t) raw.timestamps.push_back(static_cast<std::int64_t>(t) * a.interval * 60);
    }
    save_dataset(raw, a.out);
    json edges = json::array();
    for (const auto& e : spec.edges) {
        edges.push_back({{"source", e.source}, {"target", e.target}, {"lag", e.lag}, {"weight", e.weight}});
    }
    write_manifest(a.out, "synth", a.argv,
                   {{"seed", a.seed},
                    {"synth", {{"nodes", a.nodes}, {"steps", a.steps}, {"period", a.period}, {"noise", a.noise},
                               {"amplitude", a.amplitude}, {"base", a.base}, {"edges", edges}}}});
    std::cout << "wrote " << raw.describe() << " to " << a.out << '\n';
    return kOk;
}

int run_convert(const std::string& series, const std::string& adjacency, int interval, const std::string& out,
                const std::vector<std::string>& argv) {
    require_arg(series, "--series");
    require_arg(out, "--out");
    std::optional<fs::path> adj;
    if (!adjacency.empty()) adj = adjacency;
    RawDataset raw = convert_csv(series, adj, interval);
    save_dataset(raw, out);
    write_manifest(out, "convert", argv, {{"series", series}, {"adjacency", adjacency}});
    std::cout << "wrote " << raw.describe() << " to " << out << '\n';
    return kOk;
}

int run_train(const CommonArgs& a, const DumpArgs& dumps) {
    require_arg(a.data, "--data");
    require_arg(a.out, "--out");
    ModelConfig cfg = resolve_config(a.config, a.seed);
    RawDataset raw;
    DatasetBundle data = load_bundle(a.data, cfg, &raw);
    GenshinModel model(cfg, data.adjacency, data.scaler);
    std::cout << "model: " << model.params().count() << " parameters, N=" << model.n_nodes() << '\n';

    FitOptions opts;
    opts.checkpoint_dir = fs::path(a.out);
    opts.on_epoch = [](const EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " train_loss " << std::setprecision(6) << e.train_loss << " val_mae "
                  << e.val_mae << " tf " << e.tf_prob << std::endl;
    };
    const TrainReport report = fit(model, data, opts);
    std::cout << "best epoch " << report.best_epoch << " val_mae " << report.best_val
              << (report.stopped_early ? " (early stop)" : "") << '\n';
    if (data.test.empty()) throw DataError("train: test split has no windows");
    write_report(a.out, report.test.metrics, "test metrics (original units)");
    write_dumps(model, data.test, a.out, dumps);
    write_manifest(a.out, "train", a.argv,
                   {{"seed", model.config().seed},
                    {"config", to_json(model.config())},
                    {"data", a.data},
                    {"best_epoch", report.best_epoch},
                    {"test", metrics_json(report.test.metrics)}});
    return kOk;
}

int run_eval(const CommonArgs& a, const std::string& checkpoint, const DumpArgs& dumps) {
    require_arg(checkpoint, "--checkpoint");
    require_arg(a.data, "--data");
    require_arg(a.out, "--out");
    GenshinModel model = GenshinModel::load(checkpoint);
    const ModelConfig& cfg = model.config();
    DatasetBundle data = load_bundle(a.data, cfg);
    if (data.test.empty()) throw DataError("eval: test split has no windows");
    fs::create_directories(a.out);
    const EvalResult r = evaluate(model, data.test, cfg.null_value, cfg.batch_size);
    write_report(a.out, r.metrics, "test metrics (original units)");
    write_dumps(model, data.test, a.out, dumps);
    write_manifest(a.out, "eval", a.argv,
                   {{"seed", cfg.seed},
                    {"config", to_json(cfg)},
                    {"checkpoint", checkpoint},
                    {"data", a.data},
                    {"test", metrics_json(r.metrics)}});
    return kOk;
}

int run_ablate(const CommonArgs& a) {
    require_arg(a.data, "--data");
    require_arg(a.out, "--out");
    const ModelConfig base = resolve_config(a.config, a.seed);
    DatasetBundle data = load_bundle(a.data, base);
    fs::create_directories(a.out);

    struct Row {
        std::string name;
        std::optional<MetricReport> metrics;
        std::string error;
    };
    std::vector<Row> rows;
    for (const auto& v : ablation_variants()) {
        std::cout << "== " << v.name << '\n';
        Row row{v.name, std::nullopt, ""};
        try {
            GenshinModel model(variant_config(base, v.flags), data.adjacency, data.scaler);
            FitOptions opts;
            opts.checkpoint_dir = fs::path(a.out) / v.slug;
            const TrainReport report = fit(model, data, opts);
            row.metrics = report.test.metrics;
            std::ofstream csv(*opts.checkpoint_dir / "metrics.csv");
            report.test.metrics.write_csv(csv);
        } catch (const std::exception& e) {
            row.error = e.what();
            std::cerr << v.name << " failed: " << e.what() << '\n';
        }
        rows.push_back(std::move(row));
    }

    std::ofstream csv(fs::path(a.out) / "ablation.csv");
    csv << "variant,mae,rmse,mape_pct,final_mae,final_rmse,final_mape_pct,status\n" << std::setprecision(10);
    std::ostringstream table;
    table << std::left << std::setw(20) << "Model" << std::right << std::setw(10) << "MAE" << std::setw(10) << "RMSE"
          << std::setw(10) << "MAPE(%)" << '\n'
          << std::fixed << std::setprecision(4);
    bool all_ok = true;
    for (const auto& r : rows) {
        if (!r.metrics) {
            all_ok = false;
            csv << '"' << r.name << "\",,,,,,,failed\n";
            table << std::left << std::setw(20) << r.name << std::right << "  failed: " << r.error << '\n';
            continue;
        }
        const auto& o = r.metrics->overall;
        const auto& last = r.metrics->per_horizon.back();
        csv << '"' << r.name << "\"," << o.mae << ',' << o.rmse << ',' << o.mape << ',' << last.mae << ','
            << last.rmse << ',' << last.mape << ",ok\n";
        table << std::left << std::setw(20) << r.name << std::right << std::setw(10) << o.mae << std::setw(10)
              << o.rmse << std::setw(10) << o.mape << '\n';
    }
    std::ofstream(fs::path(a.out) / "ablation.txt") << table.str();
    std::cout << table.str();
    write_manifest(a.out, "ablate", a.argv, {{"seed", base.seed}, {"config", to_json(base)}, {"data", a.data}});
    return all_ok ? kOk : kNumericFailure;
}

int run_gradcheck(const GradcheckArgs& a) {
    ModelConfig cfg = resolve_config(a.config, a.seed);
    const auto primitives = run_primitive_checks(primitive_cases(cfg.seed + 1), a.eps, a.tol);
    std::size_t primitive_failures = 0;
    double primitive_worst = 0.0;
    for (const auto& r : primitives) {
        primitive_worst = std::max(primitive_worst, r.report.max_rel_error());
        if (!r.report.passed()) {
            ++primitive_failures;
            std::cout << "FAIL primitive " << r.name << " max rel error " << r.report.max_rel_error() << '\n';
        }
    }
    std::cout << "primitives: " << primitives.size() << " probes, max rel error " << std::setprecision(3)
              << primitive_worst << ", " << primitive_failures << " failing\n";

    GradCheckFixture fx = make_grad_check_fixture(cfg);
    GenshinModel model(cfg, fx.raw.adjacency, fx.data.scaler);
    const auto start = std::chrono::steady_clock::now();
    const ModelGradCheckReport report = model_grad_check(model, fx.batch, a.eps, a.tol, a.first_n);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    struct Group {
        std::size_t checked = 0, failures = 0;
        double max_rel = 0.0, max_abs = 0.0;
    };
    std::map<std::string, Group> groups;
    std::vector<std::string> order;
    for (const auto& p : report.params) {
        const std::string g = parameter_group(p.name);
        if (!groups.count(g)) order.push_back(g);
        auto& s = groups[g];
        s.checked += p.checked;
        s.failures += p.failures;
        s.max_rel = std::max(s.max_rel, p.max_rel_error);
        s.max_abs = std::max(s.max_abs, p.max_abs_diff);
    }
    std::cout << "loss " << std::setprecision(10) << report.loss << ", eps " << a.eps << ", tol " << a.tol << '\n'
              << std::left << std::setw(14) << "group" << std::right << std::setw(9) << "checked" << std::setw(14)
              << "max_rel_err" << std::setw(14) << "max_abs_diff" << std::setw(9) << "failing" << '\n';
    for (const auto& g : order) {
        const auto& s = groups[g];
        std::cout << std::left << std::setw(14) << g << std::right << std::setw(9) << s.checked << std::setw(14)
                  << std::setprecision(3) << std::scientific << s.max_rel << std::setw(14) << s.max_abs
                  << std::defaultfloat << std::setw(9) << s.failures << '\n';
    }
    for (const auto& p : report.params) {
        if (p.failures) {
            std::cout << "FAIL " << p.name << ": " << p.failures << "/" << p.checked << " elements, max rel error "
                      << p.max_rel_error << ", largest failing |grad| " << p.max_failing_grad << '\n';
        }
    }
    std::cout << report.checked() << " elements in " << std::fixed << std::setprecision(1) << seconds << " s\n"
              << std::defaultfloat;

    if (!a.out.empty()) {
        json params = json::array();
        for (const auto& p : report.params) {
            params.push_back({{"name", p.name},
                              {"checked", p.checked},
                              {"failures", p.failures},
                              {"max_rel_error", p.max_rel_error},
                              {"max_abs_diff", p.max_abs_diff},
                              {"max_failing_grad", p.max_failing_grad}});
        }
        write_manifest(a.out, "gradcheck", a.argv,
                       {{"seed", cfg.seed}, {"config", to_json(cfg)}, {"tol", a.tol}, {"eps", a.eps},
                        {"params", params}, {"primitive_failures", primitive_failures}});
    }
    const bool ok = primitive_failures == 0 && report.passed();
    std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << '\n';
    return ok ? kOk : kNumericFailure;
}

int run_dump_graphs(const std::string& checkpoint, const std::string& out, const std::vector<std::string>& argv) {
    require_arg(checkpoint, "--checkpoint");
    require_arg(out, "--out");
    const GenshinModel model = GenshinModel::load(checkpoint);
    GraphSet g;
    {
        NoGradGuard guard;
        g = model.build_graphs();
    }
    fs::create_directories(out);
    const std::vector<std::pair<std::string, const Tensor*>> items = {
        {"a_real", &g.a_real}, {"tilde1", &g.learned.tilde1}, {"tilde2", &g.learned.tilde2},
        {"a1", &g.a1},         {"a2", &g.a2},                 {"score1", &g.learned.score1},
    };
    for (const auto& [name, t] : items) {
        save_tensor(fs::path(out) / (name + ".bin"), *t);
        save_csv(fs::path(out) / (name + ".csv"), *t);
    }
    write_manifest(out, "dump-graphs", argv,
                   {{"checkpoint", checkpoint}, {"alpha", g.alpha.item()}, {"config", to_json(model.config())}});
    std::cout << "alpha " << g.alpha.item() << "; wrote " << items.size() << " graphs to " << out << '\n';
    return kOk;
}

int run_baseline_ha(const CommonArgs& a, std::size_t period) {
    require_arg(a.data, "--data");
    require_arg(a.out, "--out");
    const ModelConfig cfg = resolve_config(a.config, a.seed);
    RawDataset raw;
    DatasetBundle data = load_bundle(a.data, cfg, &raw);
    if (data.test.empty()) throw DataError("baseline-ha: test split has no windows");
    if (period == 0) period = default_ha_period(data.has_timestamps, data.interval_minutes);
    const Tensor train_raw = slice(raw.values, 0, 0, data.train_end);
    const Batch test = data.test.all();
    const Tensor pred = historical_average(train_raw, test.target_start, cfg.horizon, period);
    const MetricReport report = compute_metrics(pred, test.y_raw, cfg.null_value);
    fs::create_directories(a.out);
    write_report(a.out, report, "historical average, period " + std::to_string(period) + " steps");
    write_manifest(a.out, "baseline-ha", a.argv,
                   {{"period", period}, {"data", a.data}, {"config", to_json(cfg)}, {"test", metrics_json(report)}});
    return kOk;
}

}  // namespace genshin::cli

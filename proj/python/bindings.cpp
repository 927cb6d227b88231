#include "genshin/config.hpp"
#include "genshin/data.hpp"
#include "genshin/losses.hpp"
#include "genshin/model.hpp"
#include "genshin/model_check.hpp"
#include "genshin/serialize.hpp"
#include "genshin/training.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace genshin;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict triple_dict(const MetricTriple& m) {
    py::dict d;
    d["mae"] = m.mae;
    d["rmse"] = m.rmse;
    d["mape"] = m.mape;
    d["count"] = m.count;
    return d;
}

py::dict report_dict(const MetricReport& r) {
    py::dict d;
    d["overall"] = triple_dict(r.overall);
    py::list steps;
    for (const auto& h : r.per_horizon) steps.append(triple_dict(h));
    d["per_horizon"] = steps;
    return d;
}

py::dict batch_dict(const Batch& b) {
    py::dict d;
    d["x"] = to_array(b.x);
    d["y"] = to_array(b.y);
    d["y_raw"] = to_array(b.y_raw);
    d["target_start"] = b.target_start;
    return d;
}

py::dict eval_dict(const EvalResult& e) {
    py::dict d;
    d["normalized_mae"] = e.normalized_mae;
    d["metrics"] = report_dict(e.metrics);
    d["predictions"] = to_array(e.predictions);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Spatio-temporal forecasting with learned dual graphs and a pattern memory";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<AblationFlags>(m, "AblationFlags")
        .def(py::init<>())
        .def_readwrite("no_transformer", &AblationFlags::no_transformer)
        .def_readwrite("single_embed", &AblationFlags::single_embed)
        .def_readwrite("no_memory", &AblationFlags::no_memory)
        .def_readwrite("static_graph", &AblationFlags::static_graph)
        .def_readwrite("no_real_graph", &AblationFlags::no_real_graph)
        .def(py::self == py::self);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_static("toy", &ModelConfig::toy)
        .def_static("reference", &ModelConfig::reference)
        .def_static("parse", [](const std::string& text) { return parse_config(text); })
        .def_static("load", &load_config)
        .def("validate", &ModelConfig::validate)
        .def("format", [](const ModelConfig& c) { return format_config(c); })
        .def("__repr__", [](const ModelConfig& c) { return "ModelConfig(\n" + format_config(c) + ")"; })
        .def_readwrite("n_nodes", &ModelConfig::n_nodes)
        .def_readwrite("in_channels", &ModelConfig::in_channels)
        .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
        .def_readwrite("gcru_layers", &ModelConfig::gcru_layers)
        .def_readwrite("cheb_order", &ModelConfig::cheb_order)
        .def_readwrite("n_prototypes", &ModelConfig::n_prototypes)
        .def_readwrite("proto_dim", &ModelConfig::proto_dim)
        .def_readwrite("transformer_layers", &ModelConfig::transformer_layers)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("ffn_dim", &ModelConfig::ffn_dim)
        .def_readwrite("dropout", &ModelConfig::dropout)
        .def_readwrite("window", &ModelConfig::window)
        .def_readwrite("horizon", &ModelConfig::horizon)
        .def_readwrite("updater_hidden", &ModelConfig::updater_hidden)
        .def_readwrite("updater_dim", &ModelConfig::updater_dim)
        .def_readwrite("updater_eta", &ModelConfig::updater_eta)
        .def_readwrite("lambda1", &ModelConfig::lambda1)
        .def_readwrite("lambda2", &ModelConfig::lambda2)
        .def_readwrite("gamma", &ModelConfig::gamma)
        .def_readwrite("lr", &ModelConfig::lr)
        .def_readwrite("weight_decay", &ModelConfig::weight_decay)
        .def_readwrite("batch_size", &ModelConfig::batch_size)
        .def_readwrite("epochs", &ModelConfig::epochs)
        .def_readwrite("patience", &ModelConfig::patience)
        .def_readwrite("clip_norm", &ModelConfig::clip_norm)
        .def_readwrite("teacher_forcing_decay", &ModelConfig::teacher_forcing_decay)
        .def_readwrite("null_value", &ModelConfig::null_value)
        .def_readwrite("ablation", &ModelConfig::ablation)
        .def_readwrite("seed", &ModelConfig::seed);

    py::class_<PlantedEdge>(m, "PlantedEdge")
        .def(py::init([](std::size_t source, std::size_t target, std::size_t lag, double weight) {
                 return PlantedEdge{source, target, lag, weight};
             }),
             py::arg("source"), py::arg("target"), py::arg("lag") = 1, py::arg("weight") = 0.5)
        .def_readwrite("source", &PlantedEdge::source)
        .def_readwrite("target", &PlantedEdge::target)
        .def_readwrite("lag", &PlantedEdge::lag)
        .def_readwrite("weight", &PlantedEdge::weight);

    py::class_<RawDataset>(m, "RawDataset")
        .def(py::init([](const Array& values, const Array& adjacency, int interval_minutes) {
                 RawDataset r{to_tensor(values), to_tensor(adjacency), interval_minutes, {}};
                 r.validate();
                 return r;
             }),
             py::arg("values"), py::arg("adjacency"), py::arg("interval_minutes") = 5)
        .def_property_readonly("values", [](const RawDataset& r) { return to_array(r.values); })
        .def_property_readonly("adjacency", [](const RawDataset& r) { return to_array(r.adjacency); })
        .def_readwrite("interval_minutes", &RawDataset::interval_minutes)
        .def_readwrite("timestamps", &RawDataset::timestamps)
        .def_property_readonly("n_steps", &RawDataset::n_steps)
        .def_property_readonly("n_nodes", &RawDataset::n_nodes)
        .def_property_readonly("n_channels", &RawDataset::n_channels)
        .def("__repr__", &RawDataset::describe);

    m.def("load_dataset", &load_dataset, py::arg("dir"));
    m.def("save_dataset", &save_dataset, py::arg("data"), py::arg("dir"));
    m.def(
        "generate_synthetic",
        [](std::size_t n_nodes, std::size_t steps, std::size_t period, double base, double amplitude, double noise,
           std::size_t channels, const std::vector<PlantedEdge>& edges, std::uint64_t seed) {
            SynthSpec spec;
            spec.period = period;
            spec.base = base;
            spec.amplitude = amplitude;
            spec.noise = noise;
            spec.channels = channels;
            spec.edges = edges;
            return generate_synthetic(n_nodes, steps, spec, seed);
        },
        py::arg("n_nodes"), py::arg("steps"), py::arg("period") = 288, py::arg("base") = 0.0,
        py::arg("amplitude") = 1.0, py::arg("noise") = 0.0, py::arg("channels") = 1,
        py::arg("edges") = std::vector<PlantedEdge>{}, py::arg("seed") = 0);

    py::class_<WindowedSplit>(m, "WindowedSplit")
        .def("__len__", &WindowedSplit::size)
        .def_property_readonly("offset", &WindowedSplit::offset)
        .def("batch", [](const WindowedSplit& s, const std::vector<std::size_t>& idx) { return batch_dict(s.batch(idx)); })
        .def("all", [](const WindowedSplit& s) { return batch_dict(s.all()); });

    py::class_<DatasetBundle>(m, "DatasetBundle")
        .def_readonly("train", &DatasetBundle::train)
        .def_readonly("val", &DatasetBundle::val)
        .def_readonly("test", &DatasetBundle::test)
        .def_readonly("window", &DatasetBundle::window)
        .def_readonly("horizon", &DatasetBundle::horizon)
        .def_readonly("train_end", &DatasetBundle::train_end)
        .def_readonly("val_end", &DatasetBundle::val_end)
        .def_property_readonly("scaler_mean", [](const DatasetBundle& d) { return d.scaler.mean; })
        .def_property_readonly("scaler_std", [](const DatasetBundle& d) { return d.scaler.stddev; });

    m.def(
        "make_windows",
        [](const RawDataset& raw, std::size_t window, std::size_t horizon, double train, double val, double test) {
            return make_windows(raw, window, horizon, SplitRatios{train, val, test});
        },
        py::arg("raw"), py::arg("window"), py::arg("horizon"), py::arg("train") = 0.7, py::arg("val") = 0.1,
        py::arg("test") = 0.2);

    py::class_<GenshinModel>(m, "Model")
        .def(py::init([](const ModelConfig& cfg, const DatasetBundle& data) {
                 return GenshinModel(cfg, data.adjacency, data.scaler);
             }),
             py::arg("config"), py::arg("data"))
        .def_property_readonly("config", &GenshinModel::config)
        .def_property_readonly("n_nodes", &GenshinModel::n_nodes)
        .def_property_readonly("n_params", [](const GenshinModel& g) { return g.params().count(); })
        .def_property_readonly("a_real", [](const GenshinModel& g) { return to_array(g.a_real()); })
        .def("param_names",
             [](const GenshinModel& g) {
                 std::vector<std::string> names;
                 for (const auto& p : g.params().all()) names.push_back(p.name);
                 return names;
             })
        .def("param", [](const GenshinModel& g, const std::string& name) { return to_array(g.params().get(name)); })
        .def(
            "predict",
            [](const GenshinModel& g, const Array& x, bool normalized_input, bool diagnostics) {
                PredictOptions o;
                o.normalized_input = normalized_input;
                o.memory_scores = o.dynamic_graphs = o.attention = diagnostics;
                const Prediction p = g.predict(to_tensor(x), o);
                py::dict d;
                d["y"] = to_array(p.y);
                if (diagnostics) {
                    if (p.memory_scores) d["memory_scores"] = to_array(*p.memory_scores);
                    py::list dyn, attn;
                    for (const auto& t : p.dynamic_graphs) dyn.append(to_array(t));
                    for (const auto& t : p.attention) attn.append(to_array(t));
                    d["dynamic_graphs"] = dyn;
                    d["attention"] = attn;
                }
                return d;
            },
            py::arg("x"), py::arg("normalized_input") = true, py::arg("diagnostics") = false)
        .def("graphs",
             [](const GenshinModel& g) {
                 NoGradGuard guard;
                 const GraphSet s = g.build_graphs();
                 py::dict d;
                 d["a_real"] = to_array(s.a_real);
                 d["score1"] = to_array(s.learned.score1);
                 d["score2"] = to_array(s.learned.score2);
                 d["tilde1"] = to_array(s.learned.tilde1);
                 d["tilde2"] = to_array(s.learned.tilde2);
                 d["alpha"] = s.alpha.item();
                 d["a1"] = to_array(s.a1);
                 d["a2"] = to_array(s.a2);
                 return d;
             })
        .def("save", &GenshinModel::save, py::arg("dir"))
        .def_static(
            "load",
            [](const std::filesystem::path& dir, std::optional<AblationFlags> expected) {
                return GenshinModel::load(dir, expected);
            },
            py::arg("dir"), py::arg("expected_flags") = py::none());

    m.def(
        "fit",
        [](GenshinModel& model, const DatasetBundle& data, std::optional<std::filesystem::path> checkpoint_dir,
           std::function<void(std::size_t, double, double)> on_epoch) {
            FitOptions o;
            o.checkpoint_dir = checkpoint_dir;
            if (on_epoch) {
                o.on_epoch = [&](const EpochRecord& e) {
                    on_epoch(e.epoch, e.train_loss, e.val_mae);
                };
            }
            const TrainReport r = fit(model, data, o);
            py::dict d;
            py::list history;
            for (const auto& e : r.history) {
                py::dict row;
                row["epoch"] = e.epoch;
                row["train_loss"] = e.train_loss;
                row["val_mae"] = e.val_mae;
                row["tf_prob"] = e.tf_prob;
                history.append(row);
            }
            d["history"] = history;
            d["best_epoch"] = r.best_epoch;
            d["best_val"] = r.best_val;
            d["stopped_early"] = r.stopped_early;
            d["test"] = eval_dict(r.test);
            return d;
        },
        py::arg("model"), py::arg("data"), py::arg("checkpoint_dir") = py::none(), py::arg("on_epoch") = nullptr);

    m.def(
        "evaluate",
        [](const GenshinModel& model, const WindowedSplit& split, double null_value) {
            return eval_dict(evaluate(model, split, null_value, model.config().batch_size));
        },
        py::arg("model"), py::arg("split"), py::arg("null_value") = 0.0);

    m.def(
        "compute_metrics",
        [](const Array& y_hat, const Array& y, double null_value) {
            return report_dict(compute_metrics(to_tensor(y_hat), to_tensor(y), null_value));
        },
        py::arg("y_hat"), py::arg("y"), py::arg("null_value") = 0.0);

    m.def(
        "historical_average",
        [](const Array& train_raw, const std::vector<std::size_t>& target_start, std::size_t horizon,
           std::size_t period) {
            return to_array(historical_average(to_tensor(train_raw), target_start, horizon, period));
        },
        py::arg("train_raw"), py::arg("target_start"), py::arg("horizon"), py::arg("period"));

    m.def(
        "grad_check",
        [](const ModelConfig& cfg, double eps, double tol, std::size_t first_n) {
            GradCheckFixture fx = make_grad_check_fixture(cfg);
            GenshinModel model(cfg, fx.raw.adjacency, fx.data.scaler);
            const auto r = model_grad_check(model, fx.batch, eps, tol, first_n);
            py::dict d;
            d["loss"] = r.loss;
            d["checked"] = r.checked();
            d["failures"] = r.failures();
            d["max_rel_error"] = r.max_rel_error();
            d["max_abs_diff"] = r.max_abs_diff();
            py::dict per;
            for (const auto& p : r.params) per[py::str(p.name)] = py::make_tuple(p.checked, p.max_rel_error, p.max_abs_diff);
            d["params"] = per;
            return d;
        },
        py::arg("config"), py::arg("eps") = 1e-5, py::arg("tol") = 1e-4, py::arg("first_n") = 0);
}

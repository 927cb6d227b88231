#include "commands.hpp"

#include "genshin/data.hpp"
#include "genshin/model.hpp"
#include "genshin/serialize.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace genshin;
using namespace genshin::cli;

namespace {

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_config = true) {
    if (needs_config) cmd->add_option("--config", a.config, "Config file (key = value); default: toy preset");
    cmd->add_option("--data", a.data, "Dataset directory");
    cmd->add_option("--out", a.out, "Output directory");
    cmd->add_option("--seed", a.seed, "Override the config seed");
}

void add_dumps(CLI::App* cmd, DumpArgs& d) {
    cmd->add_flag("--dump-attn", d.attention, "Write Transformer attention of the first test batch");
    cmd->add_flag("--dump-attn-mem", d.memory_attention, "Write memory attention scores of the first test batch");
    cmd->add_flag("--dump-dyn-graph", d.dynamic_graph, "Write the decoder graph of every step");
    cmd->add_option("--first-n", d.first_n, "Rows in the memory attention CSV (0: all nodes)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatio-temporal forecasting with learned dual graphs and a pattern memory"};
    app.require_subcommand(1);
    const std::vector<std::string> args(argv, argv + argc);

    CommonArgs common;
    common.argv = args;
    DumpArgs dumps;
    std::string checkpoint;

    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint with test metrics");
    add_common(train, common);
    add_dumps(train, dumps);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
    add_common(eval, common, false);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint directory written by train");
    add_dumps(eval, dumps);

    auto* ablate = app.add_subcommand("ablate", "Train the full model and the five ablation variants");
    add_common(ablate, common);

    GradcheckArgs grad;
    grad.argv = args;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and parameter");
    gradcheck->add_option("--config", grad.config, "Config file; default: toy preset");
    gradcheck->add_option("--seed", grad.seed, "Override the config seed");
    gradcheck->add_option("--tol", grad.tol, "Relative error tolerance")->capture_default_str();
    gradcheck->add_option("--eps", grad.eps, "Central difference step")->capture_default_str();
    gradcheck->add_option("--first-n", grad.first_n, "Elements checked per parameter (0: all)");
    gradcheck->add_option("--out", grad.out, "Write a manifest with per-parameter results");

    SynthArgs synth_args;
    synth_args.argv = args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic sinusoidal dataset");
    synth->add_option("--out", synth_args.out, "Dataset directory to write");
    synth->add_option("--nodes", synth_args.nodes)->capture_default_str();
    synth->add_option("--steps", synth_args.steps)->capture_default_str();
    synth->add_option("--period", synth_args.period)->capture_default_str();
    synth->add_option("--channels", synth_args.channels)->capture_default_str();
    synth->add_option("--base", synth_args.base)->capture_default_str();
    synth->add_option("--amplitude", synth_args.amplitude)->capture_default_str();
    synth->add_option("--noise", synth_args.noise, "Gaussian noise standard deviation")->capture_default_str();
    synth->add_option("--interval", synth_args.interval, "Minutes per step")->capture_default_str();
    synth->add_flag("--timestamps", synth_args.timestamps, "Write timestamps.txt");
    synth->add_option("--edge", synth_args.edges, "Planted dependency source:target:lag:weight (repeatable)");
    synth->add_option("--seed", synth_args.seed)->capture_default_str();

    auto* dump_graphs = app.add_subcommand("dump-graphs", "Write the real, learned and fused graphs of a checkpoint");
    dump_graphs->add_option("--checkpoint", checkpoint, "Checkpoint directory");
    dump_graphs->add_option("--out", common.out, "Output directory");

    std::size_t period = 0;
    auto* baseline = app.add_subcommand("baseline-ha", "Historical-average baseline on the test split");
    add_common(baseline, common);
    baseline->add_option("--period", period, "Steps per period (0: a week with timestamps, else a day)");

    std::string series, adjacency;
    int interval = 5;
    auto* convert = app.add_subcommand("convert", "Convert CSV series (and adjacency) to a dataset directory");
    convert->add_option("--series", series, "CSV with a timestamp column then one column per node");
    convert->add_option("--adjacency", adjacency, "N×N adjacency CSV (default: identity)");
    convert->add_option("--interval", interval, "Minutes per step")->capture_default_str();
    convert->add_option("--out", common.out, "Dataset directory to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        configure_threads();
        if (train->parsed()) return run_train(common, dumps);
        if (eval->parsed()) return run_eval(common, checkpoint, dumps);
        if (ablate->parsed()) return run_ablate(common);
        if (gradcheck->parsed()) return run_gradcheck(grad);
        if (synth->parsed()) return run_synth(synth_args);
        if (dump_graphs->parsed()) return run_dump_graphs(checkpoint, common.out, args);
        if (baseline->parsed()) return run_baseline_ha(common, period);
        if (convert->parsed()) return run_convert(series, adjacency, interval, common.out, args);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumericFailure;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kDataError;
    } catch (const ShapeError& e) {
        std::cerr << "shape mismatch: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

#pragma once

#include "genshin/config.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace genshin::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string config;  // empty: toy preset
    std::string data;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> argv;
};

struct DumpArgs {
    bool attention = false;
    bool memory_attention = false;
    bool dynamic_graph = false;
    std::size_t first_n = 0;  // 0: all nodes
};

struct SynthArgs {
    std::string out;
    std::size_t nodes = 8;
    std::size_t steps = 1000;
    std::size_t period = 288;
    std::size_t channels = 1;
    double base = 0.0;
    double amplitude = 1.0;
    double noise = 0.0;
    int interval = 5;
    bool timestamps = false;
    std::vector<std::string> edges;  // "source:target:lag:weight"
    std::uint64_t seed = 0;
    std::vector<std::string> argv;
};

struct GradcheckArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    double tol = 1e-4;
    double eps = 1e-5;
    std::size_t first_n = 0;  // elements per parameter, 0: all
    std::string out;
    std::vector<std::string> argv;
};

int run_train(const CommonArgs& args, const DumpArgs& dumps);
int run_eval(const CommonArgs& args, const std::string& checkpoint, const DumpArgs& dumps);
int run_ablate(const CommonArgs& args);
int run_gradcheck(const GradcheckArgs& args);
int run_synth(const SynthArgs& args);
int run_dump_graphs(const std::string& checkpoint, const std::string& out, const std::vector<std::string>& argv);
int run_baseline_ha(const CommonArgs& args, std::size_t period);
int run_convert(const std::string& series, const std::string& adjacency, int interval, const std::string& out,
                const std::vector<std::string>& argv);

/// Reads GENSHIN_THREADS (default 1) and applies it to the dense kernels.
int configure_threads();

}  // namespace genshin::cli

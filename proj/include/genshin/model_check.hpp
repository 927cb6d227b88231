#pragma once

#include "genshin/data.hpp"
#include "genshin/model.hpp"

#include <string>
#include <vector>

namespace genshin {

struct ParamGradCheck {
    std::string name;
    std::size_t checked = 0;
    std::size_t failures = 0;  // elements at or above tolerance
    double max_rel_error = 0.0;
    double max_abs_diff = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    /// Largest |g_ad| among failing elements, 0 when none fail.
    double max_failing_grad = 0.0;
};

struct ModelGradCheckReport {
    std::vector<ParamGradCheck> params;
    double tolerance = 0.0;
    double eps = 0.0;
    double loss = 0.0;

    double max_rel_error() const;
    double max_abs_diff() const;
    std::size_t checked() const;
    std::size_t failures() const;
    bool passed() const { return failures() == 0; }
};

struct GradCheckFixture {
    RawDataset raw;
    DatasetBundle data;
    Batch batch;
};

/// Fixed noisy synthetic series with two planted edges and a two-window
/// batch from its training split, sized for `cfg` (n_nodes 0 means 8).
GradCheckFixture make_grad_check_fixture(const ModelConfig& cfg);

/// "enc.gcru0.wz" -> "enc.gcru0", "graph.we1" -> "graph".
std::string parameter_group(const std::string& name);

/// Central differences of the total training loss (evaluation mode, no
/// teacher forcing) against reverse mode, for every element of every
/// parameter, or the first `first_n` elements of each when nonzero.
/// Relative error uses the same 1e-8 floor as grad_check.
ModelGradCheckReport model_grad_check(GenshinModel& model, const Batch& batch, double eps = 1e-5, double tol = 1e-4,
                                      std::size_t first_n = 0);

}  // namespace genshin

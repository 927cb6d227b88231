#pragma once

#include "genshin/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace genshin {

struct InputGradReport {
    std::string name;
    std::size_t numel = 0;
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckReport {
    std::vector<InputGradReport> inputs;
    double tolerance = 0.0;

    double max_rel_error() const;
    bool passed() const { return max_rel_error() < tolerance; }
};

using TensorFunction = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(x+eps) - f(x-eps)) / (2 eps), element by element.
///
/// Relative error is |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8). `inputs` must be
/// leaves; their values are perturbed in place and restored. Throws
/// NumericError when two plain evaluations of `f` disagree.
GradCheckReport grad_check(const TensorFunction& f, std::vector<Tensor> inputs, double eps, double tol,
                           std::vector<std::string> names = {});

}  // namespace genshin

namespace genshin {

/// A named scalar-valued probe of one primitive on fixed random inputs.
struct PrimitiveCase {
    std::string name;
    std::vector<Tensor> inputs;
    TensorFunction f;
};

struct PrimitiveCheckResult {
    std::string name;
    GradCheckReport report;
};

/// Probes for every differentiable primitive, each over three input shapes.
/// Each probe reduces the primitive's output against a fixed random weight
/// tensor so that the gradient is non-trivial.
std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed = 1);

std::vector<PrimitiveCheckResult> run_primitive_checks(const std::vector<PrimitiveCase>& cases, double eps,
                                                       double tol);

}  // namespace genshin

#include "genshin/model_check.hpp"

#include <algorithm>
#include <cmath>

namespace genshin {

double ModelGradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& p : params) m = std::max(m, p.max_rel_error);
    return m;
}

double ModelGradCheckReport::max_abs_diff() const {
    double m = 0.0;
    for (const auto& p : params) m = std::max(m, p.max_abs_diff);
    return m;
}

std::size_t ModelGradCheckReport::checked() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.checked;
    return n;
}

std::size_t ModelGradCheckReport::failures() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.failures;
    return n;
}

GradCheckFixture make_grad_check_fixture(const ModelConfig& cfg) {
    const std::size_t nodes = cfg.n_nodes ? cfg.n_nodes : 8;
    SynthSpec spec;
    spec.period = 24;
    spec.noise = 0.3;
    spec.channels = cfg.in_channels;
    spec.edges = {{0, 3 % nodes, 1, 0.6}, {2 % nodes, 5 % nodes, 2, 0.4}};
    GradCheckFixture f;
    f.raw = generate_synthetic(nodes, 200, spec, cfg.seed);
    f.data = make_windows(f.raw, cfg.window, cfg.horizon);
    const std::vector<std::size_t> idx = {3 % f.data.train.size(), 40 % f.data.train.size()};
    f.batch = f.data.train.batch(idx);
    return f;
}

std::string parameter_group(const std::string& name) {
    const auto first = name.find('.');
    if (first == std::string::npos) return name;
    const auto second = name.find('.', first + 1);
    const std::string head = name.substr(0, first);
    if (second == std::string::npos || (head != "enc" && head != "dec")) return head;
    return name.substr(0, second);
}

ModelGradCheckReport model_grad_check(GenshinModel& model, const Batch& batch, double eps, double tol,
                                      std::size_t first_n) {
    auto evaluate = [&] {
        NoGradGuard guard;
        return model.loss(model.forward(batch.x), batch.y).total.item();
    };
    ModelGradCheckReport report;
    report.tolerance = tol;
    report.eps = eps;

    model.params().zero_grad();
    {
        auto result = model.forward(batch.x);
        Tensor total = model.loss(result, batch.y).total;
        report.loss = total.item();
        total.backward();
    }
    if (evaluate() != report.loss) throw NumericError("model_grad_check: loss is not deterministic");

    for (auto& p : model.params().all()) {
        ParamGradCheck r;
        r.name = p.name;
        auto values = p.value.data_mut();
        const auto grad = p.value.grad();
        const std::size_t n = first_n ? std::min(first_n, values.size()) : values.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = evaluate();
            values[i] = saved - eps;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double diff = std::abs(grad[i] - numeric);
            const double rel = diff / std::max({std::abs(grad[i]), std::abs(numeric), 1e-8});
            r.max_abs_diff = std::max(r.max_abs_diff, diff);
            if (rel >= r.max_rel_error) {
                r.max_rel_error = rel;
                r.worst_analytic = grad[i];
                r.worst_numeric = numeric;
            }
            if (rel >= tol) {
                ++r.failures;
                r.max_failing_grad = std::max(r.max_failing_grad, std::abs(grad[i]));
            }
        }
        r.checked = n;
        report.params.push_back(r);
    }
    model.params().zero_grad();
    return report;
}

}  // namespace genshin

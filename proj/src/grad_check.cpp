#include "genshin/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <cstring>

#include "genshin/rng.hpp"

namespace genshin {

double GradCheckReport::max_rel_error() const {
    double worst = 0.0;
    for (const auto& r : inputs) worst = std::max(worst, r.max_rel_error);
    return worst;
}

GradCheckReport grad_check(const TensorFunction& f, std::vector<Tensor> inputs, double eps, double tol,
                           std::vector<std::string> names) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
    for (const auto& t : inputs) {
        if (!t.is_leaf()) throw std::invalid_argument("grad_check: inputs must be leaf tensors");
    }
    names.resize(inputs.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].empty()) names[i] = "input" + std::to_string(i);
    }

    auto evaluate = [&] {
        NoGradGuard guard;
        return f(inputs).item();
    };
    const double first = evaluate();
    const double second = evaluate();
    if (std::memcmp(&first, &second, sizeof(double)) != 0) {
        throw NumericError("grad_check: function is not deterministic");
    }

    std::vector<bool> previous_flags;
    for (auto& t : inputs) {
        previous_flags.push_back(t.requires_grad());
        t.zero_grad();
        t.set_requires_grad(true);
    }
    f(inputs).backward();

    GradCheckReport report;
    report.tolerance = tol;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& t = inputs[k];
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

        InputGradReport r;
        r.name = names[k];
        r.numel = t.numel();
        double total = 0.0;
        auto values = t.data_mut();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = evaluate();
            values[i] = saved - eps;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic[i] - numeric) / denom;
            total += rel;
            if (rel > r.max_rel_error || i == 0) {
                r.max_rel_error = rel;
                r.worst_index = i;
                r.worst_analytic = analytic[i];
                r.worst_numeric = numeric;
            }
        }
        r.mean_rel_error = values.empty() ? 0.0 : total / static_cast<double>(values.size());
        report.inputs.push_back(std::move(r));
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        inputs[k].zero_grad();
        inputs[k].set_requires_grad(previous_flags[k]);
    }
    return report;
}

}  // namespace genshin

namespace genshin {

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(shape, std::move(v));
}

// Values bounded away from zero, for ops with a kink at the origin.
Tensor away_from_zero(Rng& rng, const Shape& shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        const double mag = rng.uniform(0.05, 1.0);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor(shape, std::move(v));
}

Tensor weighted(const Tensor& y, const Tensor& w) { return sum_all(mul(y, w)); }

}  // namespace

std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PrimitiveCase> cases;
    const std::vector<Shape> shapes = {{5}, {3, 4}, {2, 3, 4}};

    auto unary = [&](const std::string& name, auto op, bool kinked) {
        for (const auto& s : shapes) {
            Tensor x = kinked ? away_from_zero(rng, s) : random_tensor(rng, s);
            Tensor w = random_tensor(rng, s);
            cases.push_back({name + shape_str(s), {x}, [op, w](const std::vector<Tensor>& in) {
                                 return weighted(op(in[0]), w);
                             }});
        }
    };
    unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, false);
    unary("tanh", [](const Tensor& x) { return tanh(x); }, false);
    unary("relu", [](const Tensor& x) { return relu(x); }, true);
    unary("exp", [](const Tensor& x) { return exp(x); }, false);
    unary("abs", [](const Tensor& x) { return abs(x); }, true);
    unary("maximum", [](const Tensor& x) { return maximum(x, 0.0); }, true);
    unary("scale", [](const Tensor& x) { return scale(x, -1.7); }, false);
    unary("neg", [](const Tensor& x) { return neg(x); }, false);
    unary("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.3); }, false);

    for (const auto& s : shapes) {
        Tensor x = random_tensor(rng, s, 0.2, 2.0);
        Tensor w = random_tensor(rng, s);
        cases.push_back({"sqrt" + shape_str(s), {x},
                         [w](const std::vector<Tensor>& in) { return weighted(sqrt(in[0]), w); }});
    }

    // Binary ops: same shape, broadcast over a trailing vector, and a scalar.
    const std::vector<std::pair<Shape, Shape>> pairs = {{{4}, {4}}, {{3, 4}, {4}}, {{2, 3, 4}, {1}}};
    auto binary = [&](const std::string& name, auto op, bool positive_rhs) {
        for (const auto& [sa, sb] : pairs) {
            Tensor a = random_tensor(rng, sa);
            Tensor b = positive_rhs ? random_tensor(rng, sb, 0.5, 1.5) : random_tensor(rng, sb);
            Tensor w = random_tensor(rng, sa);
            cases.push_back({name + shape_str(sa) + shape_str(sb), {a, b}, [op, w](const std::vector<Tensor>& in) {
                                 return weighted(op(in[0], in[1]), w);
                             }});
        }
    };
    binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, false);
    binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, false);
    binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, false);
    binary("div", [](const Tensor& a, const Tensor& b) { return div(a, b); }, true);

    const std::vector<std::pair<Shape, Shape>> mm = {{{2, 3}, {3, 4}}, {{2, 3, 4}, {4, 2}}, {{2, 2, 3}, {2, 3, 3}}};
    for (const auto& [sa, sb] : mm) {
        Tensor a = random_tensor(rng, sa);
        Tensor b = random_tensor(rng, sb);
        Shape so(sa.begin(), sa.end() - 1);
        so.push_back(sb.back());
        Tensor w = random_tensor(rng, so);
        cases.push_back({"matmul" + shape_str(sa) + shape_str(sb), {a, b},
                         [w](const std::vector<Tensor>& in) { return weighted(matmul(in[0], in[1]), w); }});
    }

    for (const auto& s : shapes) {
        Tensor a = random_tensor(rng, s);
        Tensor b = random_tensor(rng, s);
        Shape so = s;
        so.back() *= 2;
        Tensor w = random_tensor(rng, so);
        cases.push_back({"concat" + shape_str(s), {a, b},
                         [w](const std::vector<Tensor>& in) { return weighted(concat({in[0], in[1]}, -1), w); }});
    }

    for (const auto& s : shapes) {
        Tensor a = random_tensor(rng, s);
        Shape so = s;
        so.back() = 2;
        Tensor w = random_tensor(rng, so);
        cases.push_back({"slice" + shape_str(s), {a},
                         [w](const std::vector<Tensor>& in) { return weighted(slice(in[0], -1, 1, 2), w); }});
    }

    const std::vector<Shape> mat_shapes = {{3, 4}, {2, 3, 4}, {2, 2, 2, 3}};
    for (const auto& s : mat_shapes) {
        Tensor a = random_tensor(rng, s);
        Shape so = s;
        std::swap(so[0], so[so.size() - 1]);
        Tensor w = random_tensor(rng, so);
        cases.push_back({"transpose" + shape_str(s), {a},
                         [w](const std::vector<Tensor>& in) { return weighted(transpose(in[0], 0, -1), w); }});
        Tensor w2 = random_tensor(rng, Shape{shape_numel(s)});
        cases.push_back({"reshape" + shape_str(s), {a}, [w2](const std::vector<Tensor>& in) {
                             return weighted(reshape(in[0], Shape{in[0].numel()}), w2);
                         }});
        Shape ss = s;
        ss.erase(ss.begin());
        Shape sm = s;
        sm.pop_back();
        Tensor ws = random_tensor(rng, ss.empty() ? Shape{1} : ss);
        Tensor wm = random_tensor(rng, sm);
        cases.push_back({"sum" + shape_str(s), {a},
                         [ws](const std::vector<Tensor>& in) { return weighted(sum(in[0], 0), ws); }});
        cases.push_back({"mean" + shape_str(s), {a},
                         [wm](const std::vector<Tensor>& in) { return weighted(mean(in[0], -1), wm); }});
        Tensor wsm = random_tensor(rng, s);
        cases.push_back({"softmax" + shape_str(s), {a},
                         [wsm](const std::vector<Tensor>& in) { return weighted(softmax(in[0], -1), wsm); }});
        cases.push_back({"softmax_axis0" + shape_str(s), {a},
                         [wsm](const std::vector<Tensor>& in) { return weighted(softmax(in[0], 0), wsm); }});
        const std::size_t d = s.back();
        Tensor gain = random_tensor(rng, Shape{d}, 0.5, 1.5);
        Tensor bias = random_tensor(rng, Shape{d});
        Tensor wln = random_tensor(rng, s);
        cases.push_back({"layer_norm" + shape_str(s), {a, gain, bias}, [wln](const std::vector<Tensor>& in) {
                             return weighted(layer_norm(in[0], in[1], in[2]), wln);
                         }});
        Tensor wsel = random_tensor(rng, [&] {
            Shape t = s;
            t[0] = 4;
            return t;
        }());
        const std::vector<std::size_t> idx = {1, 0, 1, s[0] - 1};
        cases.push_back({"index_select" + shape_str(s), {a}, [wsel, idx](const std::vector<Tensor>& in) {
                             return weighted(index_select(in[0], idx), wsel);
                         }});
    }

    const std::vector<std::array<std::size_t, 4>> gc = {{{1, 3, 2, 2}}, {{2, 4, 3, 2}}, {{2, 5, 2, 3}}};
    for (const auto& [b, n, f, h] : gc) {
        Tensor x = random_tensor(rng, Shape{b, n, f});
        Tensor s0 = random_tensor(rng, Shape{n, n});
        Tensor s1 = random_tensor(rng, Shape{n, n});
        Tensor w = random_tensor(rng, Shape{2 * f, h});
        Tensor wo = random_tensor(rng, Shape{b, n, h});
        cases.push_back({"graph_conv" + shape_str({b, n, f, h}), {x, s0, s1, w}, [wo](const std::vector<Tensor>& in) {
                             return weighted(graph_conv(in[0], {in[1], in[2]}, in[3]), wo);
                         }});
    }
    return cases;
}

std::vector<PrimitiveCheckResult> run_primitive_checks(const std::vector<PrimitiveCase>& cases, double eps,
                                                       double tol) {
    std::vector<PrimitiveCheckResult> results;
    results.reserve(cases.size());
    for (const auto& c : cases) results.push_back({c.name, grad_check(c.f, c.inputs, eps, tol)});
    return results;
}

}  // namespace genshin

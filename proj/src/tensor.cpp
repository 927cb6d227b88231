#include "genshin/tensor.hpp"

#include "genshin/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace genshin {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;
};

}  // namespace detail

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMat>;
using MapMut = Eigen::Map<RowMat>;

thread_local bool g_grad_enabled = true;

std::size_t normalize_axis(int axis, std::size_t rank, std::string_view op) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        std::ostringstream os;
        os << op << ": axis " << axis << " out of range for rank " << rank;
        throw ShapeError(os.str());
    }
    return static_cast<std::size_t>(a);
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << shape_str(a) << " and " << shape_str(b);
    throw ShapeError(os.str());
}

void require_finite(std::string_view what, std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(what) + ": non-finite value");
        }
    }
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

// Per-output-axis strides into a and b; zero where the operand is broadcast.
struct Broadcast {
    Shape out;
    std::vector<std::size_t> a_strides;
    std::vector<std::size_t> b_strides;
};

Broadcast make_broadcast(std::string_view op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Broadcast bc;
    bc.out.assign(rank, 1);
    bc.a_strides.assign(rank, 0);
    bc.b_strides.assign(rank, 0);
    const auto sa = contiguous_strides(a);
    const auto sb = contiguous_strides(b);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ia = i + a.size();  // index + a.size() - rank, offset to stay unsigned
        const std::size_t ib = i + b.size();
        const std::size_t da = ia >= rank ? a[ia - rank] : 1;
        const std::size_t db = ib >= rank ? b[ib - rank] : 1;
        if (da != db && da != 1 && db != 1) shape_mismatch(op, a, b);
        bc.out[i] = std::max(da, db);
        if (ia >= rank && da != 1) bc.a_strides[i] = sa[ia - rank];
        if (ib >= rank && db != 1) bc.b_strides[i] = sb[ib - rank];
    }
    return bc;
}

template <typename F>
void broadcast_loop(const Broadcast& bc, F&& f) {
    const std::size_t rank = bc.out.size();
    const std::size_t n = shape_numel(bc.out);
    if (n == 0) return;
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += bc.a_strides[d];
            ib += bc.b_strides[d];
            if (idx[d] < bc.out[d]) break;
            ia -= bc.a_strides[d] * idx[d];
            ib -= bc.b_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
}

// Applies an elementwise binary op. `da`/`db` return the partial derivative of
// the output with respect to a/b given (a, b, out).
template <typename Fwd, typename Da, typename Db>
Tensor binary_op(std::string_view op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
    if (a.shape() == b.shape()) {
        const auto av = a.data();
        const auto bv = b.data();
        std::vector<double> out(av.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
        return make_result(op, a.shape(), std::move(out), {a, b}, [da, db](BackwardContext& ctx) {
            const auto g = ctx.out_grad();
            const auto y = ctx.out_value();
            const auto x0 = ctx.input(0);
            const auto x1 = ctx.input(1);
            auto g0 = ctx.input_grad(0);
            auto g1 = ctx.input_grad(1);
            if (!g0.empty())
                for (std::size_t i = 0; i < g.size(); ++i) g0[i] += g[i] * da(x0[i], x1[i], y[i]);
            if (!g1.empty())
                for (std::size_t i = 0; i < g.size(); ++i) g1[i] += g[i] * db(x0[i], x1[i], y[i]);
        });
    }
    Broadcast bc = make_broadcast(op, a.shape(), b.shape());
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(shape_numel(bc.out));
    broadcast_loop(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
    Shape out_shape = bc.out;
    return make_result(op, std::move(out_shape), std::move(out), {a, b},
                       [bc = std::move(bc), da, db](BackwardContext& ctx) {
                           const auto g = ctx.out_grad();
                           const auto y = ctx.out_value();
                           const auto x0 = ctx.input(0);
                           const auto x1 = ctx.input(1);
                           auto g0 = ctx.input_grad(0);
                           auto g1 = ctx.input_grad(1);
                           broadcast_loop(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               if (!g0.empty()) g0[ia] += g[i] * da(x0[ia], x1[ib], y[i]);
                               if (!g1.empty()) g1[ib] += g[i] * db(x0[ia], x1[ib], y[i]);
                           });
                       });
}

// Elementwise unary op; `deriv` returns dy/dx given (x, y).
template <typename Fwd, typename Deriv>
Tensor unary_op(std::string_view op, const Tensor& a, Fwd fwd, Deriv deriv) {
    const auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    return make_result(op, a.shape(), std::move(out), {a}, [deriv](BackwardContext& ctx) {
        const auto g = ctx.out_grad();
        const auto y = ctx.out_value();
        const auto x = ctx.input(0);
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
    });
}

// (outer, length, inner) decomposition around one axis.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t length = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// dst[permuted] (+)= src, where out axis i takes input axis perm[i].
void permute_into(std::span<const double> src, const Shape& src_shape, const std::vector<std::size_t>& perm,
                  std::span<double> dst, bool accumulate) {
    const std::size_t rank = src_shape.size();
    const auto src_strides = contiguous_strides(src_shape);
    Shape out_shape(rank);
    std::vector<std::size_t> strides(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = src_shape[perm[i]];
        strides[i] = src_strides[perm[i]];
    }
    Broadcast bc{out_shape, strides, std::vector<std::size_t>(rank, 0)};
    if (accumulate) {
        broadcast_loop(bc, [&](std::size_t i, std::size_t is, std::size_t) { dst[i] += src[is]; });
    } else {
        broadcast_loop(bc, [&](std::size_t i, std::size_t is, std::size_t) { dst[i] = src[is]; });
    }
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
    if (!std::isfinite(fill)) throw NumericError("Tensor: non-finite fill value");
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
    if (shape_numel(shape) != values.size()) {
        std::ostringstream os;
        os << "Tensor: shape " << shape_str(shape) << " needs " << shape_numel(shape) << " values, got "
           << values.size();
        throw ShapeError(os.str());
    }
    require_finite("Tensor", values);
    node_->shape = std::move(shape);
    node_->value = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::eye(std::size_t n) {
    Tensor t(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
    return t;
}

const Shape& Tensor::shape() const {
    static const Shape empty;
    return node_ ? node_->shape : empty;
}

std::size_t Tensor::size(int axis) const { return shape()[normalize_axis(axis, rank(), "size")]; }

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
    if (!node_) return {};
    return node_->value;
}

std::span<double> Tensor::data_mut() {
    if (!node_) return {};
    if (node_->backward) throw std::logic_error("data_mut: tensor '" + node_->op + "' has recorded history");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw ShapeError("at: index rank does not match " + shape_str(shape()));
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= shape()[axis]) throw ShapeError("at: index out of range for " + shape_str(shape()));
        offset = offset * shape()[axis] + i;
        ++axis;
    }
    return node_->value[offset];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    if (node_->backward) throw std::logic_error("set_requires_grad: only leaves can be marked");
    node_->requires_grad = flag;
    return *this;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!node_) return {};
    return node_->grad;
}

std::span<double> Tensor::grad_mut() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

std::string_view Tensor::op_name() const { return node_ ? std::string_view(node_->op) : std::string_view(); }

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

Tensor Tensor::detach() const { return Tensor(shape(), std::vector<double>(data().begin(), data().end())); }

void Tensor::backward() const {
    if (!node_) throw std::invalid_argument("backward: undefined tensor");
    if (node_->value.size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(node_->shape));
    }
    if (!node_->requires_grad) throw std::invalid_argument("backward: loss does not depend on any parameter");

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    if (node_->grad.empty()) node_->grad.assign(1, 0.0);
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (!node->backward || node->grad.empty()) continue;
        BackwardContext ctx(*node);
        node->backward(ctx);
        // Interior gradients are consumed once propagated.
        std::vector<double>().swap(node->grad);
    }
}

// ---------------------------------------------------------------------------
// BackwardContext

std::span<const double> BackwardContext::out_grad() const { return node_.grad; }
std::span<const double> BackwardContext::out_value() const { return node_.value; }
std::span<const double> BackwardContext::input(std::size_t i) const { return node_.inputs[i]->value; }
const Shape& BackwardContext::input_shape(std::size_t i) const { return node_.inputs[i]->shape; }
bool BackwardContext::needs_grad(std::size_t i) const { return node_.inputs[i]->requires_grad; }

std::span<double> BackwardContext::input_grad(std::size_t i) {
    auto& in = *node_.inputs[i];
    if (!in.requires_grad) return {};
    if (in.grad.empty()) in.grad.assign(in.value.size(), 0.0);
    return in.grad;
}

// ---------------------------------------------------------------------------

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   BackwardFn backward) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError(std::string(op) + ": result shape " + shape_str(shape) + " does not match value count");
    }
    for (const auto& in : inputs) {
        if (!in.defined()) throw std::invalid_argument(std::string(op) + ": undefined input");
        require_finite(std::string(op) + " input", in.data());
    }
    require_finite(op, values);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->op = std::string(op);
    const bool track =
        g_grad_enabled && backward &&
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (track) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) node->inputs.push_back(std::move(in.node_));
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double out) { return -out / y; });
}

Tensor scale(const Tensor& a, double s) {
    return unary_op(
        "scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(
        "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        "sigmoid", a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor maximum(const Tensor& a, double floor) {
    return unary_op(
        "maximum", a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) shape_mismatch("matmul", sa, sb);
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa[sa.size() - 1];
    const std::size_t k2 = sb[sb.size() - 2];
    const std::size_t n = sb[sb.size() - 1];
    if (k != k2) shape_mismatch("matmul", sa, sb);

    Shape batch_a(sa.begin(), sa.end() - 2);
    Shape batch_b(sb.begin(), sb.end() - 2);
    Broadcast bc = make_broadcast("matmul", batch_a, batch_b);
    // Offsets (in matrices) of a and b for each output batch entry.
    std::vector<std::pair<std::size_t, std::size_t>> offsets;
    offsets.reserve(shape_numel(bc.out));
    broadcast_loop(bc, [&](std::size_t, std::size_t ia, std::size_t ib) { offsets.emplace_back(ia, ib); });

    Shape out_shape = bc.out;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(offsets.size() * m * n);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        MapMut(out.data() + i * m * n, m, n).noalias() =
            MapConst(pa + offsets[i].first * m * k, m, k) * MapConst(pb + offsets[i].second * k * n, k, n);
    }
    return make_result("matmul", std::move(out_shape), std::move(out), {a, b},
                       [offsets = std::move(offsets), m, k, n](BackwardContext& ctx) {
                           const double* g = ctx.out_grad().data();
                           const double* va = ctx.input(0).data();
                           const double* vb = ctx.input(1).data();
                           auto ga = ctx.input_grad(0);
                           auto gb = ctx.input_grad(1);
                           for (std::size_t i = 0; i < offsets.size(); ++i) {
                               MapConst gi(g + i * m * n, m, n);
                               if (!ga.empty()) {
                                   MapMut(ga.data() + offsets[i].first * m * k, m, k).noalias() +=
                                       gi * MapConst(vb + offsets[i].second * k * n, k, n).transpose();
                               }
                               if (!gb.empty()) {
                                   MapMut(gb.data() + offsets[i].second * k * n, k, n).noalias() +=
                                       MapConst(va + offsets[i].first * m * k, m, k).transpose() * gi;
                               }
                           }
                       });
}

Tensor graph_conv(const Tensor& x, const std::vector<Tensor>& supports, const Tensor& w) {
    const Shape& sx = x.shape();
    if (sx.size() != 3) throw ShapeError("graph_conv: input must be B×N×F, got " + shape_str(sx));
    if (supports.empty()) throw ShapeError("graph_conv: empty support list");
    const std::size_t batch = sx[0];
    const std::size_t nodes = sx[1];
    const std::size_t feat = sx[2];
    const std::size_t n_sup = supports.size();
    for (const auto& s : supports) {
        if (s.shape() != Shape{nodes, nodes}) shape_mismatch("graph_conv support", s.shape(), sx);
    }
    const Shape& sw = w.shape();
    if (sw.size() != 2 || sw[0] != n_sup * feat) shape_mismatch("graph_conv weight", sw, sx);
    const std::size_t hidden = sw[1];

    std::vector<Tensor> inputs;
    inputs.reserve(n_sup + 2);
    inputs.push_back(x);
    for (const auto& s : supports) inputs.push_back(s);
    inputs.push_back(w);

    std::vector<double> out(batch * nodes * hidden);
    {
        RowMat agg(nodes, n_sup * feat);
        MapConst wm(w.data().data(), n_sup * feat, hidden);
        for (std::size_t b = 0; b < batch; ++b) {
            MapConst xb(x.data().data() + b * nodes * feat, nodes, feat);
            for (std::size_t s = 0; s < n_sup; ++s) {
                agg.middleCols(s * feat, feat).noalias() = MapConst(supports[s].data().data(), nodes, nodes) * xb;
            }
            MapMut(out.data() + b * nodes * hidden, nodes, hidden).noalias() = agg * wm;
        }
    }

    return make_result(
        "graph_conv", Shape{batch, nodes, hidden}, std::move(out), std::move(inputs),
        [batch, nodes, feat, n_sup, hidden](BackwardContext& ctx) {
            const double* g = ctx.out_grad().data();
            const double* vx = ctx.input(0).data();
            MapConst wm(ctx.input(n_sup + 1).data(), n_sup * feat, hidden);
            auto gx = ctx.input_grad(0);
            auto gw = ctx.input_grad(n_sup + 1);
            std::vector<std::span<double>> gs(n_sup);
            bool any_support_grad = false;
            for (std::size_t s = 0; s < n_sup; ++s) {
                gs[s] = ctx.input_grad(s + 1);
                any_support_grad = any_support_grad || !gs[s].empty();
            }
            RowMat agg(nodes, n_sup * feat);
            RowMat dagg(nodes, n_sup * feat);
            for (std::size_t b = 0; b < batch; ++b) {
                MapConst xb(vx + b * nodes * feat, nodes, feat);
                MapConst gb(g + b * nodes * hidden, nodes, hidden);
                if (!gw.empty()) {
                    for (std::size_t s = 0; s < n_sup; ++s) {
                        agg.middleCols(s * feat, feat).noalias() = MapConst(ctx.input(s + 1).data(), nodes, nodes) * xb;
                    }
                    MapMut(gw.data(), n_sup * feat, hidden).noalias() += agg.transpose() * gb;
                }
                if (gx.empty() && !any_support_grad) continue;
                dagg.noalias() = gb * wm.transpose();
                for (std::size_t s = 0; s < n_sup; ++s) {
                    const auto dpart = dagg.middleCols(s * feat, feat);
                    if (!gx.empty()) {
                        MapMut(gx.data() + b * nodes * feat, nodes, feat).noalias() +=
                            MapConst(ctx.input(s + 1).data(), nodes, nodes).transpose() * dpart;
                    }
                    if (!gs[s].empty()) {
                        MapMut(gs[s].data(), nodes, nodes).noalias() += dpart * xb.transpose();
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts.front().shape();
    const std::size_t ax = normalize_axis(axis, first.size(), "concat");
    Shape out_shape = first;
    out_shape[ax] = 0;
    std::vector<std::size_t> widths;  // contiguous chunk per outer index
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size()) shape_mismatch("concat", first, s);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != ax && s[i] != first[i]) shape_mismatch("concat", first, s);
        }
        out_shape[ax] += s[ax];
        widths.push_back(split_at(s, ax).length * split_at(s, ax).inner);
    }
    const std::size_t outer = split_at(first, ax).outer;
    const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
    std::vector<double> out(outer * total);
    std::size_t col = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const double* src = parts[p].data().data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(src + o * widths[p], widths[p], out.data() + o * total + col);
        }
        col += widths[p];
    }
    return make_result("concat", std::move(out_shape), std::move(out), parts,
                       [widths, outer, total](BackwardContext& ctx) {
                           const auto g = ctx.out_grad();
                           std::size_t c = 0;
                           for (std::size_t p = 0; p < widths.size(); ++p) {
                               auto gp = ctx.input_grad(p);
                               if (!gp.empty()) {
                                   for (std::size_t o = 0; o < outer; ++o) {
                                       const double* src = g.data() + o * total + c;
                                       double* dst = gp.data() + o * widths[p];
                                       for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
                                   }
                               }
                               c += widths[p];
                           }
                       });
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length) {
    const std::size_t ax = normalize_axis(axis, a.rank(), "slice");
    const AxisSplit s = split_at(a.shape(), ax);
    if (start + length > s.length || length == 0) {
        std::ostringstream os;
        os << "slice: range [" << start << ", " << start + length << ") invalid for axis " << axis << " of "
           << shape_str(a.shape());
        throw ShapeError(os.str());
    }
    Shape out_shape = a.shape();
    out_shape[ax] = length;
    std::vector<double> out(s.outer * length * s.inner);
    const double* src = a.data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(src + (o * s.length + start) * s.inner, length * s.inner, out.data() + o * length * s.inner);
    }
    return make_result("slice", std::move(out_shape), std::move(out), {a}, [s, start, length](BackwardContext& ctx) {
        const auto g = ctx.out_grad();
        auto ga = ctx.input_grad(0);
        for (std::size_t o = 0; o < s.outer; ++o) {
            const double* src = g.data() + o * length * s.inner;
            double* dst = ga.data() + (o * s.length + start) * s.inner;
            for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
        }
    });
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
    const std::size_t a0 = normalize_axis(axis0, a.rank(), "transpose");
    const std::size_t a1 = normalize_axis(axis1, a.rank(), "transpose");
    std::vector<std::size_t> perm(a.rank());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::swap(perm[a0], perm[a1]);
    Shape out_shape = a.shape();
    std::swap(out_shape[a0], out_shape[a1]);
    std::vector<double> out(a.numel());
    permute_into(a.data(), a.shape(), perm, out, false);
    return make_result("transpose", out_shape, std::move(out), {a}, [perm, out_shape](BackwardContext& ctx) {
        // The swap permutation is its own inverse.
        permute_into(ctx.out_grad(), out_shape, perm, ctx.input_grad(0), true);
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {a}, [](BackwardContext& ctx) {
        const auto g = ctx.out_grad();
        auto ga = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Tensor index_select(const Tensor& a, const std::vector<std::size_t>& indices) {
    if (a.rank() < 1) throw ShapeError("index_select: rank-0 input");
    const std::size_t rows = a.shape()[0];
    const std::size_t inner = a.numel() / std::max<std::size_t>(rows, 1);
    for (std::size_t i : indices) {
        if (i >= rows) {
            throw ShapeError("index_select: index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
        }
    }
    Shape out_shape = a.shape();
    out_shape[0] = indices.size();
    std::vector<double> out(indices.size() * inner);
    const double* src = a.data().data();
    for (std::size_t r = 0; r < indices.size(); ++r) std::copy_n(src + indices[r] * inner, inner, out.data() + r * inner);
    return make_result("index_select", std::move(out_shape), std::move(out), {a}, [indices, inner](BackwardContext& ctx) {
        const auto g = ctx.out_grad();
        auto ga = ctx.input_grad(0);
        for (std::size_t r = 0; r < indices.size(); ++r) {
            for (std::size_t i = 0; i < inner; ++i) ga[indices[r] * inner + i] += g[r * inner + i];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a, int axis, bool keepdim) {
    const std::size_t ax = normalize_axis(axis, a.rank(), "sum");
    const AxisSplit s = split_at(a.shape(), ax);
    Shape out_shape = a.shape();
    if (keepdim) {
        out_shape[ax] = 1;
    } else {
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
        if (out_shape.empty()) out_shape.push_back(1);
    }
    std::vector<double> out(s.outer * s.inner, 0.0);
    const double* src = a.data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t l = 0; l < s.length; ++l) {
            const double* row = src + (o * s.length + l) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
        }
    }
    return make_result("sum", std::move(out_shape), std::move(out), {a}, [s](BackwardContext& ctx) {
        const auto g = ctx.out_grad();
        auto ga = ctx.input_grad(0);
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t l = 0; l < s.length; ++l) {
                double* dst = ga.data() + (o * s.length + l) * s.inner;
                const double* src = g.data() + o * s.inner;
                for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor mean(const Tensor& a, int axis, bool keepdim) {
    const std::size_t ax = normalize_axis(axis, a.rank(), "mean");
    return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[ax]));
}

// Neumaier-compensated sum; full reductions feed losses whose last bits matter.
static double compensated_sum(std::span<const double> values) {
    double total = 0.0;
    double carry = 0.0;
    for (double v : values) {
        const double t = total + v;
        carry += std::abs(total) >= std::abs(v) ? (total - t) + v : (v - t) + total;
        total = t;
    }
    return total + carry;
}

Tensor sum_all(const Tensor& a) {
    const double total = compensated_sum(a.data());
    return make_result("sum_all", Shape{1}, {total}, {a}, [](BackwardContext& ctx) {
        const double g = ctx.out_grad()[0];
        for (double& v : ctx.input_grad(0)) v += g;
    });
}

Tensor mean_all(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean_all: empty tensor");
    const double n = static_cast<double>(a.numel());
    return make_result("mean_all", Shape{1}, {compensated_sum(a.data()) / n}, {a}, [n](BackwardContext& ctx) {
        const double g = ctx.out_grad()[0] / n;
        for (double& v : ctx.input_grad(0)) v += g;
    });
}

Tensor softmax(const Tensor& a, int axis) {
    const std::size_t ax = normalize_axis(axis, a.rank(), "softmax");
    const AxisSplit s = split_at(a.shape(), ax);
    std::vector<double> out(a.numel());
    const double* src = a.data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.length * s.inner + i;
            double peak = src[base];
            for (std::size_t l = 1; l < s.length; ++l) peak = std::max(peak, src[base + l * s.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < s.length; ++l) {
                const double e = std::exp(src[base + l * s.inner] - peak);
                out[base + l * s.inner] = e;
                total += e;
            }
            for (std::size_t l = 0; l < s.length; ++l) out[base + l * s.inner] /= total;
        }
    }
    return make_result("softmax", a.shape(), std::move(out), {a}, [s](BackwardContext& ctx) {
        const auto g = ctx.out_grad();
        const auto y = ctx.out_value();
        auto ga = ctx.input_grad(0);
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.length * s.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < s.length; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
                for (std::size_t l = 0; l < s.length; ++l) {
                    const std::size_t j = base + l * s.inner;
                    ga[j] += y[j] * (g[j] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
    const std::size_t dim = x.shape().back();
    if (gain.shape() != Shape{dim} || bias.shape() != Shape{dim}) {
        shape_mismatch("layer_norm", x.shape(), gain.shape());
    }
    const std::size_t rows = x.numel() / dim;
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel());
    const double* src = x.data().data();
    const double* pg = gain.data().data();
    const double* pb = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = src + r * dim;
        double mu = 0.0;
        for (std::size_t i = 0; i < dim; ++i) mu += row[i];
        mu /= static_cast<double>(dim);
        double var = 0.0;
        for (std::size_t i = 0; i < dim; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(dim);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t i = 0; i < dim; ++i) {
            const double h = (row[i] - mu) * inv;
            (*xhat)[r * dim + i] = h;
            out[r * dim + i] = h * pg[i] + pb[i];
        }
    }
    return make_result("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                       [xhat, inv_std, dim, rows](BackwardContext& ctx) {
                           const auto g = ctx.out_grad();
                           const auto pg = ctx.input(1);
                           auto gx = ctx.input_grad(0);
                           auto ggain = ctx.input_grad(1);
                           auto gbias = ctx.input_grad(2);
                           const double d = static_cast<double>(dim);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* gr = g.data() + r * dim;
                               const double* hr = xhat->data() + r * dim;
                               if (!ggain.empty())
                                   for (std::size_t i = 0; i < dim; ++i) ggain[i] += gr[i] * hr[i];
                               if (!gbias.empty())
                                   for (std::size_t i = 0; i < dim; ++i) gbias[i] += gr[i];
                               if (gx.empty()) continue;
                               double sum_dh = 0.0;
                               double sum_dh_h = 0.0;
                               for (std::size_t i = 0; i < dim; ++i) {
                                   const double dh = gr[i] * pg[i];
                                   sum_dh += dh;
                                   sum_dh_h += dh * hr[i];
                               }
                               const double inv = (*inv_std)[r];
                               for (std::size_t i = 0; i < dim; ++i) {
                                   const double dh = gr[i] * pg[i];
                                   gx[r * dim + i] += inv / d * (d * dh - sum_dh - hr[i] * sum_dh_h);
                               }
                           }
                       });
}

Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (!train || rate == 0.0) return x;
    const double keep = 1.0 - rate;
    std::vector<double> mask(x.numel());
    for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    std::vector<double> out(x.numel());
    const auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
    return make_result("dropout", x.shape(), std::move(out), {x}, [mask = std::move(mask)](BackwardContext& ctx) {
        const auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

}  // namespace genshin

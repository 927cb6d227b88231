#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace genshin {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised on NaN/Inf inputs or other numeric failures.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

/// Dense row-major double tensor with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage and history.
/// Leaves carry `requires_grad`; every operation whose inputs need gradients
/// records a backward rule, and `backward()` on a scalar sweeps the record in
/// reverse topological order, accumulating into leaf gradients.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor eye(std::size_t n);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    /// Size of axis `axis`; negative values count from the end.
    std::size_t size(int axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Mutable access to values. Only allowed on tensors with no recorded history.
    std::span<double> data_mut();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    Tensor& set_requires_grad(bool flag = true);
    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();

    /// Reverse sweep from a scalar tensor.
    void backward() const;

    /// Copy of the values with no history and requires_grad=false.
    Tensor detach() const;

    std::string_view op_name() const;
    bool is_leaf() const;

    /// Identity of the underlying storage (for aliasing checks).
    const void* id() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend class BackwardContext;
    friend Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                              std::vector<Tensor> inputs, BackwardFn backward);
};

/// View handed to backward rules.
class BackwardContext {
public:
    std::span<const double> out_grad() const;
    std::span<const double> out_value() const;
    std::span<const double> input(std::size_t i) const;
    const Shape& input_shape(std::size_t i) const;
    bool needs_grad(std::size_t i) const;
    /// Gradient accumulator of input i, allocated on first use. Empty when the
    /// input does not require gradients.
    std::span<double> input_grad(std::size_t i);

private:
    explicit BackwardContext(detail::Node& node) : node_(node) {}
    detail::Node& node_;
    friend class Tensor;
};

/// Builds an op result. Inputs are recorded and `backward` registered only when
/// gradient mode is on and some input requires gradients. Non-finite output
/// values are rejected with the op name.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn backward);

/// True unless a NoGradGuard is active on this thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Rng;

// Elementwise binary ops broadcast with numpy rules.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

/// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length);
Tensor transpose(const Tensor& a, int axis0, int axis1);
Tensor reshape(const Tensor& a, Shape shape);
/// Rows of `a` along axis 0 picked by `indices` (repeats allowed).
Tensor index_select(const Tensor& a, const std::vector<std::size_t>& indices);

Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
/// max(a, floor) elementwise.
Tensor maximum(const Tensor& a, double floor);
Tensor softmax(const Tensor& a, int axis);
/// Normalizes over the last axis, then applies per-feature gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Inverted dropout. Identity when `train` is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng);

/// Graph convolution over a family of supports:
///   out[b] = [T_0 x[b], T_1 x[b], ..., T_{S-1} x[b]] · w
/// with x: B×N×F, each T_s: N×N, w: (S·F)×H. The per-support aggregates are
/// recomputed in the backward pass instead of being stored.
Tensor graph_conv(const Tensor& x, const std::vector<Tensor>& supports, const Tensor& w);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace genshin

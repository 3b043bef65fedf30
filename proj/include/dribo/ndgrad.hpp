#pragma once

// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// Every learned component in the project is expressed as a graph of Nodes.
// A Node owns its forward value and, once backward() has reached it, a
// gradient buffer of the same shape. Leaf nodes (parameters, inputs created
// with Node::variable) accumulate gradients across backward() calls until
// they are reset through ParamRegistry::zero_grads(). Interior gradients are
// scratch space and are cleared at the start of every backward() call, so a
// second backward() over the same graph adds the same contribution again.
//
// Broadcasting is restricted to a leading-dimension batch broadcast: in a
// binary elementwise op one operand may have a shape equal to a proper suffix
// of the other's shape. Everything else must go through broadcast_to().

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dribo/errors.hpp"

namespace dribo::ndgrad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }

    /// Value of a single-element tensor.
    double item() const;
    bool all_finite() const noexcept;
    void fill(double v) noexcept;
    Tensor reshaped(Shape shape) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

struct NodeImpl;
using NodePtr = std::shared_ptr<NodeImpl>;
using BackwardFn = std::function<void(NodeImpl&)>;

struct NodeImpl {
    Tensor value;
    Tensor grad;  // empty until materialized
    bool requires_grad = false;
    bool leaf = true;
    const char* op = "leaf";
    std::vector<NodePtr> parents;
    BackwardFn backward;
};

class Node {
public:
    Node() = default;
    explicit Node(NodePtr impl) : impl_(std::move(impl)) {}

    /// Graph input that does not receive gradients.
    static Node constant(Tensor value);
    /// Leaf that accumulates gradients.
    static Node variable(Tensor value);

    bool valid() const noexcept { return static_cast<bool>(impl_); }
    const Tensor& value() const { return impl_->value; }
    Tensor& mutable_value() { return impl_->value; }
    const Shape& shape() const { return impl_->value.shape(); }
    std::size_t size() const { return impl_->value.size(); }
    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    /// Gradient buffer; zeros of the value's shape if nothing has been accumulated.
    Tensor grad() const;
    void zero_grad();
    double item() const { return impl_->value.item(); }

    const NodePtr& impl() const noexcept { return impl_; }

private:
    NodePtr impl_;
};

/// Builds an interior node. The backward closure is kept only when some input requires gradients.
Node make_node(Tensor value, std::vector<Node> inputs, BackwardFn backward, const char* op);

/// Materialized gradient buffer of a node (zero-filled on first access).
Tensor& grad_buffer(NodeImpl& node);

/// Propagates d(root)/d(node) into every reachable leaf that requires gradients.
void backward(const Node& root);

// ---- elementwise -----------------------------------------------------------
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node mul(const Node& a, const Node& b);
Node div(const Node& a, const Node& b);
Node minimum(const Node& a, const Node& b);
Node neg(const Node& x);
Node scale(const Node& x, double c);
Node add_scalar(const Node& x, double c);
Node exp(const Node& x);
Node log(const Node& x);
Node tanh(const Node& x);
Node sigmoid(const Node& x);
Node relu(const Node& x);
Node softplus(const Node& x);
Node square(const Node& x);
Node sqrt(const Node& x);
/// Clamps into [lo, hi]; gradient passes only where lo <= x <= hi.
Node clip(const Node& x, double lo, double hi);

// ---- structural ------------------------------------------------------------
Node matmul(const Node& a, const Node& b);
Node transpose(const Node& x);
Node reshape(const Node& x, Shape shape);
/// Right-aligned broadcast; each source dimension must equal the target's or be 1.
Node broadcast_to(const Node& x, Shape shape);
Node concat(const std::vector<Node>& xs, std::size_t axis);
Node slice(const Node& x, std::size_t axis, std::size_t begin, std::size_t end);

// ---- reductions ------------------------------------------------------------
Node sum(const Node& x);
Node mean(const Node& x);
/// Reduces one axis away (no keepdim).
Node sum(const Node& x, std::size_t axis);
Node mean(const Node& x, std::size_t axis);

// ---- gradient control ------------------------------------------------------
Node stop_gradient(const Node& x);
/// Forward value is `a`; the incoming gradient is split as weight_a into `a`
/// and (1 - weight_a) into `b`. Intended for two routes that compute the same value.
Node balance(const Node& a, const Node& b, double weight_a);

// ---- fused helpers ---------------------------------------------------------
/// Row-wise layer normalization over the last axis of a 2-D input.
Node layer_norm(const Node& x, const Node& gain, const Node& bias, double eps = 1e-5);
/// x W + b with b broadcast over rows.
Node linear(const Node& x, const Node& w, const Node& b);
/// Row-wise log-sum-exp of a 2-D input, shape (rows). Stable via max subtraction.
Node logsumexp_rows(const Node& x);
Node log_softmax_rows(const Node& x);

// ---- generic dispatch ------------------------------------------------------
enum class OpKind {
    add, sub, mul, div, matmul, exp, log, tanh, relu, softplus, sum, mean,
    broadcast, concat, slice, transpose, square, sqrt,
};

struct OpAttrs {
    std::size_t axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    Shape shape;
    bool has_axis = false;
};

const std::vector<OpKind>& all_op_kinds();
std::string op_name(OpKind kind);
Node apply(OpKind kind, const std::vector<Node>& inputs, const OpAttrs& attrs = {});

// ---- verification ----------------------------------------------------------
/// max_i |analytic_i - central_i| / max(1, |central_i|) for a scalar function of one tensor.
double finite_diff_check(const std::function<Node(const Node&)>& f, const Tensor& x0, double eps);

}  // namespace dribo::ndgrad

#include "dribo/ndgrad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dribo::ndgrad {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

Tensor Tensor::vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> d;
    d.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        d.insert(d.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(d));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

// ---------------------------------------------------------------------------
// Node and graph

Node Node::constant(Tensor value) {
    auto impl = std::make_shared<NodeImpl>();
    impl->value = std::move(value);
    return Node(std::move(impl));
}

Node Node::variable(Tensor value) {
    auto impl = std::make_shared<NodeImpl>();
    impl->value = std::move(value);
    impl->requires_grad = true;
    return Node(std::move(impl));
}

Tensor Node::grad() const {
    if (impl_->grad.empty()) return Tensor(impl_->value.shape(), 0.0);
    return impl_->grad;
}

void Node::zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.fill(0.0);
}

Tensor& grad_buffer(NodeImpl& node) {
    if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
    return node.grad;
}

Node make_node(Tensor value, std::vector<Node> inputs, BackwardFn backward_fn, const char* op) {
    auto impl = std::make_shared<NodeImpl>();
    impl->value = std::move(value);
    impl->op = op;
    impl->leaf = false;
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Node& n) { return n.requires_grad(); });
    if (any) {
        impl->requires_grad = true;
        impl->parents.reserve(inputs.size());
        for (auto& in : inputs) impl->parents.push_back(in.impl());
        impl->backward = std::move(backward_fn);
    }
    return Node(std::move(impl));
}

void backward(const Node& root) {
    if (root.size() != 1)
        throw ContractError("backward() requires a scalar root, got shape " + shape_str(root.shape()));
    NodeImpl* r = root.impl().get();
    if (!r->requires_grad) return;

    // Iterative post-order DFS over nodes that carry gradients.
    std::vector<NodeImpl*> order;
    std::unordered_set<NodeImpl*> seen;
    std::vector<std::pair<NodeImpl*, std::size_t>> stack;
    stack.emplace_back(r, 0);
    seen.insert(r);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeImpl* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (NodeImpl* n : order)
        if (!n->leaf) n->grad = Tensor();

    Tensor& g = grad_buffer(*r);
    g[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeImpl* n = *it;
        if (n->leaf || n->grad.empty() || !n->backward) continue;
        n->backward(*n);
    }
}

namespace {

inline double* gbuf(const NodePtr& p) { return p->requires_grad ? grad_buffer(*p).data().data() : nullptr; }

// C (m x n) += A (m x k) B (k x n), all row-major. Four rows of C share every
// pass over a row of B; rows of A that are zero at p are skipped.
void gemm_acc(const double* __restrict__ A, const double* __restrict__ B, double* __restrict__ C, std::size_t m,
              std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        double* __restrict__ c0 = C + i * n;
        double* __restrict__ c1 = c0 + n;
        double* __restrict__ c2 = c1 + n;
        double* __restrict__ c3 = c2 + n;
        const double* a0 = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
            if (x0 == 0.0 && x1 == 0.0 && x2 == 0.0 && x3 == 0.0) continue;
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double v = bp[j];
                c0[j] += x0 * v;
                c1[j] += x1 * v;
                c2[j] += x2 * v;
                c3[j] += x3 * v;
            }
        }
    }
    for (; i < m; ++i) {
        double* ci = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double x = A[i * k + p];
            if (x == 0.0) continue;
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += x * bp[j];
        }
    }
}

std::vector<double> transposed(const double* X, std::size_t rows, std::size_t cols) {
    std::vector<double> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = X[r * cols + c];
    return t;
}

struct Broadcast {
    Shape out;
    std::size_t a_size;
    std::size_t b_size;
};

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

Broadcast binary_shape(const Node& a, const Node& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb) return {sa, a.size(), b.size()};
    if (sb.size() < sa.size() && is_suffix(sb, sa)) return {sa, a.size(), b.size()};
    if (sa.size() < sb.size() && is_suffix(sa, sb)) return {sb, a.size(), b.size()};
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
}

// f(x, y) forward; da/db give partial derivatives given (x, y, out).
template <class F, class DA, class DB>
Node binary(const Node& a, const Node& b, const char* op, F f, DA da, DB db) {
    Broadcast bc = binary_shape(a, b, op);
    Tensor out(bc.out);
    const auto& av = a.value().storage();
    const auto& bv = b.value().storage();
    const std::size_t n = out.size();
    const std::size_t na = bc.a_size;
    const std::size_t nb = bc.b_size;
    if (na == n && nb == n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
    }
    return make_node(
        std::move(out), {a, b},
        [na, nb, da, db](NodeImpl& self) {
            const auto& x = self.parents[0]->value.storage();
            const auto& y = self.parents[1]->value.storage();
            const auto& o = self.value.storage();
            const auto& g = self.grad.storage();
            double* ga = gbuf(self.parents[0]);
            double* gb = gbuf(self.parents[1]);
            const std::size_t n = o.size();
            for (std::size_t i = 0; i < n; ++i) {
                const double xi = x[i % na];
                const double yi = y[i % nb];
                if (ga) ga[i % na] += g[i] * da(xi, yi, o[i]);
                if (gb) gb[i % nb] += g[i] * db(xi, yi, o[i]);
            }
        },
        op);
}

template <class F, class DF>
Node unary(const Node& x, const char* op, F f, DF df) {
    Tensor out(x.shape());
    const auto& xv = x.value().storage();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return make_node(
        std::move(out), {x},
        [df](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const auto& xv = self.parents[0]->value.storage();
            const auto& o = self.value.storage();
            const auto& g = self.grad.storage();
            for (std::size_t i = 0; i < o.size(); ++i) gx[i] += g[i] * df(xv[i], o[i]);
        },
        op);
}

double stable_softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }
double stable_sigmoid(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Node add(const Node& a, const Node& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Node sub(const Node& a, const Node& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Node mul(const Node& a, const Node& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Node div(const Node& a, const Node& b) {
    for (double v : b.value().storage())
        if (v == 0.0) throw DomainError("div: zero denominator");
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Node minimum(const Node& a, const Node& b) {
    return binary(
        a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Node neg(const Node& x) {
    return unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Node scale(const Node& x, double c) {
    return unary(x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Node add_scalar(const Node& x, double c) {
    return unary(x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Node exp(const Node& x) {
    return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

Node log(const Node& x) {
    for (double v : x.value().storage())
        if (!(v > 0.0)) throw DomainError("log: non-positive operand");
    return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Node tanh(const Node& x) {
    return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double o) { return 1.0 - o * o; });
}

Node sigmoid(const Node& x) {
    return unary(x, "sigmoid", stable_sigmoid, [](double, double o) { return o * (1.0 - o); });
}

Node relu(const Node& x) {
    // Subgradient at 0 is 0.
    return unary(
        x, "relu", [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Node softplus(const Node& x) {
    return unary(x, "softplus", stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Node square(const Node& x) {
    return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Node sqrt(const Node& x) {
    for (double v : x.value().storage())
        if (v < 0.0) throw DomainError("sqrt: negative operand");
    return unary(x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double o) { return 0.5 / o; });
}

Node clip(const Node& x, double lo, double hi) {
    if (lo > hi) throw ContractError("clip: lo > hi");
    return unary(
        x, "clip", [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Structural

Node matmul(const Node& a, const Node& b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out({m, n}, 0.0);
    gemm_acc(a.value().storage().data(), b.value().storage().data(), out.storage().data(), m, k, n);
    return make_node(
        std::move(out), {a, b},
        [m, k, n](NodeImpl& self) {
            const double* A = self.parents[0]->value.storage().data();
            const double* B = self.parents[1]->value.storage().data();
            const double* G = self.grad.storage().data();
            if (double* gA = gbuf(self.parents[0])) gemm_acc(G, transposed(B, k, n).data(), gA, m, n, k);
            if (double* gB = gbuf(self.parents[1])) gemm_acc(transposed(A, m, k).data(), G, gB, k, m, n);
        },
        "matmul");
}

Node transpose(const Node& x) {
    if (x.value().rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    Tensor out({c, r});
    const auto& v = x.value().storage();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
    return make_node(
        std::move(out), {x},
        [r, c](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const auto& g = self.grad.storage();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
        },
        "transpose");
}

Node reshape(const Node& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return make_node(
        std::move(out), {x},
        [](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const auto& g = self.grad.storage();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        },
        "reshape");
}

namespace {

// Source offset for each output element of a right-aligned broadcast.
std::vector<std::size_t> broadcast_index(const Shape& src, const Shape& dst) {
    if (src.size() > dst.size())
        throw ShapeError("broadcast_to: cannot broadcast " + shape_str(src) + " to " + shape_str(dst));
    const std::size_t pad = dst.size() - src.size();
    Shape s(pad, 1);
    s.insert(s.end(), src.begin(), src.end());
    std::vector<std::size_t> src_stride(dst.size(), 0);
    std::size_t stride = 1;
    for (std::size_t d = dst.size(); d-- > 0;) {
        if (s[d] != dst[d] && s[d] != 1)
            throw ShapeError("broadcast_to: cannot broadcast " + shape_str(src) + " to " + shape_str(dst));
        src_stride[d] = (s[d] == 1) ? 0 : stride;
        stride *= s[d];
    }
    const std::size_t n = shape_size(dst);
    std::vector<std::size_t> idx(n);
    std::vector<std::size_t> coord(dst.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < dst.size(); ++d) off += coord[d] * src_stride[d];
        idx[i] = off;
        for (std::size_t d = dst.size(); d-- > 0;) {
            if (++coord[d] < dst[d]) break;
            coord[d] = 0;
        }
    }
    return idx;
}

}  // namespace

Node broadcast_to(const Node& x, Shape shape) {
    auto idx = broadcast_index(x.shape(), shape);
    Tensor out(shape);
    const auto& v = x.value().storage();
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
    return make_node(
        std::move(out), {x},
        [idx = std::move(idx)](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const auto& g = self.grad.storage();
            for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
        },
        "broadcast");
}

Node concat(const std::vector<Node>& xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = xs[0].shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
    std::size_t total = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != s0[d])
                throw ShapeError("concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
        total += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
    Shape out_shape = s0;
    out_shape[axis] = total;
    Tensor out(out_shape);
    std::vector<std::size_t> widths;
    widths.reserve(xs.size());
    for (const auto& x : xs) widths.push_back(x.shape()[axis] * inner);
    const std::size_t row = total * inner;
    std::size_t col = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto& v = xs[k].value().storage();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * widths[k]), widths[k],
                        out.storage().begin() + static_cast<std::ptrdiff_t>(o * row + col));
        col += widths[k];
    }
    return make_node(
        std::move(out), xs,
        [widths = std::move(widths), outer, row](NodeImpl& self) {
            const auto& g = self.grad.storage();
            std::size_t col = 0;
            for (std::size_t k = 0; k < widths.size(); ++k) {
                if (double* gx = gbuf(self.parents[k])) {
                    for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t j = 0; j < widths[k]; ++j) gx[o * widths[k] + j] += g[o * row + col + j];
                }
                col += widths[k];
            }
        },
        "concat");
}

Node slice(const Node& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = x.shape();
    if (axis >= s.size() || begin > end || end > s[axis])
        throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    Tensor out(out_shape);
    const std::size_t src_row = s[axis] * inner;
    const std::size_t width = (end - begin) * inner;
    const std::size_t off = begin * inner;
    const auto& v = x.value().storage();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * src_row + off), width,
                    out.storage().begin() + static_cast<std::ptrdiff_t>(o * width));
    return make_node(
        std::move(out), {x},
        [outer, src_row, width, off](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const auto& g = self.grad.storage();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < width; ++j) gx[o * src_row + off + j] += g[o * width + j];
        },
        "slice");
}

// ---------------------------------------------------------------------------
// Reductions

Node sum(const Node& x) {
    double acc = 0.0;
    for (double v : x.value().storage()) acc += v;
    return make_node(
        Tensor::scalar(acc), {x},
        [](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const double g = self.grad[0];
            const std::size_t n = self.parents[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) gx[i] += g;
        },
        "sum");
}

Node mean(const Node& x) {
    if (x.size() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Node sum(const Node& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw ShapeError("sum: axis out of range for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t len = s[axis];
    Shape out_shape;
    for (std::size_t d = 0; d < s.size(); ++d)
        if (d != axis) out_shape.push_back(s[d]);
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor out(out_shape, 0.0);
    const auto& v = x.value().storage();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * len + l) * inner + i];
    return make_node(
        std::move(out), {x},
        [outer, len, inner](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const auto& g = self.grad.storage();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t l = 0; l < len; ++l)
                    for (std::size_t i = 0; i < inner; ++i) gx[(o * len + l) * inner + i] += g[o * inner + i];
        },
        "sum_axis");
}

Node mean(const Node& x, std::size_t axis) {
    if (axis >= x.shape().size()) throw ShapeError("mean: axis out of range for " + shape_str(x.shape()));
    return scale(sum(x, axis), 1.0 / static_cast<double>(x.shape()[axis]));
}

// ---------------------------------------------------------------------------
// Gradient control

Node stop_gradient(const Node& x) { return Node::constant(x.value()); }

Node balance(const Node& a, const Node& b, double weight_a) {
    if (a.shape() != b.shape()) throw ShapeError("balance: shape mismatch");
    const double wb = 1.0 - weight_a;
    return make_node(
        a.value(), {a, b},
        [weight_a, wb](NodeImpl& self) {
            const auto& g = self.grad.storage();
            if (double* ga = gbuf(self.parents[0]))
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += weight_a * g[i];
            if (double* gb = gbuf(self.parents[1]))
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += wb * g[i];
        },
        "balance");
}

// ---------------------------------------------------------------------------
// Fused helpers

Node layer_norm(const Node& x, const Node& gain, const Node& bias, double eps) {
    const Shape& s = x.shape();
    if (s.empty() || s.size() > 2) throw ShapeError("layer_norm: expected rank 1 or 2, got " + shape_str(s));
    const std::size_t d = s.back();
    const std::size_t rows = x.size() / d;
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) throw ShapeError("layer_norm: gain/bias shape");
    Tensor out(s);
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv = std::make_shared<std::vector<double>>(rows);
    const auto& xv = x.value().storage();
    const auto& gv = gain.value().storage();
    const auto& bv = bias.value().storage();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double iv = 1.0 / std::sqrt(var + eps);
        (*inv)[r] = iv;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mu) * iv;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = h * gv[j] + bv[j];
        }
    }
    return make_node(
        std::move(out), {x, gain, bias},
        [xhat, inv, rows, d](NodeImpl& self) {
            const auto& g = self.grad.storage();
            const auto& gv = self.parents[1]->value.storage();
            double* gx = gbuf(self.parents[0]);
            double* gg = gbuf(self.parents[1]);
            double* gb = gbuf(self.parents[2]);
            const double dn = static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = g.data() + r * d;
                const double* hr = xhat->data() + r * d;
                if (gg)
                    for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * hr[j];
                if (gb)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
                if (gx) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = gr[j] * gv[j];
                        m1 += dh;
                        m2 += dh * hr[j];
                    }
                    m1 /= dn;
                    m2 /= dn;
                    const double iv = (*inv)[r];
                    for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += iv * (gr[j] * gv[j] - m1 - hr[j] * m2);
                }
            }
        },
        "layer_norm");
}

Node linear(const Node& x, const Node& w, const Node& b) { return add(matmul(x, w), b); }

Node logsumexp_rows(const Node& x) {
    if (x.value().rank() != 2) throw ShapeError("logsumexp_rows: expected rank 2, got " + shape_str(x.shape()));
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (cols == 0) throw ShapeError("logsumexp_rows: empty rows");
    Tensor out({rows});
    auto soft = std::make_shared<std::vector<double>>(x.size());
    const auto& v = x.value().storage();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = v.data() + r * cols;
        const double m = *std::max_element(xr, xr + cols);
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += std::exp(xr[j] - m);
        const double lse = m + std::log(acc);
        out[r] = lse;
        for (std::size_t j = 0; j < cols; ++j) (*soft)[r * cols + j] = std::exp(xr[j] - lse);
    }
    return make_node(
        std::move(out), {x},
        [soft, rows, cols](NodeImpl& self) {
            double* gx = gbuf(self.parents[0]);
            if (!gx) return;
            const auto& g = self.grad.storage();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += g[r] * (*soft)[r * cols + j];
        },
        "logsumexp_rows");
}

Node log_softmax_rows(const Node& x) {
    const Node lse = logsumexp_rows(x);
    return sub(x, broadcast_to(reshape(lse, {x.shape()[0], 1}), x.shape()));
}

// ---------------------------------------------------------------------------
// Dispatch

const std::vector<OpKind>& all_op_kinds() {
    static const std::vector<OpKind> kinds = {
        OpKind::add,   OpKind::sub,       OpKind::mul,    OpKind::div,       OpKind::matmul, OpKind::exp,
        OpKind::log,   OpKind::tanh,      OpKind::relu,   OpKind::softplus,  OpKind::sum,    OpKind::mean,
        OpKind::broadcast, OpKind::concat, OpKind::slice, OpKind::transpose, OpKind::square, OpKind::sqrt,
    };
    return kinds;
}

std::string op_name(OpKind kind) {
    switch (kind) {
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::matmul: return "matmul";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::tanh: return "tanh";
        case OpKind::relu: return "relu";
        case OpKind::softplus: return "softplus";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::broadcast: return "broadcast";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::transpose: return "transpose";
        case OpKind::square: return "square";
        case OpKind::sqrt: return "sqrt";
    }
    return "unknown";
}

namespace {
void expect_arity(OpKind kind, const std::vector<Node>& inputs, std::size_t n) {
    if (inputs.size() != n)
        throw ContractError(op_name(kind) + ": expected " + std::to_string(n) + " inputs, got " +
                            std::to_string(inputs.size()));
}
}  // namespace

Node apply(OpKind kind, const std::vector<Node>& in, const OpAttrs& attrs) {
    switch (kind) {
        case OpKind::add: expect_arity(kind, in, 2); return add(in[0], in[1]);
        case OpKind::sub: expect_arity(kind, in, 2); return sub(in[0], in[1]);
        case OpKind::mul: expect_arity(kind, in, 2); return mul(in[0], in[1]);
        case OpKind::div: expect_arity(kind, in, 2); return div(in[0], in[1]);
        case OpKind::matmul: expect_arity(kind, in, 2); return matmul(in[0], in[1]);
        case OpKind::exp: expect_arity(kind, in, 1); return exp(in[0]);
        case OpKind::log: expect_arity(kind, in, 1); return log(in[0]);
        case OpKind::tanh: expect_arity(kind, in, 1); return tanh(in[0]);
        case OpKind::relu: expect_arity(kind, in, 1); return relu(in[0]);
        case OpKind::softplus: expect_arity(kind, in, 1); return softplus(in[0]);
        case OpKind::sum: expect_arity(kind, in, 1); return attrs.has_axis ? sum(in[0], attrs.axis) : sum(in[0]);
        case OpKind::mean: expect_arity(kind, in, 1); return attrs.has_axis ? mean(in[0], attrs.axis) : mean(in[0]);
        case OpKind::broadcast: expect_arity(kind, in, 1); return broadcast_to(in[0], attrs.shape);
        case OpKind::concat: return concat(in, attrs.axis);
        case OpKind::slice: expect_arity(kind, in, 1); return slice(in[0], attrs.axis, attrs.begin, attrs.end);
        case OpKind::transpose: expect_arity(kind, in, 1); return transpose(in[0]);
        case OpKind::square: expect_arity(kind, in, 1); return square(in[0]);
        case OpKind::sqrt: expect_arity(kind, in, 1); return sqrt(in[0]);
    }
    throw ContractError("apply: unknown op kind");
}

// ---------------------------------------------------------------------------
// Verification

double finite_diff_check(const std::function<Node(const Node&)>& f, const Tensor& x0, double eps) {
    if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
    Node x = Node::variable(x0);
    Node y = f(x);
    if (!std::isfinite(y.item())) throw DomainError("finite_diff_check: non-finite function value");
    backward(y);
    const Tensor analytic = x.grad();
    double worst = 0.0;
    Tensor probe = x0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double fp = f(Node::constant(probe)).item();
        probe[i] = orig - eps;
        const double fm = f(Node::constant(probe)).item();
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) throw DomainError("finite_diff_check: non-finite function value");
        const double central = (fp - fm) / (2.0 * eps);
        worst = std::max(worst, std::abs(analytic[i] - central) / std::max(1.0, std::abs(central)));
    }
    return worst;
}

}  // namespace dribo::ndgrad

#include "stmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace stmae {

std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void fail(const std::string& kernel, const std::string& what) {
    throw ShapeError(kernel + ": " + what);
}

[[noreturn]] void fail_shapes(const std::string& kernel, const Shape& a, const Shape& b) {
    fail(kernel, "incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

/// Builds a result node. The backward closure is only kept when some parent
/// needs gradients, so constant subgraphs record nothing.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                             [](const NodePtr& p) { return p->requires_grad; });
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

/// Maps each flat output index of `out` to a flat index into `in` under
/// numpy broadcasting (in right-aligned, extents 1 or equal).
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
    const std::size_t r = out.size();
    std::vector<std::size_t> in_strides(r, 0);
    auto src = strides_of(in);
    for (std::size_t i = 0; i < in.size(); ++i) {
        std::size_t oi = r - in.size() + i;
        in_strides[oi] = in[i] == 1 ? 0 : src[i];
    }
    std::vector<std::size_t> map(numel_of(out));
    std::vector<std::size_t> idx(r, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < map.size(); ++flat) {
        map[flat] = offset;
        for (std::size_t ax = r; ax-- > 0;) {
            if (++idx[ax] < out[ax]) {
                offset += in_strides[ax];
                break;
            }
            offset -= in_strides[ax] * (out[ax] - 1);
            idx[ax] = 0;
        }
    }
    return map;
}

Shape broadcast_shape(const std::string& kernel, const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) fail_shapes(kernel, a, b);
        out[i] = da == 1 ? db : da;
    }
    return out;
}

template <class F, class G>
Tensor unary(const Tensor& x, F forward, G derivative) {
    const auto& xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = forward(xs[i]);
    return make_result(x.shape(), std::move(out), {x.node()}, [derivative](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * derivative(p.data[i], self.data[i]);
    });
}

enum class BinOp { add, sub, mul, div };

Tensor binary(const Tensor& a_in, const Tensor& b_in, BinOp op, const char* kernel) {
    Tensor a = a_in, b = b_in;
    if (a.shape() != b.shape()) {
        Shape out = broadcast_shape(kernel, a.shape(), b.shape());
        if (a.shape() != out) a = broadcast_to(a, out);
        if (b.shape() != out) b = broadcast_to(b, out);
    }
    const auto& x = a.data();
    const auto& y = b.data();
    std::vector<double> out(x.size());
    switch (op) {
        case BinOp::add: for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i]; break;
        case BinOp::sub: for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i]; break;
        case BinOp::mul: for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i]; break;
        case BinOp::div: for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i]; break;
    }
    return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [op](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
            auto& ga = pa.grad_slot();
            for (std::size_t i = 0; i < g.size(); ++i) {
                switch (op) {
                    case BinOp::add:
                    case BinOp::sub: ga[i] += g[i]; break;
                    case BinOp::mul: ga[i] += g[i] * pb.data[i]; break;
                    case BinOp::div: ga[i] += g[i] / pb.data[i]; break;
                }
            }
        }
        if (pb.requires_grad) {
            auto& gb = pb.grad_slot();
            for (std::size_t i = 0; i < g.size(); ++i) {
                switch (op) {
                    case BinOp::add: gb[i] += g[i]; break;
                    case BinOp::sub: gb[i] -= g[i]; break;
                    case BinOp::mul: gb[i] += g[i] * pa.data[i]; break;
                    case BinOp::div: gb[i] -= g[i] * self.data[i] / pb.data[i]; break;
                }
            }
        }
    });
}

// Dense products on row-major blocks, accumulating into c.
// c[m,n] += a[m,k] b[k,n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// c[m,k] += a[m,n] b[k,n]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
            c[i * k + p] += acc;
        }
    }
}

// c[k,n] += a[m,k]^T b[m,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->data = {0.0}; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel_of(shape) != values.size())
        fail("from", "shape " + shape_str(shape) + " needs " + std::to_string(numel_of(shape)) +
                         " values, got " + std::to_string(values.size()));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) fail("dim", "axis " + std::to_string(axis) + " out of range for " +
                                        shape_str(shape()));
    return node_->shape[axis];
}

double Tensor::item() const {
    if (numel() != 1) fail("item", "tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) fail("at", "index rank mismatch for " + shape_str(shape()));
    std::size_t flat = 0, ax = 0;
    for (auto i : index) {
        if (i >= node_->shape[ax]) fail("at", "index out of range for " + shape_str(shape()));
        flat = flat * node_->shape[ax++] + i;
    }
    return node_->data[flat];
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (numel() != 1)
        fail("backward", "loss must be a scalar, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->grad_slot()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    // Release the tape: interior nodes drop their links and buffers.
    for (Node* n : order) {
        if (n->backward) {
            n->backward = nullptr;
            n->parents.clear();
            if (n != node_.get()) n->grad.clear();
        }
    }
}

Tensor Tensor::detach() const {
    return from(shape(), node_->data, false);
}

Tensor Tensor::clone() const {
    return from(shape(), node_->data, node_->requires_grad);
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0))
        fail_shapes("matmul", a.shape(), b.shape());
    const std::size_t k = b.dim(0), n = b.dim(1), m = a.numel() / k;
    std::vector<double> out(m * n, 0.0);
    gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
    Shape shape = a.shape();
    shape.back() = n;
    return make_result(std::move(shape), std::move(out), {a.node(), b.node()},
                       [m, k, n](Node& self) {
                           Node& pa = *self.parents[0];
                           Node& pb = *self.parents[1];
                           if (pa.requires_grad)
                               gemm_nt(m, n, k, self.grad.data(), pb.data.data(),
                                       pa.grad_slot().data());
                           if (pb.requires_grad)
                               gemm_tn(m, k, n, pa.data.data(), self.grad.data(),
                                       pb.grad_slot().data());
                       });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (b.rank() != 3 || (a.rank() != 2 && a.rank() != 3))
        fail_shapes("bmm", a.shape(), b.shape());
    const bool shared = a.rank() == 2;
    const std::size_t batch = b.dim(0), k = b.dim(1), n = b.dim(2);
    const std::size_t m = a.dim(a.rank() - 2);
    if (a.shape().back() != k || (!shared && a.dim(0) != batch))
        fail_shapes("bmm", a.shape(), b.shape());
    std::vector<double> out(batch * m * n, 0.0);
    const std::size_t a_step = shared ? 0 : m * k;
    for (std::size_t i = 0; i < batch; ++i)
        gemm_nn(m, k, n, a.data().data() + i * a_step, b.data().data() + i * k * n,
                out.data() + i * m * n);
    return make_result({batch, m, n}, std::move(out), {a.node(), b.node()},
                       [batch, m, k, n, a_step](Node& self) {
                           Node& pa = *self.parents[0];
                           Node& pb = *self.parents[1];
                           for (std::size_t i = 0; i < batch; ++i) {
                               const double* g = self.grad.data() + i * m * n;
                               if (pa.requires_grad)
                                   gemm_nt(m, n, k, g, pb.data.data() + i * k * n,
                                           pa.grad_slot().data() + i * a_step);
                               if (pb.requires_grad)
                                   gemm_tn(m, k, n, pa.data.data() + i * a_step, g,
                                           pb.grad_slot().data() + i * k * n);
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::div, "div"); }

Tensor scale(const Tensor& x, double factor) {
    return unary(x, [factor](double v) { return v * factor; },
                 [factor](double, double) { return factor; });
}

Tensor shift(const Tensor& x, double offset) {
    return unary(x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor sigmoid(const Tensor& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary(x, [](double v) { return std::tanh(v); },
                 [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
    return unary(x, [](double v) { return std::fabs(v); },
                 [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x) {
    return unary(x, [](double v) { return std::log(v); },
                 [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor row_softmax(const Tensor& x) {
    if (x.rank() < 1 || x.shape().back() == 0) fail("row_softmax", "empty last axis " + shape_str(x.shape()));
    const std::size_t n = x.shape().back(), rows = x.numel() / n;
    const auto& in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * n;
        double* o = out.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= z;
    }
    return make_result(x.shape(), std::move(out), {x.node()}, [rows, n](Node& self) {
        auto& g = self.parents[0]->grad_slot();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * n;
            const double* dy = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) fail("concat", "no operands");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) fail("concat", "axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
        if (!ok) fail_shapes("concat", first, s);
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
    const std::size_t out_block = out_shape[axis] * inner;
    for (const auto& p : parts) widths.push_back(p.shape()[axis] * inner);

    std::vector<double> out(outer * out_block);
    std::vector<NodePtr> parents;
    std::size_t col = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& d = parts[i].data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(d.data() + o * widths[i], widths[i], out.data() + o * out_block + col);
        col += widths[i];
        parents.push_back(parts[i].node());
    }
    return make_result(std::move(out_shape), std::move(out), std::move(parents),
                       [outer, out_block, widths](Node& self) {
                           std::size_t c = 0;
                           for (std::size_t i = 0; i < widths.size(); ++i) {
                               Node& p = *self.parents[i];
                               if (p.requires_grad) {
                                   auto& g = p.grad_slot();
                                   for (std::size_t o = 0; o < outer; ++o)
                                       for (std::size_t j = 0; j < widths[i]; ++j)
                                           g[o * widths[i] + j] += self.grad[o * out_block + c + j];
                               }
                               c += widths[i];
                           }
                       });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape& s = x.shape();
    if (axis >= s.size() || start + length > s[axis])
        fail("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                          ") on axis " + std::to_string(axis) + " out of bounds for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t in_block = s[axis] * inner, out_block = length * inner, offset = start * inner;
    std::vector<double> out(outer * out_block);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.data().data() + o * in_block + offset, out_block, out.data() + o * out_block);
    Shape out_shape = s;
    out_shape[axis] = length;
    return make_result(std::move(out_shape), std::move(out), {x.node()},
                       [outer, in_block, out_block, offset](Node& self) {
                           auto& g = self.parents[0]->grad_slot();
                           for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t j = 0; j < out_block; ++j)
                                   g[o * in_block + offset + j] += self.grad[o * out_block + j];
                       });
}

Tensor take(const Tensor& x, std::span<const std::size_t> indices) {
    std::vector<double> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= x.numel())
            fail("take", "index " + std::to_string(indices[i]) + " out of range for " +
                             shape_str(x.shape()));
        out[i] = x.data()[indices[i]];
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return make_result({idx.size()}, std::move(out), {x.node()}, [idx](Node& self) {
        auto& g = self.parents[0]->grad_slot();
        for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel_of(shape) != x.numel()) fail_shapes("reshape", x.shape(), shape);
    return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                       {x.node()}, [](Node& self) {
                           auto& g = self.parents[0]->grad_slot();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
}

Tensor permute(const Tensor& x, std::span<const std::size_t> axes) {
    const Shape& s = x.shape();
    if (axes.size() != s.size()) fail("permute", "axes rank mismatch for " + shape_str(s));
    std::vector<bool> used(s.size(), false);
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= s.size() || used[axes[i]]) fail("permute", "invalid axes for " + shape_str(s));
        used[axes[i]] = true;
        out_shape[i] = s[axes[i]];
    }
    // Source offset for each output position: view x through permuted strides.
    auto in_strides = strides_of(s);
    Shape permuted_strides(s.size());
    for (std::size_t i = 0; i < axes.size(); ++i) permuted_strides[i] = in_strides[axes[i]];
    std::vector<std::size_t> src(x.numel());
    std::vector<std::size_t> idx(s.size(), 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < src.size(); ++flat) {
        src[flat] = offset;
        for (std::size_t ax = s.size(); ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                offset += permuted_strides[ax];
                break;
            }
            offset -= permuted_strides[ax] * (out_shape[ax] - 1);
            idx[ax] = 0;
        }
    }
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = x.data()[src[i]];
    return make_result(std::move(out_shape), std::move(out), {x.node()},
                       [src = std::move(src)](Node& self) {
                           auto& g = self.parents[0]->grad_slot();
                           for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
                       });
}

Tensor transpose(const Tensor& x) {
    if (x.rank() < 2) fail("transpose", "needs rank >= 2, got " + shape_str(x.shape()));
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
    return permute(x, axes);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    if (x.rank() > shape.size() || broadcast_shape("broadcast_to", x.shape(), shape) != shape)
        fail_shapes("broadcast_to", x.shape(), shape);
    auto map = broadcast_index(x.shape(), shape);
    std::vector<double> out(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = x.data()[map[i]];
    return make_result(shape, std::move(out), {x.node()}, [map = std::move(map)](Node& self) {
        auto& g = self.parents[0]->grad_slot();
        for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += self.grad[i];
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return make_result({}, {total}, {x.node()}, [](Node& self) {
        auto& g = self.parents[0]->grad_slot();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) fail("mean", "empty tensor");
    const double n = static_cast<double>(x.numel());
    double total = 0.0;
    for (double v : x.data()) total += v;
    return make_result({}, {total / n}, {x.node()}, [n](Node& self) {
        auto& g = self.parents[0]->grad_slot();
        for (auto& v : g) v += self.grad[0] / n;
    });
}

Tensor sum_last(const Tensor& x, bool keepdim) {
    if (x.rank() < 1) fail("sum_last", "needs rank >= 1");
    const std::size_t n = x.shape().back(), rows = n ? x.numel() / n : 0;
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out[r] += x.data()[r * n + j];
    Shape s = x.shape();
    if (keepdim) s.back() = 1;
    else s.pop_back();
    return make_result(std::move(s), std::move(out), {x.node()}, [rows, n](Node& self) {
        auto& g = self.parents[0]->grad_slot();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r];
    });
}

Tensor where(std::span<const std::uint8_t> pick, const Shape& shape, const Tensor& a,
             const Tensor& b) {
    if (pick.size() != numel_of(shape))
        fail("where", "selector has " + std::to_string(pick.size()) + " entries for shape " +
                          shape_str(shape));
    Tensor ta = a.shape() == shape ? a : broadcast_to(a, shape);
    Tensor tb = b.shape() == shape ? b : broadcast_to(b, shape);
    std::vector<double> out(pick.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick[i] ? ta.data()[i] : tb.data()[i];
    std::vector<std::uint8_t> sel(pick.begin(), pick.end());
    return make_result(shape, std::move(out), {ta.node(), tb.node()},
                       [sel = std::move(sel)](Node& self) {
                           Node& pa = *self.parents[0];
                           Node& pb = *self.parents[1];
                           if (pa.requires_grad) {
                               auto& g = pa.grad_slot();
                               for (std::size_t i = 0; i < sel.size(); ++i)
                                   if (sel[i]) g[i] += self.grad[i];
                           }
                           if (pb.requires_grad) {
                               auto& g = pb.grad_slot();
                               for (std::size_t i = 0; i < sel.size(); ++i)
                                   if (!sel[i]) g[i] += self.grad[i];
                           }
                       });
}

}  // namespace stmae

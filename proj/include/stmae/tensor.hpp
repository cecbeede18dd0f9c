#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stmae {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised by kernels whose operands do not conform. The message names the
/// kernel and the offending shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents that require grad.
    std::function<void(Node&)> backward;

    std::vector<double>& grad_slot() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

/// Dense row-major float64 array with an optional gradient slot.
///
/// A Tensor is a cheap handle; copies share the same storage. Results of
/// kernels whose inputs require grad keep a link to their inputs, so the
/// chain of handles reachable from a loss is the recorded tape. backward()
/// walks it once in reverse topological order and then releases it.
class Tensor {
public:
    Tensor();

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    /// Writable view of the values. Only meaningful on leaves (parameters,
    /// inputs); kernels never write into their operands.
    std::span<double> mutable_data() { return node_->data; }

    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad_slot(); }
    void zero_grad();
    void clear_grad() { node_->grad.clear(); }

    /// Reverse-mode sweep from this scalar. Gradients accumulate into every
    /// reachable tensor that requires grad; the recorded graph is released
    /// afterwards.
    void backward() const;

    /// Same values, no history, no grad requirement.
    Tensor detach() const;
    /// Deep copy of values (and grad flag) into fresh storage.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    // Used by kernel implementations.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// While alive, kernels on this thread record no history (evaluation passes).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Kernels. Every kernel validates operand shapes and throws ShapeError.
// ---------------------------------------------------------------------------

/// a[..., m, k] x b[k, n] -> [..., m, n]; leading axes of a are flattened.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product. a[B, m, k] x b[B, k, n] -> [B, m, n]. A rank-2 a[m, k] is
/// shared across the batch of b (used for graph propagation).
Tensor bmm(const Tensor& a, const Tensor& b);

/// Elementwise binaries. Operands broadcast under numpy rules.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor shift(const Tensor& x, double offset);
Tensor neg(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);

/// Softmax along the last axis.
Tensor row_softmax(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Flat gather: result[i] = x.data()[indices[i]], shape [indices.size()].
Tensor take(const Tensor& x, std::span<const std::size_t> indices);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const std::size_t> axes);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum over the last axis; keeps it as extent 1 when keepdim.
Tensor sum_last(const Tensor& x, bool keepdim = true);

/// result[i] = pick[i] ? a[i] : b[i]; a and b broadcast to pick's shape.
Tensor where(std::span<const std::uint8_t> pick, const Shape& shape, const Tensor& a,
             const Tensor& b);

}  // namespace stmae

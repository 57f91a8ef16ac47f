#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mlmkit::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until needed
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), T(0));
        }
    }
};

/// Shared handle to a dense row-major tensor that can take part in
/// reverse-mode differentiation. Copies alias the same storage.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->value.size(); }
    // Rank-2 view; rank-1 tensors are a single row.
    std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
    std::size_t cols() const { return node_->shape.back(); }

    std::span<T> data() { return node_->value; }
    std::span<const T> data() const { return node_->value; }
    T& operator[](std::size_t i) { return node_->value[i]; }
    const T& operator[](std::size_t i) const { return node_->value[i]; }
    T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer, allocated (zeroed) on first access.
    std::span<T> grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<const T> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) {
            std::fill(node_->grad.begin(), node_->grad.end(), T(0));
        }
    }

    /// Leaf copy of the values, not connected to any graph.
    Tensor detach() const { return from(shape(), node_->value, false); }

    template <typename U>
    Tensor<U> cast(bool requires_grad) const {
        std::vector<U> v(node_->value.begin(), node_->value.end());
        return Tensor<U>::from(shape(), std::move(v), requires_grad);
    }

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Op records reachable from a root, inputs before consumers.
template <typename T>
class ComputeGraph {
public:
    static ComputeGraph trace(const Tensor<T>& root);

    std::span<Node<T>* const> nodes() const { return order_; }
    std::size_t size() const { return order_.size(); }

    /// Seeds d(root)/d(root) = 1 and sweeps in reverse order. Gradients
    /// accumulate into leaves. Throws ShapeError if the root is not a scalar.
    void backward();

private:
    std::shared_ptr<Node<T>> root_;
    std::vector<Node<T>*> order_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
    ComputeGraph<T>::trace(loss).backward();
}

/// True when the MLMKIT_CHECK_NAN environment variable is set to non-zero.
bool nan_checks_enabled();

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class ComputeGraph<float>;
extern template class ComputeGraph<double>;

}  // namespace mlmkit::num

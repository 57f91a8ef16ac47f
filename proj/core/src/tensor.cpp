#include "mlmkit/tensor.hpp"

#include <cstdlib>
#include <unordered_set>

#include "mlmkit/error.hpp"

namespace mlmkit::num {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            s += "x";
        }
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one dimension");
    }
    for (std::size_t d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    check_shape(shape);
    auto node = std::make_shared<Node<T>>();
    node->value.assign(num::numel(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
    check_shape(shape);
    if (data.size() != num::numel(shape)) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + to_string(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on a tensor of shape " + to_string(shape()));
    }
    return node_->value[0];
}

template <typename T>
ComputeGraph<T> ComputeGraph<T>::trace(const Tensor<T>& root) {
    ComputeGraph g;
    g.root_ = root.node_ptr();
    // Iterative post-order DFS.
    std::unordered_set<const Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        g.order_.push_back(node);
        stack.pop_back();
    }
    return g;
}

template <typename T>
void ComputeGraph<T>::backward() {
    Node<T>& root = *root_;
    if (root.value.size() != 1) {
        throw ShapeError("backward() needs a scalar loss, got shape " + to_string(root.shape));
    }
    if (!root.requires_grad) {
        return;
    }
    root.ensure_grad();
    root.grad[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node<T>& n = **it;
        if (n.backward) {
            n.ensure_grad();
            for (auto& in : n.inputs) {
                if (in->requires_grad) {
                    in->ensure_grad();
                }
            }
            n.backward(n);
        }
    }
}

bool nan_checks_enabled() {
    static const bool enabled = [] {
        const char* v = std::getenv("MLMKIT_CHECK_NAN");
        return v != nullptr && *v != '\0' && *v != '0';
    }();
    return enabled;
}

template class Tensor<float>;
template class Tensor<double>;
template class ComputeGraph<float>;
template class ComputeGraph<double>;

}  // namespace mlmkit::num

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "dgar/errors.hpp"
#include "dgar/tensor.hpp"

namespace dgar {

// Reverse-mode differentiation over a dynamically recorded computation
// graph. Each op creates a Node holding its output value and a closure that
// scatters the node's gradient into its parents. backward() runs the
// closures in reverse topological order.

template <class S>
struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // may be empty (leaves, constants)
    const char* op = "leaf";

    Tensor<S>& grad_buffer() {
        if (grad.numel() == 0) grad = Tensor<S>(value.shape());
        return grad;
    }
};

// Cheap handle to a graph node.
template <class S>
class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

    static Var constant(Tensor<S> t) {
        auto n = std::make_shared<Node<S>>();
        n->value = std::move(t);
        n->requires_grad = false;
        n->op = "const";
        return Var(n);
    }

    static Var leaf(Tensor<S> t, bool requires_grad) {
        auto n = std::make_shared<Node<S>>();
        n->value = std::move(t);
        n->requires_grad = requires_grad;
        return Var(n);
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor<S>& value() const { return node_->value; }
    const Tensor<S>& grad() const { return node_->grad; }
    std::shared_ptr<Node<S>>& node() { return node_; }
    const std::shared_ptr<Node<S>>& node() const { return node_; }

  private:
    std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <class S>
void topo_sort(Node<S>* root, std::vector<Node<S>*>& order) {
    // Iterative post-order DFS; recursion would overflow on long chains.
    std::unordered_set<Node<S>*> visited;
    std::vector<std::pair<Node<S>*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<S>* p = node->parents[idx++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Propagates d(loss)/d(node) into every node reachable from `loss`.
// The loss must be scalar.
template <class S>
void backward(const Var<S>& loss) {
    if (!loss.defined()) throw NumericError("backward: undefined loss");
    if (!loss.node()->value.is_scalar())
        throw ShapeError("backward: loss must be scalar, got shape " +
                         loss.node()->value.shape_str());
    std::vector<Node<S>*> order;
    detail::topo_sort(loss.node().get(), order);
    loss.node()->grad_buffer().fill(S(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<S>* n = *it;
        if (n->backprop && n->grad.numel() != 0) n->backprop();
    }
}

// A trainable value: tensor, gradient of the same shape, and a flag. The
// gradient is zeroed between optimizer steps.
template <class S>
struct Parameter {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor<S> v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

    void zero_grad() { grad.fill(S(0)); }
};

}  // namespace dgar

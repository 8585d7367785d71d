#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "semadv/tensor.hpp"

namespace semadv::ad {

// Reverse-mode autodiff over a dynamically built graph. Nodes own their
// value; gradients are allocated on demand during backward(). Graphs are
// plain shared_ptr DAGs and die when the last Var referencing them does.
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // pushes this->grad into parents

    Tensor<T>& ensure_grad() {
        if (grad.empty() && value.numel() > 0) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

// Constant view of a value (no gradient ever flows into it).
template <class T>
Var<T> make_const(Tensor<T> value) {
    return make_var(std::move(value), false);
}

// New leaf carrying the same value, cut off from the graph.
template <class T>
Var<T> detach(const Var<T>& v, bool requires_grad = false) {
    return make_var(v->value, requires_grad);
}

template <class T>
void zero_grad(const Var<T>& v) {
    v->grad = Tensor<T>();
}

// Backpropagate from a scalar root. Gradients accumulate (+=) into every
// node with requires_grad on some path from a leaf; call zero_grad on leaves
// between optimization steps.
template <class T>
void backward(const Var<T>& root) {
    if (root->value.numel() != 1) throw std::logic_error("backward: root must be scalar");
    if (!root->requires_grad) return;

    // topo order by DFS
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root.get(), 0});
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx == 0 && seen.count(node)) {
            stack.pop_back();
            continue;
        }
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx].get();
            ++idx;
            if (!seen.count(p) && p->requires_grad) stack.push_back({p, 0});
        } else {
            seen.insert(node);
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior grads are scratch space for this call; only leaves accumulate
    // across backward calls. Without the reset, a second backward over a
    // shared subgraph would re-propagate the first call's contributions.
    for (Node<T>* n : order)
        if (n->backprop) n->grad = Tensor<T>();

    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop(*n);
    }
}

// Helper used by every op: result requires grad iff any parent does.
template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> bp) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(bp);
    return n;
}

}  // namespace semadv::ad

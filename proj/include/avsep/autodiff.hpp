#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "avsep/tensor.hpp"

namespace avsep {

// Reverse-mode automatic differentiation over tensors. Each op returns a node
// holding its output value plus a closure that scatters the node's gradient
// into its inputs. Graphs are built per forward pass and discarded after
// backward. Nodes whose inputs carry no gradient requirement drop both parents
// and closure at construction, so frozen subgraphs stream-release upstream
// buffers as the forward pass advances.

template <typename R>
struct node {
  tensor<R> value;
  tensor<R> grad;  // lazily allocated to value's shape
  std::vector<std::shared_ptr<node>> parents;
  std::function<void(node&)> backprop;
  bool requires_grad = false;
  bool is_leaf = false;
};

template <typename R>
using var = std::shared_ptr<node<R>>;

template <typename R>
var<R> make_leaf(tensor<R> v, bool requires) {
  auto n = std::make_shared<node<R>>();
  n->value = std::move(v);
  n->requires_grad = requires;
  n->is_leaf = true;
  return n;
}

template <typename R>
var<R> constant(tensor<R> v) {
  return make_leaf(std::move(v), false);
}

template <typename R>
var<R> make_op(tensor<R> value, std::vector<var<R>> parents,
               std::function<void(node<R>&)> bp) {
  auto n = std::make_shared<node<R>>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(bp);
  }
  return n;
}

// Gradient buffer of v, allocated on first touch.
template <typename R>
tensor<R>& grad_of(const var<R>& v) {
  if (v->grad.data.empty()) {
    v->grad.shape = v->value.shape;
    v->grad.data.assign(v->value.data.size() ? v->value.data.size()
                                             : size_t(tensor<R>::count(v->value.shape)),
                        R(0));
  }
  return v->grad;
}

template <typename R>
void clear_grad(const var<R>& v) {
  v->grad.shape.clear();
  v->grad.data.clear();
  v->grad.data.shrink_to_fit();
}

template <typename R>
R item(const var<R>& v) {
  check_internal(v->value.numel() == 1, "item: tensor is not scalar");
  return v->value.data[0];
}

// Reverse pass from a scalar root. With free_buffers set (the default for
// training), every non-leaf node's value and gradient storage is released as
// soon as its backprop has run; read any forward values you need before
// calling this.
template <typename R>
void backward(const var<R>& root, bool free_buffers = true) {
  check_internal(root->value.numel() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;

  std::vector<node<R>*> order;
  std::unordered_set<node<R>*> seen;
  std::vector<std::pair<node<R>*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      node<R>* p = n->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  grad_of(root).data[0] = R(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    node<R>* n = *it;
    if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
    // Keep the parents vectors: they own the upstream nodes that later loop
    // iterations still dereference. Only the bulk buffers are released here.
    if (free_buffers && !n->is_leaf) {
      n->value.data.clear();
      n->value.data.shrink_to_fit();
      n->grad.data.clear();
      n->grad.data.shrink_to_fit();
      n->backprop = nullptr;
    }
  }
}

}  // namespace avsep

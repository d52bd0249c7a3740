#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hsd/tensor.hpp"

namespace hsd {

/// Raised when backward() is started from a non-scalar value.
class RankError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <std::floating_point T>
struct Node {
  // Receives the gradient w.r.t. this node's value and adds into the parent
  // gradients. Slots for parents that do not require a gradient are empty.
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, std::vector<Tensor<T>>& grad_parents)>;

  Tensor<T> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

/// Handle to a value recorded in the computation graph.
///
/// Leaves are either constants (inputs, masks) or parameters. Every op
/// returns a new Var whose node links to its operands; the graph lives
/// exactly as long as the Vars that reference it.
template <std::floating_point T>
class Var {
 public:
  Var() : node_(std::make_shared<Node<T>>()) {}

  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }
  static Var constant(Tensor<T> value) { return Var(std::move(value), false); }

  const Tensor<T>& value() const noexcept { return node_->value; }
  // Optimizer access; must not be used while a graph built on this Var is alive
  // and pending backward.
  Tensor<T>& mutable_value() noexcept { return node_->value; }

  const Shape& shape() const noexcept { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t rank() const noexcept { return node_->value.rank(); }
  bool requires_grad() const noexcept { return node_->requires_grad; }

  const Node<T>* id() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  template <std::floating_point U, class F>
  friend Var<U> make_op(Tensor<U> value, std::vector<Var<U>> parents, F&& backward);

  std::shared_ptr<Node<T>> node_;
};

/// Records a primitive application. The backward closure is kept only when
/// some operand requires a gradient; otherwise the result is a constant.
template <std::floating_point T, class F>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, F&& backward) {
  Var<T> out(std::move(value), false);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::forward<F>(backward);
  return out;
}

/// Gradients produced by one backward pass, keyed by graph node.
template <std::floating_point T>
class Gradients {
 public:
  bool contains(const Var<T>& v) const { return grads_.count(v.id()) != 0; }

  // Parameters that did not influence the loss get a zero gradient.
  Tensor<T> operator[](const Var<T>& v) const {
    auto it = grads_.find(v.id());
    if (it == grads_.end()) return Tensor<T>(v.shape());
    return it->second;
  }

  std::unordered_map<const Node<T>*, Tensor<T>>& raw() { return grads_; }

 private:
  std::unordered_map<const Node<T>*, Tensor<T>> grads_;
};

template <std::floating_point T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  // (node, next parent index) frames; iterative so long recurrent chains
  // do not exhaust the stack.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

/// Reverse-mode sweep from a scalar loss. Pure: the graph is not modified,
/// so calling it twice yields identical gradients.
template <std::floating_point T>
Gradients<T> backward(const Var<T>& loss) {
  if (loss.value().size() != 1) {
    throw RankError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Gradients<T> result;
  if (!loss.requires_grad()) return result;

  auto& grads = result.raw();
  auto order = topological_order(loss.node().get());
  Tensor<T> seed(loss.shape(), T{1});
  grads.emplace(loss.id(), std::move(seed));

  std::vector<Tensor<T>> parent_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward) continue;
    auto g = grads.find(node);
    if (g == grads.end()) continue;

    parent_grads.clear();
    for (const auto& p : node->parents) {
      parent_grads.push_back(p->requires_grad ? Tensor<T>(p->value.shape()) : Tensor<T>());
    }
    node->backward(g->second, parent_grads);

    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      if (parent_grads[i].empty()) continue;
      const Node<T>* key = node->parents[i].get();
      auto [slot, inserted] = grads.try_emplace(key, std::move(parent_grads[i]));
      if (!inserted) {
        auto dst = slot->second.data();
        auto src = parent_grads[i].data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }
  return result;
}

}  // namespace hsd

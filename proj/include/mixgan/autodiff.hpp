#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "mixgan/tensor.hpp"

namespace mixgan {

// Reverse-mode autodiff over Tensor, define-by-run. Backward closures build
// their results out of the same differentiable primitives, so grad() with
// create_graph=true yields a graph that can be differentiated again. The
// gradient-penalty term relies on that second differentiation.

class Var;
using BackwardFn = std::function<std::vector<Var>(const Var& upstream)>;

struct VarNode {
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> parents;
  BackwardFn backward;  // empty for leaves
  const char* op = "leaf";
  std::uint64_t id = 0;
};

inline std::uint64_t next_node_id() {
  static thread_local std::uint64_t counter = 0;
  return ++counter;
}

inline bool& grad_mode() {
  static thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : saved_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

struct GradModeGuard {
  explicit GradModeGuard(bool enabled) : saved_(grad_mode()) { grad_mode() = enabled; }
  ~GradModeGuard() { grad_mode() = saved_; }

 private:
  bool saved_;
};

class Var {
 public:
  Var() = default;

  explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<VarNode>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad && grad_mode();
    node_->id = next_node_id();
  }

  static Var leaf(Tensor value, bool requires_grad = false) {
    Var v;
    v.node_ = std::make_shared<VarNode>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = requires_grad;  // parameters stay trainable under NoGrad
    v.node_->id = next_node_id();
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& val() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  real_t item() const { return node_->value.item(); }

  /// Replace the value of a leaf (parameter update). Installs fresh storage,
  /// so tensors captured by older graphs are left untouched.
  void set_value(Tensor value) {
    check(node_ && !node_->backward, "Var::set_value: only leaves can be assigned");
    check_shape(value.shape() == node_->value.shape(), "Var::set_value: shape mismatch");
    node_->value = std::move(value);
  }

  /// Value with the graph edge dropped.
  Var detach() const { return Var::leaf(node_->value, false); }

  VarNode* node_ptr() const { return node_.get(); }

  friend Var make_op(Tensor value, std::vector<Var> parents, BackwardFn backward, const char* op);

 private:
  std::shared_ptr<VarNode> node_;
};

/// Create an op node. Outside grad mode, or when no parent is differentiable,
/// the parents and closure are dropped and a constant leaf is returned.
inline Var make_op(Tensor value, std::vector<Var> parents, BackwardFn backward, const char* op) {
  bool track = grad_mode();
  if (track) {
    track = false;
    for (const auto& p : parents)
      if (p.requires_grad()) {
        track = true;
        break;
      }
  }
  if (!track) return Var::leaf(std::move(value), false);
  Var v;
  v.node_ = std::make_shared<VarNode>();
  v.node_->value = std::move(value);
  v.node_->requires_grad = true;
  v.node_->parents = std::move(parents);
  v.node_->backward = std::move(backward);
  v.node_->op = op;
  v.node_->id = next_node_id();
  return v;
}

inline Var constant(Tensor value) { return Var::leaf(std::move(value), false); }

namespace detail {
inline Var add_accum(const Var& a, const Var& b);  // defined in ops.hpp
}

/// Gradients of `output` with respect to `inputs`.
///
/// The seed is implicitly all-ones over output (callers differentiate scalars
/// or sums). With create_graph=true the returned Vars are themselves
/// differentiable. Inputs unreachable from output get zero gradients.
inline std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, bool create_graph = false) {
  check(output.defined(), "grad: undefined output");
  check(output.requires_grad(), "grad: output does not require grad");

  // Reachable differentiable nodes; node ids increase from parent to child,
  // so descending id order is a topological order.
  std::vector<VarNode*> order;
  std::unordered_map<VarNode*, bool> seen;
  std::vector<VarNode*> stack{output.node_ptr()};
  seen[output.node_ptr()] = true;
  while (!stack.empty()) {
    VarNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      VarNode* pn = p.node_ptr();
      if (pn && pn->requires_grad && !seen[pn]) {
        seen[pn] = true;
        stack.push_back(pn);
      }
    }
  }
  std::sort(order.begin(), order.end(), [](VarNode* a, VarNode* b) { return a->id > b->id; });

  std::unordered_map<VarNode*, Var> grads;
  grads[output.node_ptr()] = create_graph ? Var(Tensor::ones(output.shape()), false)
                                          : constant(Tensor::ones(output.shape()));

  GradModeGuard guard(create_graph);
  for (VarNode* n : order) {
    auto it = grads.find(n);
    if (it == grads.end() || !n->backward) continue;
    const Var upstream = it->second;
    std::vector<Var> parent_grads = n->backward(upstream);
    check(parent_grads.size() == n->parents.size(), "grad: backward arity mismatch");
    for (std::size_t i = 0; i < parent_grads.size(); ++i) {
      const Var& p = n->parents[i];
      if (!p.requires_grad() || !parent_grads[i].defined()) continue;
      auto pit = grads.find(p.node_ptr());
      if (pit == grads.end())
        grads[p.node_ptr()] = parent_grads[i];
      else
        pit->second = detail::add_accum(pit->second, parent_grads[i]);
    }
  }

  std::vector<Var> result;
  result.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto it = grads.find(in.node_ptr());
    if (it != grads.end())
      result.push_back(it->second);
    else
      result.push_back(constant(Tensor::zeros(in.shape())));
  }
  return result;
}

}  // namespace mixgan

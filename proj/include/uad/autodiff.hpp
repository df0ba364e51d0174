#pragma once

// Reverse-mode differentiation over a linear tape.
//
// A Tape records every primitive in execution order, so insertion order is a
// topological order and backward() is a single reverse sweep. Tapes are cheap
// and meant to be rebuilt for every forward pass; a tape must stay on one
// thread. Recorded values are immutable and shared, so constants (weights,
// clean images) enter a tape without copying.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uad/tensor.hpp"

namespace uad {

using NodeId = std::size_t;
using TensorPtr = std::shared_ptr<const Tensor>;

/// A differentiable primitive: a pure forward map plus its vector-Jacobian
/// product. `grad_in[i]` is null for inputs that do not need a gradient.
struct Primitive {
  using Forward = std::function<Tensor(std::span<const Tensor* const> in)>;
  using Backward = std::function<void(std::span<const Tensor* const> in, const Tensor& out,
                                      const Tensor& grad_out, std::span<Tensor* const> grad_in)>;
  std::string name;
  Forward forward;
  Backward backward;
};

class Tape;

/// Handle to a node on a Tape. Copyable; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Gradient table produced by Tape::backward, keyed by node id.
class Gradients {
 public:
  /// Gradient of the loss with respect to `v`. Leaves that require grad but
  /// do not reach the loss get zeros; nodes that never require grad throw.
  const Tensor& operator[](Var v) const;
  const Tensor& operator[](NodeId id) const;
  bool has(NodeId id) const { return id < grads_.size() && !grads_[id].empty(); }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);
  Var constant(TensorPtr value);

  /// Records `prim` applied to `inputs`, evaluating it immediately.
  Var apply(std::shared_ptr<const Primitive> prim, std::initializer_list<Var> inputs);
  Var apply(std::shared_ptr<const Primitive> prim, std::span<const Var> inputs);

  /// Gradients of a single-element loss w.r.t. every node that requires grad.
  Gradients backward(Var loss) const;

  /// Re-runs every recorded primitive from its recorded inputs and reports
  /// whether all outputs come out bit-identical.
  bool replay_matches() const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return *nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::string& op_name(NodeId id) const;

 private:
  struct Node {
    TensorPtr value;
    std::vector<NodeId> inputs;
    std::shared_ptr<const Primitive> prim;  // null for leaves
    bool requires_grad = false;
  };
  Var push(Node node);
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace uad

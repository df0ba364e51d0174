#include "uad/autodiff.hpp"

#include "uad/error.hpp"

namespace uad {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor& Gradients::operator[](Var v) const { return (*this)[v.id()]; }

const Tensor& Gradients::operator[](NodeId id) const {
  if (!has(id)) {
    throw Error("no gradient recorded for node " + std::to_string(id) +
                " (it does not require grad)");
  }
  return grads_[id];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (&v.tape() != this || v.id() >= nodes_.size()) {
    throw Error("variable does not belong to this tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(Node{std::make_shared<const Tensor>(std::move(value)), {}, nullptr, requires_grad});
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::constant(TensorPtr value) { return push(Node{std::move(value), {}, nullptr, false}); }

Var Tape::apply(std::shared_ptr<const Primitive> prim, std::initializer_list<Var> inputs) {
  return apply(std::move(prim), std::span<const Var>(inputs.begin(), inputs.size()));
}

Var Tape::apply(std::shared_ptr<const Primitive> prim, std::span<const Var> inputs) {
  std::vector<const Tensor*> in;
  std::vector<NodeId> ids;
  in.reserve(inputs.size());
  ids.reserve(inputs.size());
  bool needs = false;
  for (const Var& v : inputs) {
    check_owned(v);
    in.push_back(nodes_[v.id()].value.get());
    ids.push_back(v.id());
    needs = needs || nodes_[v.id()].requires_grad;
  }
  auto out = std::make_shared<const Tensor>(prim->forward(in));
  return push(Node{std::move(out), std::move(ids), std::move(prim), needs});
}

const std::string& Tape::op_name(NodeId id) const {
  static const std::string kLeaf = "leaf";
  const auto& n = nodes_.at(id);
  return n.prim ? n.prim->name : kLeaf;
}

Gradients Tape::backward(Var loss) const {
  check_owned(loss);
  if (loss.value().numel() != 1) {
    throw RankError("backward needs a single-element loss, got shape " +
                    shape_str(loss.shape()));
  }
  Gradients g;
  g.grads_.resize(nodes_.size());
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad && !nodes_[i].prim) g.grads_[i] = Tensor(nodes_[i].value->shape());
  }
  if (!nodes_[loss.id()].requires_grad) return g;
  g.grads_[loss.id()] = Tensor(loss.shape(), 1.0);

  std::vector<const Tensor*> in;
  std::vector<Tensor*> gin;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.prim || !n.requires_grad || g.grads_[id].empty()) continue;
    in.clear();
    gin.clear();
    for (NodeId src : n.inputs) {
      in.push_back(nodes_[src].value.get());
      if (nodes_[src].requires_grad) {
        if (g.grads_[src].empty()) g.grads_[src] = Tensor(nodes_[src].value->shape());
        gin.push_back(&g.grads_[src]);
      } else {
        gin.push_back(nullptr);
      }
    }
    n.prim->backward(in, *n.value, g.grads_[id], gin);
    // Interior gradients are not needed once propagated.
    if (n.prim) g.grads_[id] = Tensor();
  }
  g.grads_[loss.id()] = Tensor(loss.shape(), 1.0);
  return g;
}

bool Tape::replay_matches() const {
  std::vector<const Tensor*> in;
  for (const Node& n : nodes_) {
    if (!n.prim) continue;
    in.clear();
    for (NodeId src : n.inputs) in.push_back(nodes_[src].value.get());
    if (n.prim->forward(in) != *n.value) return false;
  }
  return true;
}

}  // namespace uad

#include "icefuse/numkernel/graph.hpp"

#include <string>

#include "icefuse/common/error.hpp"

namespace icefuse::nk {

const Tensor& Var::value() const {
  if (graph == nullptr) throw ContractError("value() on an unbound Var");
  return graph->value(*this);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  return leaf(std::make_shared<const Tensor>(std::move(value)), requires_grad);
}

Var Graph::leaf(std::shared_ptr<const Tensor> value, bool requires_grad) {
  if (!value) throw ContractError("leaf from null tensor");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  return record(std::make_shared<const Tensor>(std::move(value)), std::move(inputs), std::move(backward));
}

Var Graph::record(std::shared_ptr<const Tensor> value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value) throw ContractError("record from null tensor");
  Node n;
  n.value = std::move(value);
  n.is_leaf = false;
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check(v);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return Var{this, nodes_.size() - 1};
}

void Graph::check(Var v) const {
  if (v.graph != this) throw ContractError("Var belongs to a different graph");
  if (v.id >= nodes_.size()) throw ContractError("Var id out of range");
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return *nodes_[v.id].value;
}

bool Graph::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

bool Graph::has_grad(Var v) const {
  check(v);
  return !grads_[v.id].empty();
}

Tensor Graph::grad(Var v) const {
  check(v);
  if (grads_[v.id].empty()) return Tensor(nodes_[v.id].value->shape(), 0.0);
  return grads_[v.id];
}

void Graph::backward(Var loss) {
  check(loss);
  const Node& root = nodes_[loss.id];
  if (root.value->numel() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(root.value->shape()));
  if (!root.requires_grad) return;

  // Interior gradients live only for the duration of this pass; leaf
  // gradients persist and accumulate.
  auto& seed = grads_[loss.id];
  if (seed.empty()) seed = Tensor(root.value->shape(), 0.0);
  seed[0] += 1.0;

  std::vector<Tensor*> input_grads;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.is_leaf || !node.requires_grad || grads_[id].empty()) continue;
    input_grads.clear();
    for (std::size_t in : node.inputs) {
      if (!nodes_[in].requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (grads_[in].empty()) grads_[in] = Tensor(nodes_[in].value->shape(), 0.0);
      input_grads.push_back(&grads_[in]);
    }
    if (node.backward) node.backward(grads_[id], input_grads);
    grads_[id] = Tensor();
  }
}

void Graph::zero_grad() {
  for (auto& g : grads_) g = Tensor();
}

}  // namespace icefuse::nk

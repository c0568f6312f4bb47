#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "icefuse/numkernel/tensor.hpp"

namespace icefuse::nk {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Receives the output gradient and accumulates into the input gradients.
/// input_grads[i] is null when input i does not need a gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

/// Reverse-mode tape. Nodes are stored in creation order, which is also a
/// topological order; backward() walks them in exact reverse. A Graph is
/// single-threaded; independent graphs can be used concurrently.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var leaf(Tensor value, bool requires_grad = false);
  /// Shares an existing buffer instead of copying it (used for large weights).
  Var leaf(std::shared_ptr<const Tensor> value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an operation. `backward` may be empty for non-differentiable ops.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);
  /// Variant for ops whose backward closure needs the output value itself.
  Var record(std::shared_ptr<const Tensor> value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Accumulated gradient of a leaf; a zero tensor if nothing reached it.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad leaf.
  /// Leaf gradients accumulate across calls until zero_grad().
  void backward(Var loss);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<const Tensor> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = true;
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace icefuse::nk

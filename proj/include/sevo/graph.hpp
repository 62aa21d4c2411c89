#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sevo/tensor.hpp"

namespace sevo {

/// A named trainable (or frozen) tensor that outlives any single graph.
template <typename Scalar>
struct Param {
  Param() = default;
  Param(std::string n, Tensor<Scalar> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad = Tensor<Scalar>(value.shape()); }

  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool trainable = true;
};

template <typename Scalar>
class Graph;

/// Handle to a node on a Graph's tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const noexcept { return graph_ != nullptr; }
  std::size_t id() const noexcept { return id_; }
  Graph<Scalar>& graph() const { return *graph_; }

  const Tensor<Scalar>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph<Scalar>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended after their parents, so the tape
/// order is topological and backward walks it once in reverse.
template <typename Scalar>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor<Scalar>& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value);
  Var<Scalar> input(Tensor<Scalar> value, bool requires_grad = true);
  /// Leaf bound to a Param; backward adds into param.grad when it is trainable.
  Var<Scalar> param(Param<Scalar>& p);

  Var<Scalar> record(const char* op, Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents,
                     BackwardFn fn);
  Var<Scalar> record(const char* op, Tensor<Scalar> value, std::span<const Var<Scalar>> parents, BackwardFn fn);

  /// Gradients of a scalar node with respect to every leaf.
  void backward(Var<Scalar> loss);

  const Tensor<Scalar>& value(Var<Scalar> v) const { return node(v).value; }
  /// Gradient after backward(); zeros for constants and unreached nodes.
  Tensor<Scalar> grad(Var<Scalar> v) const;
  bool requires_grad(Var<Scalar> v) const { return node(v).requires_grad; }

  /// Adds g into v's gradient buffer (no-op for constants).
  void accumulate(Var<Scalar> v, const Tensor<Scalar>& g);
  template <typename Expr>
  void accumulate_expr(Var<Scalar> v, const Expr& g);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Hash over op names, shapes and parent links; independent of values.
  std::uint64_t structure_hash() const;

 private:
  struct Node {
    const char* op = "";
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Param<Scalar>* param = nullptr;
  };

  const Node& node(Var<Scalar> v) const;
  Node& node(Var<Scalar> v);
  Node& grad_buffer(Var<Scalar> v);

  std::vector<Node> nodes_;
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
  return graph_->value(*this);
}

template <typename Scalar>
template <typename Expr>
void Graph<Scalar>::accumulate_expr(Var<Scalar> v, const Expr& g) {
  if (!node(v).requires_grad) return;
  Node& n = grad_buffer(v);
  n.grad.array() += g;
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace sevo

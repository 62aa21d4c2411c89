#include "sevo/graph.hpp"

#include <cstring>

#include "sevo/rng.hpp"

namespace sevo {

template <typename Scalar>
const typename Graph<Scalar>::Node& Graph<Scalar>::node(Var<Scalar> v) const {
  if (&v.graph() != this || v.id() >= nodes_.size()) throw ContractError("variable does not belong to this graph");
  return nodes_[v.id()];
}

template <typename Scalar>
typename Graph<Scalar>::Node& Graph<Scalar>::node(Var<Scalar> v) {
  if (&v.graph() != this || v.id() >= nodes_.size()) throw ContractError("variable does not belong to this graph");
  return nodes_[v.id()];
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(Tensor<Scalar> value) {
  return input(std::move(value), false);
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::input(Tensor<Scalar> value, bool requires_grad) {
  Node n;
  n.op = requires_grad ? "input" : "constant";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::param(Param<Scalar>& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(const char* op, Tensor<Scalar> value,
                                  std::initializer_list<Var<Scalar>> parents, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var<Scalar>>(parents.begin(), parents.size()), std::move(fn));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(const char* op, Tensor<Scalar> value, std::span<const Var<Scalar>> parents,
                                  BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const Var<Scalar>& p : parents) {
    if (!p.valid()) continue;
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || node(p).requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
typename Graph<Scalar>::Node& Graph<Scalar>::grad_buffer(Var<Scalar> v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor<Scalar>(n.value.shape());
    n.has_grad = true;
  }
  return n;
}

template <typename Scalar>
void Graph<Scalar>::accumulate(Var<Scalar> v, const Tensor<Scalar>& g) {
  if (!node(v).requires_grad) return;
  Node& n = grad_buffer(v);
  if (g.numel() != n.value.numel()) {
    throw DimensionError(std::string("gradient shape ") + g.shape().str() + " does not match " + n.value.shape().str() +
                         " at op " + n.op);
  }
  n.grad.array() += g.array();
}

template <typename Scalar>
Tensor<Scalar> Graph<Scalar>::grad(Var<Scalar> v) const {
  const Node& n = node(v);
  if (!n.has_grad) return Tensor<Scalar>(n.value.shape());
  return n.grad;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> loss) {
  Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + root.value.shape().str());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<Scalar>();
  }
  if (!root.requires_grad) return;

  grad_buffer(loss).grad.array().setOnes();
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) {
      // The callback may only touch gradient buffers, which never reallocate the tape.
      n.backward(*this, n.grad);
    } else if (n.param != nullptr && n.param->trainable) {
      if (n.param->grad.numel() != n.grad.numel()) n.param->grad = Tensor<Scalar>(n.value.shape());
      n.param->grad.array() += n.grad.array();
    }
  }
}

template <typename Scalar>
std::uint64_t Graph<Scalar>::structure_hash() const {
  std::uint64_t h = fnv1a("graph");
  for (const Node& n : nodes_) {
    h = mix_seed(h ^ fnv1a(n.op));
    for (int a = 0; a < n.value.shape().rank(); ++a) h = mix_seed(h ^ static_cast<std::uint64_t>(n.value.shape()[a]));
    for (std::size_t p : n.parents) h = mix_seed(h ^ (p + 0x51ed27ULL));
  }
  return h;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace sevo

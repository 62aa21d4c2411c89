#pragma once

#include <span>
#include <vector>

#include "sevo/graph.hpp"

namespace sevo {

struct SgdConfig {
  double lr = 1.0;
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

/// Classical (heavy-ball) momentum with L2 weight decay folded into the gradient:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
template <typename Scalar>
class Sgd {
 public:
  Sgd(std::vector<Param<Scalar>*> params, SgdConfig config);

  /// Applies one update from each param's accumulated grad. Frozen params are skipped.
  void step();
  void zero_grad();

  const SgdConfig& config() const noexcept { return config_; }
  const Tensor<Scalar>& velocity(std::size_t i) const { return velocity_.at(i); }

 private:
  std::vector<Param<Scalar>*> params_;
  std::vector<Tensor<Scalar>> velocity_;
  SgdConfig config_;
};

/// Single update on raw tensors; the Sgd class calls this per parameter.
template <typename Scalar>
void sgd_update(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& velocity, const SgdConfig& config);

/// Rescales the trainable gradients so their joint 2-norm is at most max_norm
/// (no-op when max_norm <= 0). Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(std::span<Param<Scalar>* const> params, double max_norm);

extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace sevo

#include "sevo/sgd.hpp"

#include <cmath>

namespace sevo {

template <typename Scalar>
void sgd_update(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& velocity, const SgdConfig& config) {
  if (param.numel() != grad.numel() || param.numel() != velocity.numel()) {
    throw DimensionError("sgd: param " + param.shape().str() + ", grad " + grad.shape().str() + ", velocity " +
                         velocity.shape().str());
  }
  const auto momentum = static_cast<Scalar>(config.momentum);
  const auto decay = static_cast<Scalar>(config.weight_decay);
  const auto lr = static_cast<Scalar>(config.lr);
  velocity.array() = momentum * velocity.array() + grad.array() + decay * param.array();
  param.array() -= lr * velocity.array();
}

template <typename Scalar>
Sgd<Scalar>::Sgd(std::vector<Param<Scalar>*> params, SgdConfig config)
    : params_(std::move(params)), config_(config) {
  velocity_.reserve(params_.size());
  for (const Param<Scalar>* p : params_) velocity_.emplace_back(p->value.shape());
}

template <typename Scalar>
void Sgd<Scalar>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param<Scalar>& p = *params_[i];
    if (!p.trainable) continue;
    sgd_update(p.value, p.grad, velocity_[i], config_);
  }
}

template <typename Scalar>
void Sgd<Scalar>::zero_grad() {
  for (Param<Scalar>* p : params_) p->zero_grad();
}

template <typename Scalar>
double clip_grad_norm(std::span<Param<Scalar>* const> params, double max_norm) {
  double sq = 0.0;
  for (const Param<Scalar>* p : params) {
    if (p->trainable) sq += p->grad.array().template cast<double>().square().sum();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<Scalar>(max_norm / norm);
    for (Param<Scalar>* p : params) {
      if (p->trainable) p->grad.array() *= scale;
    }
  }
  return norm;
}

template class Sgd<float>;
template class Sgd<double>;
template void sgd_update(Tensor<float>&, const Tensor<float>&, Tensor<float>&, const SgdConfig&);
template double clip_grad_norm(std::span<Param<float>* const>, double);
template double clip_grad_norm(std::span<Param<double>* const>, double);
template void sgd_update(Tensor<double>&, const Tensor<double>&, Tensor<double>&, const SgdConfig&);

}  // namespace sevo

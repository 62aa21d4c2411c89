#include "sevo/proto_cluster.hpp"

#include <cmath>

namespace sevo {
namespace {

template <typename Scalar>
void require_bank_channels(const Var<Scalar>& f, const PrototypeBank<Scalar>& bank) {
  require_feature_map(f.value(), "prototype input");
  if (f.value().dim(1) != bank.channels()) {
    throw DimensionError("prototype bank expects " + std::to_string(bank.channels()) + " channels, got " +
                         std::to_string(f.value().dim(1)));
  }
}

template <typename Scalar>
Var<Scalar> assign_from_normalized(Var<Scalar> f_norm, PrototypeBank<Scalar>& bank) {
  Graph<Scalar>& g = f_norm.graph();
  return softmax(conv2d(f_norm, g.param(bank.assign_w), g.param(bank.assign_b), 1, 0), 1);
}

template <typename Scalar>
Var<Scalar> residuals_from_normalized(Var<Scalar> f_norm, Var<Scalar> theta, PrototypeBank<Scalar>& bank) {
  Graph<Scalar>& g = f_norm.graph();
  const Index n = f_norm.value().dim(0);
  Var<Scalar> r = soft_residuals(f_norm, theta, g.param(bank.centers));
  r = l2_normalize(r, 2);
  r = reshape(r, Shape{n, bank.clusters() * bank.channels()});
  return l2_normalize(r, 1);
}

}  // namespace

template <typename Scalar>
PrototypeBank<Scalar> PrototypeBank<Scalar>::init(Index clusters, Index channels, double center_std, Rng& rng,
                                                  const std::string& name) {
  if (clusters < 2) throw ConfigError("proto.k must be at least 2");
  if (channels < 1) throw ConfigError("prototype bank needs at least one channel");
  const Index kc = clusters * channels;
  PrototypeBank b;
  b.centers = Param<Scalar>(name + ".centers", Tensor<Scalar>(Shape{clusters, channels}));
  b.assign_w = Param<Scalar>(name + ".assign_w", Tensor<Scalar>(Shape{clusters, channels, 1, 1}));
  b.assign_b = Param<Scalar>(name + ".assign_b", Tensor<Scalar>(Shape{clusters}));
  b.out_w = Param<Scalar>(name + ".out_w", Tensor<Scalar>(Shape{kc, kc}));
  b.out_b = Param<Scalar>(name + ".out_b", Tensor<Scalar>(Shape{kc}));
  b.fuse_w = Param<Scalar>(name + ".fuse_w", Tensor<Scalar>(Shape{channels, 2 * channels, 1, 1}));
  b.fuse_b = Param<Scalar>(name + ".fuse_b", Tensor<Scalar>(Shape{channels}));

  for (Index i = 0; i < b.centers.value.numel(); ++i) b.centers.value[i] = static_cast<Scalar>(rng.normal(0.0, center_std));
  const double assign_std = 1.0 / std::sqrt(static_cast<double>(channels));
  for (Index i = 0; i < b.assign_w.value.numel(); ++i) b.assign_w.value[i] = static_cast<Scalar>(rng.normal(0.0, assign_std));
  for (Index i = 0; i < kc; ++i) b.out_w.value[i * kc + i] = Scalar(1);
  for (Index c = 0; c < channels; ++c) b.fuse_w.value.at(c, c, 0, 0) = Scalar(1);
  return b;
}

template <typename Scalar>
Var<Scalar> soft_assign(Var<Scalar> f, PrototypeBank<Scalar>& bank) {
  require_bank_channels(f, bank);
  return assign_from_normalized(l2_normalize(f, 1), bank);
}

template <typename Scalar>
Var<Scalar> weighted_residuals(Var<Scalar> f, Var<Scalar> theta, PrototypeBank<Scalar>& bank) {
  require_bank_channels(f, bank);
  return residuals_from_normalized(l2_normalize(f, 1), theta, bank);
}

template <typename Scalar>
Var<Scalar> project_prototypes(Var<Scalar> residuals, PrototypeBank<Scalar>& bank, Index h, Index w) {
  Graph<Scalar>& g = residuals.graph();
  const Index n = residuals.value().dim(0);
  Var<Scalar> y = linear(residuals, g.param(bank.out_w), g.param(bank.out_b));
  y = reshape(y, Shape{n, bank.clusters(), bank.channels()});
  return broadcast_spatial(mean_axis(y, 1), h, w);
}

template <typename Scalar>
Var<Scalar> enhance(Var<Scalar> f, PrototypeBank<Scalar>& bank) {
  require_bank_channels(f, bank);
  Graph<Scalar>& g = f.graph();
  Var<Scalar> f_norm = l2_normalize(f, 1);
  Var<Scalar> theta = assign_from_normalized(f_norm, bank);
  Var<Scalar> r = residuals_from_normalized(f_norm, theta, bank);
  Var<Scalar> protos = project_prototypes(r, bank, f.value().dim(2), f.value().dim(3));
  return conv2d(concat_channels(f, protos), g.param(bank.fuse_w), g.param(bank.fuse_b), 1, 0);
}

#define SEVO_INSTANTIATE_PROTO(T)                                              \
  template struct PrototypeBank<T>;                                            \
  template Var<T> soft_assign(Var<T>, PrototypeBank<T>&);                      \
  template Var<T> weighted_residuals(Var<T>, Var<T>, PrototypeBank<T>&);       \
  template Var<T> project_prototypes(Var<T>, PrototypeBank<T>&, Index, Index); \
  template Var<T> enhance(Var<T>, PrototypeBank<T>&);
SEVO_INSTANTIATE_PROTO(float)
SEVO_INSTANTIATE_PROTO(double)

}  // namespace sevo

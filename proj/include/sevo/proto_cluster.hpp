#pragma once

#include <string>
#include <vector>

#include "sevo/ops.hpp"
#include "sevo/rng.hpp"

namespace sevo {

/// Learnable prototypes with soft assignment (NetVLAD-style residual
/// aggregation) and the layers that turn the aggregate back into a feature map.
template <typename Scalar>
struct PrototypeBank {
  Param<Scalar> centers;      // (K, C)
  Param<Scalar> assign_w;     // (K, C, 1, 1)
  Param<Scalar> assign_b;     // (K)
  Param<Scalar> out_w;        // (K*C, K*C)
  Param<Scalar> out_b;        // (K*C)
  Param<Scalar> fuse_w;       // (C, 2C, 1, 1)
  Param<Scalar> fuse_b;       // (C)

  Index clusters() const { return centers.value.dim(0); }
  Index channels() const { return centers.value.dim(1); }

  /// Centers ~ N(0, center_std); assignment conv ~ N(0, 1/sqrt(C)); identity
  /// output layer; fuse conv selecting the first C (input) channels.
  static PrototypeBank init(Index clusters, Index channels, double center_std, Rng& rng,
                            const std::string& name = "proto");

  std::vector<Param<Scalar>*> params() { return {&centers, &assign_w, &assign_b, &out_w, &out_b, &fuse_w, &fuse_b}; }
};

/// theta = softmax over K of assign_conv(L2-normalized f). Returns (N, K, H, W).
template <typename Scalar>
Var<Scalar> soft_assign(Var<Scalar> f, PrototypeBank<Scalar>& bank);

/// Assignment-weighted residuals (feature minus center) summed over pixels,
/// L2-normalized per cluster, flattened to (N, K*C), then L2-normalized per sample.
template <typename Scalar>
Var<Scalar> weighted_residuals(Var<Scalar> f, Var<Scalar> theta, PrototypeBank<Scalar>& bank);

/// Output layer on (N, K*C), reshaped to (N, K, C), averaged over K and
/// broadcast to every pixel of an (H, W) grid.
template <typename Scalar>
Var<Scalar> project_prototypes(Var<Scalar> residuals, PrototypeBank<Scalar>& bank, Index h, Index w);

/// Prototype-enhanced map: fuse_conv(concat(f, projected prototypes)). Same shape as f.
template <typename Scalar>
Var<Scalar> enhance(Var<Scalar> f, PrototypeBank<Scalar>& bank);

}  // namespace sevo

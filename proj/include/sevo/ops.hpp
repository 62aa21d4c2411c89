#pragma once

#include <span>
#include <vector>

#include "sevo/graph.hpp"

// Differentiable operators. Each records its forward value on the operands'
// graph together with an analytic backward rule.

namespace sevo {

inline constexpr double kNormEps = 1e-8;

template <typename Scalar> Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);
/// scale * a + shift, with scalar constants.
template <typename Scalar> Var<Scalar> affine(Var<Scalar> a, double scale, double shift = 0.0);
template <typename Scalar> Var<Scalar> sum(Var<Scalar> a);
template <typename Scalar> Var<Scalar> mean(Var<Scalar> a);
template <typename Scalar> Var<Scalar> relu(Var<Scalar> a);
template <typename Scalar> Var<Scalar> softplus(Var<Scalar> a);

template <typename Scalar> Var<Scalar> reshape(Var<Scalar> a, const Shape& shape);

/// 2-D convolution. x: (N, Ci, H, W), weight: (Co, Ci, kh, kw), bias: (Co) or an invalid Var.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, int stride = 1, int padding = 0);

/// x: (N, in), weight: (out, in), bias: (out) or invalid. Returns x W^T + b.
template <typename Scalar> Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias);

template <typename Scalar> Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b);

/// Adaptive average pooling with floor/ceil window bounds; also upsamples by replication.
template <typename Scalar> Var<Scalar> adaptive_avg_pool2d(Var<Scalar> x, Index out_h, Index out_w);

/// (N, C) -> (N, C, H, W) by copying each vector to every pixel.
template <typename Scalar> Var<Scalar> broadcast_spatial(Var<Scalar> x, Index h, Index w);

/// Mean along an axis, which is removed from the shape.
template <typename Scalar> Var<Scalar> mean_axis(Var<Scalar> x, int axis);

template <typename Scalar> Var<Scalar> softmax(Var<Scalar> x, int axis);

/// x / max(||x||, eps) along an axis.
template <typename Scalar> Var<Scalar> l2_normalize(Var<Scalar> x, int axis, double eps = kNormEps);

/// Per-channel standardization over batch x H x W with std = sqrt(var + eps).
template <typename Scalar> Var<Scalar> normalize_channels(Var<Scalar> x, double eps = kStatsEps);

/// out[:, c] = scale[c] * x[:, c] + shift[c].
template <typename Scalar> Var<Scalar> channel_affine(Var<Scalar> x, Var<Scalar> scale, Var<Scalar> shift);

/// Mean over batch and pixels of cos(proj * a[n, :, h, w], b).
/// a: (N, C, H, W), b: (D), proj: (D, C). Positions with a zero-norm
/// projection contribute similarity 0.
template <typename Scalar> Var<Scalar> cosine_sim_map(Var<Scalar> a, Var<Scalar> b, Var<Scalar> proj);

/// Mean over batch and pixels of the channelwise cosine between two same-shape maps.
template <typename Scalar> Var<Scalar> map_similarity(Var<Scalar> a, Var<Scalar> b);

/// r[n, k, :] = sum_p theta[n, k, p] * (f[n, :, p] - centers[k, :]).
/// f: (N, C, H, W), theta: (N, K, H, W), centers: (K, C). Returns (N, K, C).
template <typename Scalar> Var<Scalar> soft_residuals(Var<Scalar> f, Var<Scalar> theta, Var<Scalar> centers);

/// Scalars -> (1, n) row.
template <typename Scalar> Var<Scalar> stack(std::span<const Var<Scalar>> scalars);

/// Mean negative log-likelihood of integer labels under softmax(logits), logits (N, K).
template <typename Scalar> Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const int> labels);

}  // namespace sevo

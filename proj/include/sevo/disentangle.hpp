#pragma once

#include <string>
#include <vector>

#include "sevo/ops.hpp"
#include "sevo/rng.hpp"

namespace sevo {

/// Two 3x3 convolutions C -> 2C -> C with a softplus in between; padding keeps H x W.
///
/// The hidden width is 2C so the block can represent the identity exactly:
/// with first-layer taps [I; -I] and second-layer taps [I, -I],
/// softplus(x) - softplus(-x) = x.
template <typename Scalar>
struct Extractor {
  Param<Scalar> w1, b1, w2, b2;

  Index channels() const { return w2.value.dim(0); }

  /// Identity taps plus N(0, noise_std) on every weight.
  static Extractor identity(Index channels, double noise_std, Rng& rng, const std::string& name = "extractor");
  static Extractor zeros(Index channels, const std::string& name = "extractor");
  static Extractor random(Index channels, double stddev, Rng& rng, const std::string& name = "extractor");

  Var<Scalar> operator()(Var<Scalar> x);
  std::vector<Param<Scalar>*> params() { return {&w1, &b1, &w2, &b2}; }
};

template <typename Scalar>
struct DisentangledPair {
  Var<Scalar> style;
  Var<Scalar> content;
  Var<Scalar> source;
};

/// F_s = E_style(F_1), F_c = E_content(F_1).
template <typename Scalar>
DisentangledPair<Scalar> split(Var<Scalar> f1, Extractor<Scalar>& style_extractor,
                               Extractor<Scalar>& content_extractor);

/// Contrastive decoupling loss with temperature tau:
///   -log( exp(sim(F1,Fs)/tau) / (exp(sim(F1,Fs)/tau) + exp(sim(F1,Fc)/tau)) )
template <typename Scalar>
Var<Scalar> loss_d(const DisentangledPair<Scalar>& pair, double tau = 1.0);

/// Same loss from precomputed similarities (scalar Vars).
template <typename Scalar>
Var<Scalar> loss_d_from_similarities(Var<Scalar> sim_style, Var<Scalar> sim_content, double tau);

/// 1 - sim(style features, source-domain text).
template <typename Scalar>
Var<Scalar> loss_sc(Var<Scalar> style_feats, Var<Scalar> source_text, Var<Scalar> proj);

/// Brings prototype-enhanced high-level features onto the content features'
/// grid: adaptive average pooling to (H, W), then a fixed 1x1 channel map.
template <typename Scalar>
struct DimensionMatcher {
  Param<Scalar> channel_map;  // (C_out, C_in, 1, 1), frozen
  Index out_h = 0;
  Index out_w = 0;

  /// Random map with N(0, 1/C_in) entries, never trained.
  static DimensionMatcher random(Index in_channels, Index out_channels, Index out_h, Index out_w, Rng& rng);

  Var<Scalar> operator()(Var<Scalar> high_level);
};

/// 1 - sim(Down(F_p), F_c).
template <typename Scalar>
Var<Scalar> loss_gc(Var<Scalar> prototype_feats, Var<Scalar> content_feats, DimensionMatcher<Scalar>& matcher);

/// Merges the styled and content streams: 1x1 conv of their sum.
template <typename Scalar>
struct Fuse {
  Param<Scalar> weight;  // (C, C, 1, 1)
  Param<Scalar> bias;    // (C)

  /// Weight 0.5 * I, zero bias: the mean of the two streams.
  static Fuse identity(Index channels, const std::string& name = "fuse");

  Var<Scalar> operator()(Var<Scalar> styled, Var<Scalar> content);
  std::vector<Param<Scalar>*> params() { return {&weight, &bias}; }
};

}  // namespace sevo

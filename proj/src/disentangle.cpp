#include "sevo/disentangle.hpp"

#include <array>
#include <cmath>

namespace sevo {
namespace {

template <typename Scalar>
Tensor<Scalar> gaussian(const Shape& shape, double stddev, Rng& rng) {
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
  return t;
}

}  // namespace

template <typename Scalar>
Extractor<Scalar> Extractor<Scalar>::zeros(Index channels, const std::string& name) {
  return {Param<Scalar>(name + ".w1", Tensor<Scalar>(Shape{2 * channels, channels, 3, 3})),
          Param<Scalar>(name + ".b1", Tensor<Scalar>(Shape{2 * channels})),
          Param<Scalar>(name + ".w2", Tensor<Scalar>(Shape{channels, 2 * channels, 3, 3})),
          Param<Scalar>(name + ".b2", Tensor<Scalar>(Shape{channels}))};
}

template <typename Scalar>
Extractor<Scalar> Extractor<Scalar>::identity(Index channels, double noise_std, Rng& rng, const std::string& name) {
  Extractor e = zeros(channels, name);
  for (Index c = 0; c < channels; ++c) {
    e.w1.value.at(c, c, 1, 1) = Scalar(1);
    e.w1.value.at(channels + c, c, 1, 1) = Scalar(-1);
    e.w2.value.at(c, c, 1, 1) = Scalar(1);
    e.w2.value.at(c, channels + c, 1, 1) = Scalar(-1);
  }
  if (noise_std > 0.0) {
    e.w1.value.array() += gaussian<Scalar>(e.w1.value.shape(), noise_std, rng).array();
    e.w2.value.array() += gaussian<Scalar>(e.w2.value.shape(), noise_std, rng).array();
  }
  return e;
}

template <typename Scalar>
Extractor<Scalar> Extractor<Scalar>::random(Index channels, double stddev, Rng& rng, const std::string& name) {
  Extractor e = zeros(channels, name);
  for (Param<Scalar>* p : e.params()) p->value = gaussian<Scalar>(p->value.shape(), stddev, rng);
  return e;
}

template <typename Scalar>
Var<Scalar> Extractor<Scalar>::operator()(Var<Scalar> x) {
  Graph<Scalar>& g = x.graph();
  Var<Scalar> h = softplus(conv2d(x, g.param(w1), g.param(b1), 1, 1));
  return conv2d(h, g.param(w2), g.param(b2), 1, 1);
}

template <typename Scalar>
DisentangledPair<Scalar> split(Var<Scalar> f1, Extractor<Scalar>& style_extractor,
                               Extractor<Scalar>& content_extractor) {
  return {style_extractor(f1), content_extractor(f1), f1};
}

template <typename Scalar>
Var<Scalar> loss_d_from_similarities(Var<Scalar> sim_style, Var<Scalar> sim_content, double tau) {
  if (!(tau > 0.0)) throw ConfigError("disentangle.tau must be positive");
  const std::array<Var<Scalar>, 2> logits{affine(sim_style, 1.0 / tau), affine(sim_content, 1.0 / tau)};
  const std::array<int, 1> positive{0};
  return cross_entropy(stack(std::span<const Var<Scalar>>(logits)), std::span<const int>(positive));
}

template <typename Scalar>
Var<Scalar> loss_d(const DisentangledPair<Scalar>& pair, double tau) {
  return loss_d_from_similarities(map_similarity(pair.source, pair.style), map_similarity(pair.source, pair.content),
                                  tau);
}

template <typename Scalar>
Var<Scalar> loss_sc(Var<Scalar> style_feats, Var<Scalar> source_text, Var<Scalar> proj) {
  return affine(cosine_sim_map(style_feats, source_text, proj), -1.0, 1.0);
}

template <typename Scalar>
DimensionMatcher<Scalar> DimensionMatcher<Scalar>::random(Index in_channels, Index out_channels, Index out_h,
                                                          Index out_w, Rng& rng) {
  DimensionMatcher m;
  m.channel_map = Param<Scalar>("matcher.channel_map",
                                gaussian<Scalar>(Shape{out_channels, in_channels, 1, 1},
                                                 1.0 / std::sqrt(static_cast<double>(in_channels)), rng),
                                false);
  m.out_h = out_h;
  m.out_w = out_w;
  return m;
}

template <typename Scalar>
Var<Scalar> DimensionMatcher<Scalar>::operator()(Var<Scalar> high_level) {
  Var<Scalar> pooled = adaptive_avg_pool2d(high_level, out_h, out_w);
  return conv2d(pooled, high_level.graph().param(channel_map), Var<Scalar>{}, 1, 0);
}

template <typename Scalar>
Var<Scalar> loss_gc(Var<Scalar> prototype_feats, Var<Scalar> content_feats, DimensionMatcher<Scalar>& matcher) {
  return affine(map_similarity(matcher(prototype_feats), content_feats), -1.0, 1.0);
}

template <typename Scalar>
Fuse<Scalar> Fuse<Scalar>::identity(Index channels, const std::string& name) {
  Fuse f{Param<Scalar>(name + ".weight", Tensor<Scalar>(Shape{channels, channels, 1, 1})),
         Param<Scalar>(name + ".bias", Tensor<Scalar>(Shape{channels}))};
  for (Index c = 0; c < channels; ++c) f.weight.value.at(c, c, 0, 0) = Scalar(0.5);
  return f;
}

template <typename Scalar>
Var<Scalar> Fuse<Scalar>::operator()(Var<Scalar> styled, Var<Scalar> content) {
  Graph<Scalar>& g = styled.graph();
  return conv2d(add(styled, content), g.param(weight), g.param(bias), 1, 0);
}

#define SEVO_INSTANTIATE_DISENTANGLE(T)                                                       \
  template struct Extractor<T>;                                                               \
  template struct DimensionMatcher<T>;                                                        \
  template struct Fuse<T>;                                                                    \
  template DisentangledPair<T> split(Var<T>, Extractor<T>&, Extractor<T>&);                   \
  template Var<T> loss_d(const DisentangledPair<T>&, double);                                 \
  template Var<T> loss_d_from_similarities(Var<T>, Var<T>, double);                           \
  template Var<T> loss_sc(Var<T>, Var<T>, Var<T>);                                            \
  template Var<T> loss_gc(Var<T>, Var<T>, DimensionMatcher<T>&);
SEVO_INSTANTIATE_DISENTANGLE(float)
SEVO_INSTANTIATE_DISENTANGLE(double)

}  // namespace sevo

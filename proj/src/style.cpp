#include "sevo/style.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace sevo {

template <typename Scalar>
StyleParams<Scalar> StyleParams<Scalar>::identity(Index channels, std::string provenance) {
  return {Vector<Scalar>::Zero(channels), Vector<Scalar>::Ones(channels), std::move(provenance)};
}

template <typename Scalar>
void StyleParams<Scalar>::validate() const {
  if (mu.size() != sigma.size()) throw DimensionError("style mu and sigma lengths differ");
  if (!mu.allFinite() || !sigma.allFinite()) throw ConfigError("style parameters must be finite");
  if ((sigma.array() <= Scalar(0)).any()) throw ConfigError("style sigma must be positive");
}

void StyleBank::append(StyleParams<float> params) {
  params.validate();
  if (channels_ == 0) channels_ = params.channels();
  if (params.channels() != channels_) {
    throw DimensionError("style has " + std::to_string(params.channels()) + " channels, bank holds " +
                         std::to_string(channels_));
  }
  entries_.push_back(std::move(params));
}

std::uint64_t StyleBank::checksum() const {
  std::uint64_t h = fnv1a("style-bank");
  auto mix_floats = [&h](const Vector<float>& v) {
    for (Index i = 0; i < v.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &v[i], sizeof bits);
      h = mix_seed(h ^ bits);
    }
  };
  for (const StyleParams<float>& e : entries_) {
    h = mix_seed(h ^ fnv1a(e.provenance));
    mix_floats(e.mu);
    mix_floats(e.sigma);
  }
  return h;
}

const StyleParams<float>& sample_style(const StyleBank& bank, Rng& rng) {
  if (bank.empty()) throw StateError("cannot sample from an empty style bank");
  return bank[rng.index(bank.size())];
}

const StyleParams<float>& sample_style(const StyleBank& bank, std::uint64_t seed) {
  Rng rng(seed);
  return sample_style(bank, rng);
}

template <typename Scalar>
Var<Scalar> normalize(Var<Scalar> source_feats) {
  return normalize_channels(source_feats, kStatsEps);
}

template <typename Scalar>
Var<Scalar> apply_style(Var<Scalar> normalized, Var<Scalar> mu, Var<Scalar> sigma) {
  return channel_affine(normalized, sigma, mu);
}

template <typename Scalar>
Var<Scalar> apply_style(Var<Scalar> normalized, const StyleParams<Scalar>& style) {
  Graph<Scalar>& g = normalized.graph();
  return apply_style(normalized, g.constant(vector_to_tensor(style.mu)), g.constant(vector_to_tensor(style.sigma)));
}

template <typename Scalar>
Var<Scalar> loss_tc(Var<Scalar> styled, Var<Scalar> text, Var<Scalar> proj) {
  return affine(cosine_sim_map(styled, text, proj), -1.0, 1.0);
}

Matrix<float> random_orthonormal_projection(Index dim, Index channels, std::uint64_t seed) {
  if (dim <= 0 || channels <= 0) throw DimensionError("projection extents must be positive");
  Rng rng(seed);
  const Index rows = std::max(dim, channels), cols = std::min(dim, channels);
  Eigen::MatrixXd gauss(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  // Fix signs so the factorization is unique.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Index j = 0; j < cols; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Matrix<float> out = (dim >= channels ? q : Eigen::MatrixXd(q.transpose())).cast<float>();
  return out;
}

template <typename Scalar>
Tensor<Scalar> matrix_to_tensor(const Matrix<Scalar>& m) {
  Tensor<Scalar> t(Shape{m.rows(), m.cols()});
  MatrixMap<Scalar>(t.data(), m.rows(), m.cols()) = m;
  return t;
}

template <typename Scalar>
Tensor<Scalar> vector_to_tensor(const Vector<Scalar>& v) {
  return Tensor<Scalar>(Shape{v.size()}, v.array());
}

std::vector<Tensor<float>> split_batches(const Tensor<float>& feats, Index batch) {
  require_feature_map(feats, "split_batches");
  if (batch <= 0) throw ConfigError("batch size must be positive");
  const Index n = feats.dim(0), per = feats.numel() / std::max<Index>(n, 1);
  std::vector<Tensor<float>> out;
  for (Index start = 0; start < n; start += batch) {
    const Index take = std::min(batch, n - start);
    Tensor<float> t(Shape{take, feats.dim(1), feats.dim(2), feats.dim(3)});
    std::copy_n(feats.data() + start * per, take * per, t.data());
    out.push_back(std::move(t));
  }
  return out;
}

StyleTrainResult train_style_params(const Embedding& text, std::span<const Tensor<float>> source_feats,
                                    const Matrix<float>& proj, const StyleTrainConfig& config,
                                    std::string provenance) {
  if (source_feats.empty()) throw ConfigError("style training needs at least one source feature map");
  if (config.steps < 0) throw ConfigError("style.steps must be non-negative");
  const Index channels = source_feats.front().dim(1);
  if (proj.rows() != text.size() || proj.cols() != channels) {
    throw DimensionError("projection must map " + std::to_string(channels) + " channels to " +
                         std::to_string(text.size()) + " text dims");
  }

  // Normalized features do not depend on the style, so compute them once.
  std::vector<Tensor<float>> normalized;
  normalized.reserve(source_feats.size());
  for (const Tensor<float>& f : source_feats) {
    require_feature_map(f, "style training features");
    if (f.dim(1) != channels) throw DimensionError("source feature maps disagree on channel count");
    Graph<float> g;
    normalized.push_back(normalize(g.constant(f)).value());
  }

  const StyleParams<float> init = StyleParams<float>::identity(channels);
  Param<float> mu("style.mu", vector_to_tensor(init.mu));
  Param<float> sigma("style.sigma", vector_to_tensor(init.sigma));
  Sgd<float> opt({&mu, &sigma}, config.sgd);
  const Tensor<float> text_t = vector_to_tensor(Vector<float>(text));
  const Tensor<float> proj_t = matrix_to_tensor(proj);

  auto evaluate = [&](const Tensor<float>& feats, bool with_grad) {
    Graph<float> g;
    Var<float> styled = apply_style(g.constant(feats), g.param(mu), g.param(sigma));
    Var<float> loss = loss_tc(styled, g.constant(text_t), g.constant(proj_t));
    if (with_grad) g.backward(loss);
    return static_cast<double>(loss.value().item());
  };

  StyleTrainResult result;
  result.losses.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    opt.zero_grad();
    const Tensor<float>& feats = normalized[static_cast<std::size_t>(step) % normalized.size()];
    result.losses.push_back(evaluate(feats, true));
    opt.step();
    sigma.value.array() = sigma.value.array().max(static_cast<float>(kSigmaFloor));
  }
  result.final_loss = evaluate(normalized.front(), false);
  result.params.mu = Eigen::Map<const Vector<float>>(mu.value.data(), channels);
  result.params.sigma = Eigen::Map<const Vector<float>>(sigma.value.data(), channels);
  result.params.provenance = std::move(provenance);
  return result;
}

template struct StyleParams<float>;
template struct StyleParams<double>;
#define SEVO_INSTANTIATE_STYLE(T)                                              \
  template Var<T> normalize(Var<T>);                                           \
  template Var<T> apply_style(Var<T>, Var<T>, Var<T>);                         \
  template Var<T> apply_style(Var<T>, const StyleParams<T>&);                  \
  template Var<T> loss_tc(Var<T>, Var<T>, Var<T>);                             \
  template Tensor<T> matrix_to_tensor(const Matrix<T>&);                       \
  template Tensor<T> vector_to_tensor(const Vector<T>&);
SEVO_INSTANTIATE_STYLE(float)
SEVO_INSTANTIATE_STYLE(double)

}  // namespace sevo

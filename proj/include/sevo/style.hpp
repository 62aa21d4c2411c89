#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sevo/ops.hpp"
#include "sevo/prompt_chain.hpp"
#include "sevo/rng.hpp"
#include "sevo/sgd.hpp"

namespace sevo {

inline constexpr double kSigmaFloor = 1e-4;

/// One learned style: per-channel shift (mu) and scale (sigma).
template <typename Scalar>
struct StyleParams {
  Vector<Scalar> mu;
  Vector<Scalar> sigma;
  std::string provenance;

  /// The identity style (mu = 0, sigma = 1).
  static StyleParams identity(Index channels, std::string provenance = {});

  Index channels() const noexcept { return mu.size(); }
  /// Throws DimensionError on length mismatch, ConfigError on sigma <= 0 or non-finite values.
  void validate() const;
};

/// Append-only collection of learned styles sampled during transfer training.
class StyleBank {
 public:
  StyleBank() = default;
  explicit StyleBank(Index channels) : channels_(channels) {}

  void append(StyleParams<float> params);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  Index channels() const noexcept { return channels_; }
  const StyleParams<float>& operator[](std::size_t i) const { return entries_.at(i); }
  std::span<const StyleParams<float>> entries() const noexcept { return entries_; }

  /// Order-sensitive hash of every stored bit.
  std::uint64_t checksum() const;

 private:
  Index channels_ = 0;
  std::vector<StyleParams<float>> entries_;
};

/// Uniform draw; throws StateError on an empty bank.
const StyleParams<float>& sample_style(const StyleBank& bank, Rng& rng);
const StyleParams<float>& sample_style(const StyleBank& bank, std::uint64_t seed);

/// (x - mean_c) / std_c with batch x H x W channel statistics.
template <typename Scalar>
Var<Scalar> normalize(Var<Scalar> source_feats);

/// sigma[c] * x + mu[c].
template <typename Scalar>
Var<Scalar> apply_style(Var<Scalar> normalized, Var<Scalar> mu, Var<Scalar> sigma);

/// Convenience overload binding the style as constants.
template <typename Scalar>
Var<Scalar> apply_style(Var<Scalar> normalized, const StyleParams<Scalar>& style);

/// Text-visual consistency: 1 - cosine_sim_map(styled, text, proj), in [0, 2].
template <typename Scalar>
Var<Scalar> loss_tc(Var<Scalar> styled, Var<Scalar> text, Var<Scalar> proj);

/// Random matrix of shape (dim, channels) with orthonormal columns (orthonormal rows when dim < channels).
Matrix<float> random_orthonormal_projection(Index dim, Index channels, std::uint64_t seed);

template <typename Scalar>
Tensor<Scalar> matrix_to_tensor(const Matrix<Scalar>& m);
template <typename Scalar>
Tensor<Scalar> vector_to_tensor(const Vector<Scalar>& v);

struct StyleTrainConfig {
  int steps = 500;
  SgdConfig sgd{1.0, 0.9, 0.0005};
  Index batch = 2;
};

struct StyleTrainResult {
  StyleParams<float> params;
  /// Loss evaluated before each update (size == steps).
  std::vector<double> losses;
  /// Loss of the returned parameters on the first feature batch.
  double final_loss = 0.0;
};

/// Learns (mu, sigma) from the identity style by minimizing loss_tc over
/// normalize -> apply_style, cycling through `source_feats` one map per step.
/// sigma is clamped to >= 1e-4 after every update.
StyleTrainResult train_style_params(const Embedding& text, std::span<const Tensor<float>> source_feats,
                                    const Matrix<float>& proj, const StyleTrainConfig& config,
                                    std::string provenance = {});

/// Splits a (N, C, H, W) map into consecutive batches of `batch` samples (the last may be shorter).
std::vector<Tensor<float>> split_batches(const Tensor<float>& feats, Index batch);

}  // namespace sevo

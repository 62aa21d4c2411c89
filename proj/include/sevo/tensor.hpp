#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>

#include "sevo/errors.hpp"

namespace sevo {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

/// Row-major extents, rank 0 to 4. Rank 0 holds one element.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<Index> dims);

  int rank() const noexcept { return rank_; }
  Index operator[](int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  Index numel() const noexcept;

  bool operator==(const Shape& other) const noexcept;
  bool operator!=(const Shape& other) const noexcept { return !(*this == other); }

  std::string str() const;

 private:
  std::array<Index, kMaxRank> dims_{};
  int rank_ = 0;
};

/// Dense row-major tensor backed by an Eigen array. Feature maps are (N, C, H, W).
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.numel())) {}
  Tensor(const Shape& shape, Array data);
  Tensor(const Shape& shape, std::initializer_list<Scalar> values);

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor constant(const Shape& shape, Scalar value) {
    return Tensor(shape, Array::Constant(shape.numel(), value));
  }
  static Tensor scalar(Scalar value) { return constant(Shape{}, value); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return shape_.rank(); }
  Index dim(int axis) const { return shape_[axis]; }
  Index numel() const noexcept { return data_.size(); }

  Array& array() noexcept { return data_; }
  const Array& array() const noexcept { return data_; }
  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& at(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  Scalar at(Index n, Index c, Index h, Index w) const { return data_[offset(n, c, h, w)]; }

  /// Value of a rank-0 (or single-element) tensor.
  Scalar item() const;

  /// Same data viewed with a new shape of equal element count.
  Tensor reshaped(const Shape& shape) const;

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  Array data_;
};

/// Per-channel statistics of a feature map over batch x height x width.
template <typename Scalar>
struct ChannelStats {
  Vector<Scalar> mean;
  Vector<Scalar> std;
};

inline constexpr double kStatsEps = 1e-5;

/// Channel mean and sqrt(population variance + eps). Accumulates in double.
template <typename Scalar>
ChannelStats<Scalar> channel_stats(const Tensor<Scalar>& x, double eps = kStatsEps);

/// Throws DimensionError unless x is rank 4.
template <typename Scalar>
void require_feature_map(const Tensor<Scalar>& x, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace sevo

#include "sevo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sevo {

const char* to_string(ParseErrorKind kind) noexcept {
  switch (kind) {
    case ParseErrorKind::BadMagic: return "bad magic";
    case ParseErrorKind::UnsupportedVersion: return "unsupported version";
    case ParseErrorKind::TruncatedHeader: return "truncated header";
    case ParseErrorKind::TruncatedRecord: return "truncated record";
    case ParseErrorKind::DuplicateName: return "duplicate name";
    case ParseErrorKind::DimMismatch: return "dimension mismatch";
    case ParseErrorKind::TrailingBytes: return "trailing bytes";
    case ParseErrorKind::InvalidValue: return "invalid value";
    case ParseErrorKind::Io: return "i/o error";
  }
  return "unknown";
}

ParseError::ParseError(ParseErrorKind kind, std::uint64_t offset, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + " at byte " + std::to_string(offset) + ": " + detail),
      kind_(kind),
      offset_(offset) {}

Shape::Shape(std::initializer_list<Index> dims) {
  if (dims.size() > static_cast<std::size_t>(kMaxRank)) {
    throw DimensionError("tensor rank above 4");
  }
  for (Index d : dims) {
    if (d < 0) throw DimensionError("negative extent");
    dims_[static_cast<std::size_t>(rank_++)] = d;
  }
}

Index Shape::numel() const noexcept {
  Index n = 1;
  for (int i = 0; i < rank_; ++i) n *= dims_[static_cast<std::size_t>(i)];
  return n;
}

bool Shape::operator==(const Shape& other) const noexcept {
  if (rank_ != other.rank_) return false;
  return std::equal(dims_.begin(), dims_.begin() + rank_, other.dims_.begin());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < rank_; ++i) {
    if (i) os << ", ";
    os << dims_[static_cast<std::size_t>(i)];
  }
  os << ')';
  return os.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_.str());
  }
}

template <typename Scalar>
Tensor<Scalar>::Tensor(const Shape& shape, std::initializer_list<Scalar> values) : shape_(shape) {
  if (static_cast<Index>(values.size()) != shape.numel()) {
    throw DimensionError("initializer length does not match shape " + shape.str());
  }
  data_.resize(shape.numel());
  std::copy(values.begin(), values.end(), data_.data());
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_.str());
  return data_[0];
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(const Shape& shape) const {
  if (shape.numel() != numel()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

template <typename Scalar>
void require_feature_map(const Tensor<Scalar>& x, const char* what) {
  if (x.rank() != 4) {
    throw DimensionError(std::string(what) + ": expected (N, C, H, W), got " + x.shape().str());
  }
}

template <typename Scalar>
ChannelStats<Scalar> channel_stats(const Tensor<Scalar>& x, double eps) {
  require_feature_map(x, "channel_stats");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (n * hw == 0 || c == 0) throw DimensionError("channel_stats: empty feature map");

  ChannelStats<Scalar> out{Vector<Scalar>(c), Vector<Scalar>(c)};
  const double count = static_cast<double>(n * hw);
  for (Index ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (Index b = 0; b < n; ++b) {
      const Scalar* p = x.data() + (b * c + ch) * hw;
      for (Index i = 0; i < hw; ++i) sum += static_cast<double>(p[i]);
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (Index b = 0; b < n; ++b) {
      const Scalar* p = x.data() + (b * c + ch) * hw;
      for (Index i = 0; i < hw; ++i) {
        const double d = static_cast<double>(p[i]) - mean;
        sq += d * d;
      }
    }
    out.mean[ch] = static_cast<Scalar>(mean);
    out.std[ch] = static_cast<Scalar>(std::sqrt(sq / count + eps));
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template ChannelStats<float> channel_stats(const Tensor<float>&, double);
template ChannelStats<double> channel_stats(const Tensor<double>&, double);
template void require_feature_map(const Tensor<float>&, const char*);
template void require_feature_map(const Tensor<double>&, const char*);

}  // namespace sevo

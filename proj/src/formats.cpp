#include "sevo/formats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <system_error>

namespace sevo {
namespace {

constexpr std::string_view kEmbeddingMagic = "SEVB";
constexpr std::string_view kStyleBankMagic = "SEVP";
constexpr std::string_view kCheckpointMagic = "SEVM";

void read_header(ByteReader& r, std::string_view magic) {
  if (r.remaining() < magic.size()) {
    throw ParseError(ParseErrorKind::TruncatedHeader, 0, "file shorter than its magic");
  }
  if (r.bytes(magic.size(), ParseErrorKind::TruncatedHeader, "magic") != magic) {
    throw ParseError(ParseErrorKind::BadMagic, 0, "expected \"" + std::string(magic) + "\"");
  }
  const std::size_t at = r.offset();
  const std::uint32_t version = r.u32(ParseErrorKind::TruncatedHeader, "version");
  if (version != kFormatVersion) {
    throw ParseError(ParseErrorKind::UnsupportedVersion, at, "version " + std::to_string(version));
  }
}

void expect_end(const ByteReader& r) {
  if (r.remaining() != 0) {
    throw ParseError(ParseErrorKind::TrailingBytes, r.offset(), std::to_string(r.remaining()) + " unexpected bytes");
  }
}

}  // namespace

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<char>(v & 0xff));
  buf_.push_back(static_cast<char>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::bytes(std::string_view s) { buf_.append(s); }

void ByteWriter::str16(std::string_view s) {
  if (s.size() > 0xffff) throw ConfigError("string longer than 65535 bytes cannot be stored");
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(s);
}

void ByteReader::need(std::size_t n, ParseErrorKind kind, std::string_view what) const {
  if (remaining() < n) {
    throw ParseError(kind, pos_,
                     std::string(what) + ": need " + std::to_string(n) + " bytes, " + std::to_string(remaining()) + " left");
  }
}

std::uint16_t ByteReader::u16(ParseErrorKind on_short, std::string_view what) {
  need(2, on_short, what);
  const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
  pos_ += 2;
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t ByteReader::u32(ParseErrorKind on_short, std::string_view what) {
  need(4, on_short, what);
  const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
  pos_ += 4;
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float ByteReader::f32(ParseErrorKind on_short, std::string_view what) {
  return std::bit_cast<float>(u32(on_short, what));
}

std::string_view ByteReader::bytes(std::size_t n, ParseErrorKind on_short, std::string_view what) {
  need(n, on_short, what);
  std::string_view out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string_view ByteReader::str16(ParseErrorKind on_short, std::string_view what) {
  const std::uint16_t n = u16(on_short, what);
  return bytes(n, on_short, what);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorKind::Io, 0, "cannot open " + path.string());
  std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw ParseError(ParseErrorKind::Io, 0, "cannot read " + path.string());
  return data;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(ParseErrorKind::Io, 0, "cannot create " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw ParseError(ParseErrorKind::Io, 0, "cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw ParseError(ParseErrorKind::Io, 0, "cannot replace " + path.string());
  }
}

void EmbeddingFile::validate() const {
  if (dim == 0) throw ConfigError("embedding dim must be positive");
  std::set<std::string_view> names;
  for (const EmbeddingRecord& r : records) {
    if (r.values.size() != static_cast<Index>(dim)) {
      throw ConfigError("embedding '" + r.name + "' has " + std::to_string(r.values.size()) + " values, expected " +
                        std::to_string(dim));
    }
    if (!names.insert(r.name).second) throw ConfigError("duplicate embedding name '" + r.name + "'");
  }
}

TableTextEncoder EmbeddingFile::encoder() const {
  std::map<std::string, Embedding, std::less<>> table;
  for (const EmbeddingRecord& r : records) table.emplace(r.name, r.values);
  return TableTextEncoder(static_cast<Index>(dim), std::move(table));
}

std::string encode_embeddings(const EmbeddingFile& file) {
  file.validate();
  ByteWriter w;
  w.bytes(kEmbeddingMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(file.records.size()));
  w.u32(file.dim);
  for (const EmbeddingRecord& r : file.records) {
    w.str16(r.name);
    for (Index i = 0; i < r.values.size(); ++i) w.f32(r.values[i]);
  }
  return w.take();
}

EmbeddingFile decode_embeddings(std::string_view bytes, std::optional<std::uint32_t> expected_dim) {
  ByteReader r(bytes);
  read_header(r, kEmbeddingMagic);
  const std::uint32_t count = r.u32(ParseErrorKind::TruncatedHeader, "record count");
  const std::size_t dim_at = r.offset();
  EmbeddingFile file;
  file.dim = r.u32(ParseErrorKind::TruncatedHeader, "dim");
  if (file.dim == 0) throw ParseError(ParseErrorKind::DimMismatch, dim_at, "dim is zero");
  if (expected_dim && file.dim != *expected_dim) {
    throw ParseError(ParseErrorKind::DimMismatch, dim_at,
                     "dim " + std::to_string(file.dim) + ", expected " + std::to_string(*expected_dim));
  }
  std::set<std::string, std::less<>> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t start = r.offset();
    const std::string what = "record " + std::to_string(i) + " of " + std::to_string(count);
    EmbeddingRecord rec;
    rec.name = std::string(r.str16(ParseErrorKind::TruncatedRecord, what));
    if (!names.insert(rec.name).second) {
      throw ParseError(ParseErrorKind::DuplicateName, start, "duplicate name '" + rec.name + "' in " + what);
    }
    rec.values.resize(file.dim);
    for (std::uint32_t k = 0; k < file.dim; ++k) rec.values[k] = r.f32(ParseErrorKind::TruncatedRecord, what);
    file.records.push_back(std::move(rec));
  }
  expect_end(r);
  return file;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingFile& file) {
  write_file_atomic(path, encode_embeddings(file));
}

EmbeddingFile read_embeddings(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  return decode_embeddings(read_file(path), expected_dim);
}

std::string encode_style_bank(const StyleBank& bank) {
  ByteWriter w;
  w.bytes(kStyleBankMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(bank.channels()));
  w.u32(static_cast<std::uint32_t>(bank.size()));
  for (const StyleParams<float>& e : bank.entries()) {
    w.str16(e.provenance);
    for (Index c = 0; c < e.mu.size(); ++c) w.f32(e.mu[c]);
    for (Index c = 0; c < e.sigma.size(); ++c) w.f32(e.sigma[c]);
  }
  return w.take();
}

StyleBank decode_style_bank(std::string_view bytes, std::optional<std::uint32_t> expected_channels) {
  ByteReader r(bytes);
  read_header(r, kStyleBankMagic);
  const std::size_t channels_at = r.offset();
  const std::uint32_t channels = r.u32(ParseErrorKind::TruncatedHeader, "channel count");
  const std::uint32_t count = r.u32(ParseErrorKind::TruncatedHeader, "entry count");
  if (channels == 0) throw ParseError(ParseErrorKind::DimMismatch, channels_at, "channel count is zero");
  if (expected_channels && channels != *expected_channels) {
    throw ParseError(ParseErrorKind::DimMismatch, channels_at,
                     "channels " + std::to_string(channels) + ", expected " + std::to_string(*expected_channels));
  }
  StyleBank bank(static_cast<Index>(channels));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string what = "entry " + std::to_string(i) + " of " + std::to_string(count);
    StyleParams<float> p;
    p.provenance = std::string(r.str16(ParseErrorKind::TruncatedRecord, what));
    p.mu.resize(channels);
    p.sigma.resize(channels);
    for (std::uint32_t c = 0; c < channels; ++c) {
      const std::size_t at = r.offset();
      p.mu[c] = r.f32(ParseErrorKind::TruncatedRecord, what);
      if (!std::isfinite(p.mu[c])) throw ParseError(ParseErrorKind::InvalidValue, at, "non-finite mu in " + what);
    }
    for (std::uint32_t c = 0; c < channels; ++c) {
      const std::size_t at = r.offset();
      p.sigma[c] = r.f32(ParseErrorKind::TruncatedRecord, what);
      if (!(p.sigma[c] > 0.0f) || !std::isfinite(p.sigma[c])) {
        throw ParseError(ParseErrorKind::InvalidValue, at, "sigma must be positive in " + what);
      }
    }
    bank.append(std::move(p));
  }
  expect_end(r);
  return bank;
}

void write_style_bank(const std::filesystem::path& path, const StyleBank& bank) {
  write_file_atomic(path, encode_style_bank(bank));
}

StyleBank read_style_bank(const std::filesystem::path& path, std::optional<std::uint32_t> expected_channels) {
  return decode_style_bank(read_file(path), expected_channels);
}

std::string encode_checkpoint(std::span<Param<float>* const> params) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Param<float>* p : params) {
    w.str16(p->name);
    const Shape& s = p->value.shape();
    w.u32(static_cast<std::uint32_t>(s.rank()));
    for (int a = 0; a < s.rank(); ++a) w.u32(static_cast<std::uint32_t>(s[a]));
    for (Index i = 0; i < p->value.numel(); ++i) w.f32(p->value[i]);
  }
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  read_header(r, kCheckpointMagic);
  const std::uint32_t count = r.u32(ParseErrorKind::TruncatedHeader, "tensor count");
  std::vector<NamedTensor> out;
  std::set<std::string, std::less<>> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t start = r.offset();
    const std::string what = "tensor " + std::to_string(i) + " of " + std::to_string(count);
    NamedTensor t;
    t.name = std::string(r.str16(ParseErrorKind::TruncatedRecord, what));
    if (!names.insert(t.name).second) {
      throw ParseError(ParseErrorKind::DuplicateName, start, "duplicate name '" + t.name + "'");
    }
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32(ParseErrorKind::TruncatedRecord, what);
    if (rank > static_cast<std::uint32_t>(Shape::kMaxRank)) {
      throw ParseError(ParseErrorKind::DimMismatch, rank_at, "rank " + std::to_string(rank));
    }
    std::array<Index, Shape::kMaxRank> dims{};
    std::uint64_t numel = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      dims[a] = r.u32(ParseErrorKind::TruncatedRecord, what);
      numel *= static_cast<std::uint64_t>(dims[a]);
    }
    if (numel * 4 > r.remaining()) {
      throw ParseError(ParseErrorKind::TruncatedRecord, r.offset(), what + ": values cut short");
    }
    Shape shape;
    switch (rank) {
      case 0: shape = Shape{}; break;
      case 1: shape = Shape{dims[0]}; break;
      case 2: shape = Shape{dims[0], dims[1]}; break;
      case 3: shape = Shape{dims[0], dims[1], dims[2]}; break;
      default: shape = Shape{dims[0], dims[1], dims[2], dims[3]}; break;
    }
    t.value = Tensor<float>(shape);
    for (Index k = 0; k < t.value.numel(); ++k) t.value[k] = r.f32(ParseErrorKind::TruncatedRecord, what);
    out.push_back(std::move(t));
  }
  expect_end(r);
  return out;
}

void write_checkpoint(const std::filesystem::path& path, std::span<Param<float>* const> params) {
  write_file_atomic(path, encode_checkpoint(params));
}

void load_checkpoint(const std::filesystem::path& path, std::span<Param<float>* const> params) {
  const std::vector<NamedTensor> stored = decode_checkpoint(read_file(path));
  for (Param<float>* p : params) {
    const auto it = std::find_if(stored.begin(), stored.end(), [p](const NamedTensor& t) { return t.name == p->name; });
    if (it == stored.end()) throw ConfigError("checkpoint has no tensor named '" + p->name + "'");
    if (it->value.shape() != p->value.shape()) {
      throw DimensionError("checkpoint tensor '" + p->name + "' is " + it->value.shape().str() + ", model expects " +
                           p->value.shape().str());
    }
    p->value = it->value;
  }
}

}  // namespace sevo

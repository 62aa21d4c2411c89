#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevo/graph.hpp"
#include "sevo/prompt_chain.hpp"
#include "sevo/style.hpp"

namespace sevo {

/// Little-endian encoder for the binary formats.
class ByteWriter {
 public:
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void bytes(std::string_view s);
  /// u16 length prefix, then the bytes. Throws ConfigError above 65535 bytes.
  void str16(std::string_view s);

  const std::string& data() const noexcept { return buf_; }
  std::string take() noexcept { return std::move(buf_); }

 private:
  std::string buf_;
};

/// Little-endian decoder. Reads past the end throw ParseError with the kind
/// passed to the call and the offset where the read started.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  std::uint16_t u16(ParseErrorKind on_short, std::string_view what);
  std::uint32_t u32(ParseErrorKind on_short, std::string_view what);
  float f32(ParseErrorKind on_short, std::string_view what);
  std::string_view bytes(std::size_t n, ParseErrorKind on_short, std::string_view what);
  std::string_view str16(ParseErrorKind on_short, std::string_view what);

 private:
  void need(std::size_t n, ParseErrorKind kind, std::string_view what) const;

  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Whole file as bytes. Throws ParseError(Io) when it cannot be read.
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

inline constexpr std::uint32_t kFormatVersion = 1;

struct EmbeddingRecord {
  std::string name;
  Embedding values;
};

/// "SEVB", version, count, dim, then per record: u16 name length, UTF-8 name, dim f32.
struct EmbeddingFile {
  std::uint32_t dim = 0;
  std::vector<EmbeddingRecord> records;

  /// Throws ConfigError on zero dim, wrong record lengths or duplicate names.
  void validate() const;
  TableTextEncoder encoder() const;
};

std::string encode_embeddings(const EmbeddingFile& file);
/// `expected_dim` rejects files of another width with DimMismatch.
EmbeddingFile decode_embeddings(std::string_view bytes, std::optional<std::uint32_t> expected_dim = std::nullopt);
void write_embeddings(const std::filesystem::path& path, const EmbeddingFile& file);
EmbeddingFile read_embeddings(const std::filesystem::path& path,
                              std::optional<std::uint32_t> expected_dim = std::nullopt);

/// "SEVP", version, channels C, entry count M, then per entry: u16 provenance
/// length, provenance, C f32 mu, C f32 sigma. Any sigma <= 0 is an InvalidValue error.
std::string encode_style_bank(const StyleBank& bank);
StyleBank decode_style_bank(std::string_view bytes, std::optional<std::uint32_t> expected_channels = std::nullopt);
void write_style_bank(const std::filesystem::path& path, const StyleBank& bank);
StyleBank read_style_bank(const std::filesystem::path& path,
                          std::optional<std::uint32_t> expected_channels = std::nullopt);

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// "SEVM", version, count, then per tensor: u16 name length, name, u32 rank,
/// rank u32 extents, f32 values.
std::string encode_checkpoint(std::span<Param<float>* const> params);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, std::span<Param<float>* const> params);
/// Copies stored values into `params` by name. Throws ConfigError on a missing
/// name and DimensionError on a shape mismatch.
void load_checkpoint(const std::filesystem::path& path, std::span<Param<float>* const> params);

}  // namespace sevo

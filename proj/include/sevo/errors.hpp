#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sevo {

/// Shapes or channel counts of the operands do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (e.g. backward from a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration: empty vocabulary, unknown key, bad value, empty bank...
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Operation invoked on an object in the wrong state (e.g. sampling an empty bank).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ParseErrorKind {
  BadMagic,
  UnsupportedVersion,
  TruncatedHeader,
  TruncatedRecord,
  DuplicateName,
  DimMismatch,
  TrailingBytes,
  InvalidValue,
  Io,
};

const char* to_string(ParseErrorKind kind) noexcept;

/// Binary file parse failure with the byte offset at which it was detected.
class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::uint64_t offset, const std::string& detail);

  ParseErrorKind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  ParseErrorKind kind_;
  std::uint64_t offset_;
};

}  // namespace sevo

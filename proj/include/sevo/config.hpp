#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sevo/formats.hpp"
#include "sevo/harness.hpp"

namespace sevo {

struct ParsedConfig {
  RunConfig config;
  /// One message per recoverable oddity (currently duplicate keys).
  std::vector<std::string> warnings;
  /// Keys present in the text.
  std::set<std::string, std::less<>> keys;
};

/// UTF-8 `key = value` lines with `#` comments and dotted keys.
/// Absent keys keep their defaults; a repeated key keeps its last value and
/// adds a warning. Unknown keys, malformed lines and values of the wrong type
/// throw ConfigError carrying the line number.
ParsedConfig parse_config(std::string_view text);
ParsedConfig load_config(const std::filesystem::path& path);

/// Every recognized key with its default value, in parseable form.
std::string default_config_text();

/// Vocabulary and encoder selected by a config.
struct TextContext {
  VocabularySet vocab;
  std::unique_ptr<TextEncoder> encoder;

  TextSetup setup() const { return {vocab, encoder.get()}; }
};

/// Builtin or file vocabulary; fake encoder, or the table from text.embeddings.
TextContext make_text(const RunConfig& cfg);

/// Fake encodings of every string a run of `cfg` needs for `seeds` consecutive
/// seeds. Reading the result back with text.encoder = file reproduces the fake run.
EmbeddingFile fake_embedding_file(const RunConfig& cfg, const VocabularySet& vocab, int seeds);

}  // namespace sevo

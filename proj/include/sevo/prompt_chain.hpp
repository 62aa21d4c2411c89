#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevo/tensor.hpp"

namespace sevo {

/// Text/image feature vector. Stored in single precision like every feature in the pipeline.
using Embedding = Vector<float>;

struct Vocabulary {
  std::string name;
  std::vector<std::string> words;
};

/// The five word lists (weather, time, style, action, detail) plus the phrase
/// and sentence templates and the words describing the source domain.
///
/// File format: UTF-8, one entry per line, `[section]` headers, `#` comments.
/// Templates use `{weather}`, `{time}`, `{style}`, `{action}`, `{detail}`,
/// `{detail2}` and (sentences only) `{phrase}` placeholders.
struct VocabularySet {
  static constexpr std::array<std::string_view, 5> kVocabularyNames = {"weather", "time", "style", "action", "detail"};

  std::vector<Vocabulary> vocabularies;
  std::vector<std::string> phrase_templates;
  std::vector<std::string> sentence_templates;
  std::vector<std::string> source_words;

  /// Throws ConfigError unless there are exactly the five named, non-empty,
  /// duplicate-free vocabularies and at least one template of each kind.
  void validate() const;

  const Vocabulary& vocabulary(std::string_view name) const;

  static VocabularySet parse(std::string_view text);
  static VocabularySet load(const std::filesystem::path& path);
  /// Default vocabularies shipped with the library (identical to data/vocabulary.txt).
  static VocabularySet builtin();
  static std::string_view builtin_text();
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Index dim() const = 0;
  virtual Embedding encode(std::string_view text) const = 0;
};

/// Deterministic stand-in for a pretrained text encoder: hashes the string to
/// seed a Gaussian draw and returns it unit-normalized.
Embedding fake_encode(std::string_view text, Index dim, std::uint64_t salt = 0);

class FakeTextEncoder final : public TextEncoder {
 public:
  explicit FakeTextEncoder(Index dim, std::uint64_t salt = 0);
  Index dim() const override { return dim_; }
  Embedding encode(std::string_view text) const override { return fake_encode(text, dim_, salt_); }

 private:
  Index dim_;
  std::uint64_t salt_;
};

/// Looks strings up in a precomputed table (e.g. loaded from an embedding file).
class TableTextEncoder final : public TextEncoder {
 public:
  TableTextEncoder(Index dim, std::map<std::string, Embedding, std::less<>> table);
  Index dim() const override { return dim_; }
  /// Throws ConfigError naming the string when it has no entry.
  Embedding encode(std::string_view text) const override;
  std::size_t size() const noexcept { return table_.size(); }

 private:
  Index dim_;
  std::map<std::string, Embedding, std::less<>> table_;
};

/// Three-level prompt record: one word per vocabulary, a phrase built from
/// them, a sentence extending the phrase, and the accumulated text features.
struct PromptChain {
  std::uint64_t seed = 0;
  std::vector<std::string> words;
  std::string extra_detail;
  std::string phrase;
  std::string sentence;
  Embedding f_t1;
  Embedding f_t2;
  Embedding f_t3;

  /// Accumulated features for level 1, 2 or 3.
  const Embedding& features(int level) const;
  std::string provenance(int level) const;
};

/// Draws one word per vocabulary from `seed` and sums their encodings in vocabulary order.
PromptChain compose_level1(std::span<const Vocabulary> vocabularies, const TextEncoder& encoder, std::uint64_t seed);

/// f_t2 = encode(phrase) + f_t1.
const Embedding& compose_level2(PromptChain& chain, const TextEncoder& encoder);
/// f_t3 = encode(sentence) + f_t2.
const Embedding& compose_level3(PromptChain& chain, const TextEncoder& encoder);

/// Fills phrase and sentence from the drawn words. Template choice and the
/// second detail word continue the same seeded stream as the word draws.
void build_prompts(PromptChain& chain, const VocabularySet& vocab);

/// Full chain for `seed`: draws, templates and all three accumulation levels.
PromptChain sample_chain(const VocabularySet& vocab, const TextEncoder& encoder, std::uint64_t seed);

/// Sum of the source-domain description word encodings.
Embedding source_text_features(const VocabularySet& vocab, const TextEncoder& encoder);

/// Every string a chain for `seed` may encode (words, phrase, sentence), in encoding order.
std::vector<std::string> chain_strings(const PromptChain& chain);

}  // namespace sevo

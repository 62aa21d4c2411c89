#include "sevo/prompt_chain.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sevo/rng.hpp"

namespace sevo {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

void replace_all(std::string& s, std::string_view key, std::string_view value) {
  for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
}

}  // namespace

const Vocabulary& VocabularySet::vocabulary(std::string_view name) const {
  for (const Vocabulary& v : vocabularies) {
    if (v.name == name) return v;
  }
  throw ConfigError("no vocabulary named '" + std::string(name) + "'");
}

void VocabularySet::validate() const {
  if (vocabularies.size() != kVocabularyNames.size()) {
    throw ConfigError("expected 5 vocabularies, found " + std::to_string(vocabularies.size()));
  }
  for (std::size_t i = 0; i < kVocabularyNames.size(); ++i) {
    const Vocabulary& v = vocabularies[i];
    if (v.name != kVocabularyNames[i]) {
      throw ConfigError("vocabulary " + std::to_string(i) + " must be '" + std::string(kVocabularyNames[i]) + "'");
    }
    if (v.words.empty()) throw ConfigError("vocabulary '" + v.name + "' is empty");
    std::set<std::string_view> seen;
    for (const std::string& w : v.words) {
      if (!seen.insert(w).second) throw ConfigError("duplicate word '" + w + "' in vocabulary '" + v.name + "'");
    }
  }
  if (phrase_templates.empty()) throw ConfigError("no phrase templates");
  if (sentence_templates.empty()) throw ConfigError("no sentence templates");
  if (source_words.empty()) throw ConfigError("no source-domain words");
}

VocabularySet VocabularySet::parse(std::string_view text) {
  VocabularySet out;
  for (std::string_view name : kVocabularyNames) out.vocabularies.push_back({std::string(name), {}});

  std::vector<std::string>* section = nullptr;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      section = nullptr;
      for (Vocabulary& v : out.vocabularies) {
        if (v.name == name) section = &v.words;
      }
      if (name == "phrase_templates") section = &out.phrase_templates;
      if (name == "sentence_templates") section = &out.sentence_templates;
      if (name == "source") section = &out.source_words;
      if (section == nullptr) throw ConfigError("unknown section [" + name + "]", line_no);
      continue;
    }
    if (section == nullptr) throw ConfigError("entry outside of any section", line_no);
    section->push_back(line);
  }
  out.validate();
  return out;
}

VocabularySet VocabularySet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open vocabulary file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

VocabularySet VocabularySet::builtin() { return parse(builtin_text()); }

Embedding fake_encode(std::string_view text, Index dim, std::uint64_t salt) {
  if (dim < 2) throw ConfigError("fake encoder dimension must be at least 2");
  Rng rng(fnv1a(text) ^ mix_seed(salt));
  Vector<double> v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = rng.normal();
  v /= v.norm();
  return v.cast<float>();
}

FakeTextEncoder::FakeTextEncoder(Index dim, std::uint64_t salt) : dim_(dim), salt_(salt) {
  if (dim < 2) throw ConfigError("fake encoder dimension must be at least 2");
}

TableTextEncoder::TableTextEncoder(Index dim, std::map<std::string, Embedding, std::less<>> table)
    : dim_(dim), table_(std::move(table)) {
  for (const auto& [name, e] : table_) {
    if (e.size() != dim_) throw DimensionError("embedding for '" + name + "' has the wrong dimension");
  }
}

Embedding TableTextEncoder::encode(std::string_view text) const {
  const auto it = table_.find(text);
  if (it == table_.end()) throw ConfigError("no embedding for \"" + std::string(text) + "\"");
  return it->second;
}

const Embedding& PromptChain::features(int level) const {
  switch (level) {
    case 1: return f_t1;
    case 2: return f_t2;
    case 3: return f_t3;
    default: throw ConfigError("chain level must be 1, 2 or 3, got " + std::to_string(level));
  }
}

std::string PromptChain::provenance(int level) const {
  std::string text;
  if (level == 1) {
    for (const std::string& w : words) text += (text.empty() ? "" : ", ") + w;
  } else {
    text = level == 2 ? phrase : sentence;
  }
  return "chain seed=" + std::to_string(seed) + " level=" + std::to_string(level) + ": " + text;
}

PromptChain compose_level1(std::span<const Vocabulary> vocabularies, const TextEncoder& encoder, std::uint64_t seed) {
  if (vocabularies.empty()) throw ConfigError("no vocabularies to draw from");
  PromptChain chain;
  chain.seed = seed;
  Rng rng(seed);
  chain.f_t1 = Embedding::Zero(encoder.dim());
  for (const Vocabulary& v : vocabularies) {
    if (v.words.empty()) throw ConfigError("vocabulary '" + v.name + "' is empty");
    chain.words.push_back(v.words[rng.index(v.words.size())]);
  }
  for (const std::string& w : chain.words) chain.f_t1 += encoder.encode(w);
  return chain;
}

const Embedding& compose_level2(PromptChain& chain, const TextEncoder& encoder) {
  chain.f_t2 = encoder.encode(chain.phrase) + chain.f_t1;
  return chain.f_t2;
}

const Embedding& compose_level3(PromptChain& chain, const TextEncoder& encoder) {
  chain.f_t3 = encoder.encode(chain.sentence) + chain.f_t2;
  return chain.f_t3;
}

void build_prompts(PromptChain& chain, const VocabularySet& vocab) {
  if (chain.words.size() != vocab.vocabularies.size()) throw ConfigError("chain words do not match the vocabularies");
  // Continue after the level-1 draws: one draw per vocabulary.
  Rng rng(chain.seed);
  for (const Vocabulary& v : vocab.vocabularies) rng.index(v.words.size());

  const std::string& phrase_t = vocab.phrase_templates[rng.index(vocab.phrase_templates.size())];
  const Vocabulary& details = vocab.vocabulary("detail");
  const std::string& first_detail = chain.words.back();
  if (details.words.size() > 1) {
    std::vector<std::string> others;
    std::copy_if(details.words.begin(), details.words.end(), std::back_inserter(others),
                 [&](const std::string& w) { return w != first_detail; });
    chain.extra_detail = others[rng.index(others.size())];
  } else {
    chain.extra_detail = first_detail;
  }
  const std::string& sentence_t = vocab.sentence_templates[rng.index(vocab.sentence_templates.size())];

  auto fill = [&](std::string s) {
    for (std::size_t i = 0; i < vocab.vocabularies.size(); ++i) {
      replace_all(s, "{" + vocab.vocabularies[i].name + "}", chain.words[i]);
    }
    replace_all(s, "{detail2}", chain.extra_detail);
    return s;
  };
  chain.phrase = fill(phrase_t);
  std::string sentence = sentence_t;
  replace_all(sentence, "{phrase}", chain.phrase);
  chain.sentence = fill(sentence);
}

PromptChain sample_chain(const VocabularySet& vocab, const TextEncoder& encoder, std::uint64_t seed) {
  PromptChain chain = compose_level1(vocab.vocabularies, encoder, seed);
  build_prompts(chain, vocab);
  compose_level2(chain, encoder);
  compose_level3(chain, encoder);
  return chain;
}

Embedding source_text_features(const VocabularySet& vocab, const TextEncoder& encoder) {
  Embedding f = Embedding::Zero(encoder.dim());
  for (const std::string& w : vocab.source_words) f += encoder.encode(w);
  return f;
}

std::vector<std::string> chain_strings(const PromptChain& chain) {
  std::vector<std::string> out = chain.words;
  out.push_back(chain.phrase);
  out.push_back(chain.sentence);
  return out;
}

}  // namespace sevo

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "sevo/formats.hpp"
#include "sevo/prompt_chain.hpp"
#include "sevo/report.hpp"
#include "sevo/style.hpp"

using namespace sevo;

namespace {

/// Returns fixed vectors for known strings and zero for everything else.
class StubEncoder final : public TextEncoder {
 public:
  StubEncoder(Index dim, std::map<std::string, Embedding, std::less<>> table) : dim_(dim), table_(std::move(table)) {}
  Index dim() const override { return dim_; }
  Embedding encode(std::string_view text) const override {
    const auto it = table_.find(text);
    return it == table_.end() ? Embedding(Embedding::Zero(dim_)) : it->second;
  }

 private:
  Index dim_;
  std::map<std::string, Embedding, std::less<>> table_;
};

Embedding vec(std::initializer_list<float> v) {
  Embedding e(static_cast<Index>(v.size()));
  Index i = 0;
  for (float x : v) e[i++] = x;
  return e;
}

bool bit_equal(const Embedding& a, const Embedding& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

TEST(ComposeLevel1, SumsDrawnWordEncodings) {
  const std::vector<Vocabulary> vocabs = {{"weather", {"rainy"}}, {"time", {"night"}}};
  const StubEncoder enc(2, {{"rainy", vec({1, 0})}, {"night", vec({0, 1})}});
  const PromptChain c = compose_level1(vocabs, enc, 3);
  EXPECT_EQ(c.words, (std::vector<std::string>{"rainy", "night"}));
  EXPECT_TRUE(bit_equal(c.f_t1, vec({1, 1})));
}

TEST(ComposeLevel1, SingleVocabularyIsThatWord) {
  const std::vector<Vocabulary> vocabs = {{"weather", {"rainy", "foggy", "snowy"}}};
  const FakeTextEncoder enc(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PromptChain c = compose_level1(vocabs, enc, seed);
    ASSERT_EQ(c.words.size(), 1u);
    EXPECT_TRUE(bit_equal(c.f_t1, enc.encode(c.words[0])));
  }
}

TEST(ComposeLevel1, RejectsEmptyInputs) {
  const FakeTextEncoder enc(4);
  EXPECT_THROW(compose_level1({}, enc, 0), ConfigError);
  const std::vector<Vocabulary> vocabs = {{"weather", {}}};
  EXPECT_THROW(compose_level1(vocabs, enc, 0), ConfigError);
}

TEST(ComposeLevel2, ZeroPhraseKeepsLevelOne) {
  PromptChain c;
  c.f_t1 = vec({0.5f, -1.0f});
  c.phrase = "unknown phrase";
  const StubEncoder enc(2, {});
  EXPECT_TRUE(bit_equal(compose_level2(c, enc), c.f_t1));
}

TEST(ComposeLevel2, ZeroLevelOneGivesPhrase) {
  PromptChain c;
  c.f_t1 = vec({0, 0});
  c.phrase = "p";
  const StubEncoder enc(2, {{"p", vec({0.25f, 3.0f})}});
  EXPECT_TRUE(bit_equal(compose_level2(c, enc), vec({0.25f, 3.0f})));
}

TEST(ComposeLevel3, ZeroSentenceKeepsLevelTwo) {
  PromptChain c;
  c.f_t2 = vec({1.5f, 2.0f});
  c.sentence = "s";
  const StubEncoder enc(2, {});
  EXPECT_TRUE(bit_equal(compose_level3(c, enc), c.f_t2));
}

TEST(ComposeLevel3, EqualEncodingsAccumulateLinearly) {
  // Words, phrase and sentence all encode to u: f_t3 = (n + 2) u for n words.
  const Embedding u = vec({0.5f, -0.25f, 1.0f});
  VocabularySet vocab = VocabularySet::builtin();
  const FakeTextEncoder fake(3);
  PromptChain c = sample_chain(vocab, fake, 5);
  const StubEncoder same(3, [&] {
    std::map<std::string, Embedding, std::less<>> t;
    for (const std::string& s : chain_strings(c)) t.emplace(s, u);
    return t;
  }());
  c = compose_level1(vocab.vocabularies, same, 5);
  build_prompts(c, vocab);
  compose_level2(c, same);
  compose_level3(c, same);
  const float n = static_cast<float>(c.words.size());
  EXPECT_TRUE(bit_equal(c.f_t1, u * n));
  EXPECT_TRUE(bit_equal(c.f_t3, u * (n + 2.0f)));
}

TEST(PromptChain, LevelDifferencesAreExactEncodings) {
  const VocabularySet vocab = VocabularySet::builtin();
  const FakeTextEncoder enc(32);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const PromptChain c = sample_chain(vocab, enc, seed);
    EXPECT_TRUE(bit_equal(c.f_t3, Embedding(enc.encode(c.sentence) + c.f_t2)));
    EXPECT_TRUE(bit_equal(c.f_t2, Embedding(enc.encode(c.phrase) + c.f_t1)));
  }
}

TEST(PromptChain, PhraseAndSentenceReuseLevelOneWords) {
  const VocabularySet vocab = VocabularySet::builtin();
  const FakeTextEncoder enc(8);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const PromptChain c = sample_chain(vocab, enc, seed);
    EXPECT_EQ(c.sentence.rfind(c.phrase, 0), 0u) << c.sentence;
    EXPECT_NE(c.phrase.find(c.words[0]), std::string::npos) << c.phrase;
    EXPECT_NE(c.sentence.find(c.words[4]), std::string::npos) << c.sentence;
    EXPECT_NE(c.extra_detail, c.words[4]);
  }
}

TEST(PromptChain, GoldenSeed42) {
  const PromptChain golden = chain_from_json(read_file(SEVO_TEST_DATA "/chain_seed42.json"));
  const PromptChain c = sample_chain(VocabularySet::builtin(), FakeTextEncoder(16), 42);
  EXPECT_EQ(c.words, golden.words);
  EXPECT_EQ(c.phrase, golden.phrase);
  EXPECT_EQ(c.sentence, golden.sentence);
  EXPECT_TRUE(bit_equal(c.f_t1, golden.f_t1));
  EXPECT_TRUE(bit_equal(c.f_t2, golden.f_t2));
  EXPECT_TRUE(bit_equal(c.f_t3, golden.f_t3));
}

TEST(PromptChain, JsonRoundTripIsBitExact) {
  const VocabularySet vocab = VocabularySet::builtin();
  const FakeTextEncoder enc(64);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PromptChain c = sample_chain(vocab, enc, seed);
    const PromptChain back = chain_from_json(chain_to_json(c));
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.words, c.words);
    EXPECT_EQ(back.sentence, c.sentence);
    EXPECT_TRUE(bit_equal(back.f_t1, c.f_t1));
    EXPECT_TRUE(bit_equal(back.f_t2, c.f_t2));
    EXPECT_TRUE(bit_equal(back.f_t3, c.f_t3));
  }
  EXPECT_THROW(chain_from_json("{\"seed\": 1}"), ConfigError);
}

TEST(PromptChain, FeaturesAndProvenanceByLevel) {
  const PromptChain c = sample_chain(VocabularySet::builtin(), FakeTextEncoder(8), 1);
  EXPECT_TRUE(bit_equal(c.features(1), c.f_t1));
  EXPECT_TRUE(bit_equal(c.features(3), c.f_t3));
  EXPECT_THROW(c.features(4), ConfigError);
  EXPECT_NE(c.provenance(3).find(c.sentence), std::string::npos);
}

TEST(Sampling, WordFrequenciesAreUniform) {
  const std::vector<Vocabulary> vocabs = {{"weather", {"a", "b", "c", "d"}}};
  const StubEncoder enc(2, {});
  std::map<std::string, int> counts;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++counts[compose_level1(vocabs, enc, seed).words[0]];
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [word, n] : counts) EXPECT_NEAR(n / 10000.0, 0.25, 0.02) << word;
}

TEST(FakeEncode, DeterministicUnitNorm) {
  for (const char* s : {"rainy", "foggy", "", "a longer sentence with words"}) {
    const Embedding a = fake_encode(s, 64), b = fake_encode(s, 64);
    EXPECT_TRUE(bit_equal(a, b));
    EXPECT_NEAR(a.norm(), 1.0, 1e-5);
  }
  EXPECT_FALSE(bit_equal(fake_encode("x", 16, 0), fake_encode("x", 16, 1)));
  EXPECT_THROW(fake_encode("x", 1), ConfigError);
}

TEST(FakeEncode, DistinctStringsAreNearlyOrthogonal) {
  int small = 0;
  for (int i = 0; i < 1000; ++i) {
    const Embedding a = fake_encode("left " + std::to_string(i), 256);
    const Embedding b = fake_encode("right " + std::to_string(i), 256);
    if (std::abs(a.dot(b)) < 0.5f) ++small;
  }
  EXPECT_GE(small, 990);
}

TEST(TableTextEncoder, LooksUpAndRejectsUnknown) {
  TableTextEncoder enc(2, {{"rainy", vec({1, 2})}});
  EXPECT_TRUE(bit_equal(enc.encode("rainy"), vec({1, 2})));
  EXPECT_THROW(enc.encode("foggy"), ConfigError);
  EXPECT_THROW(TableTextEncoder(3, {{"rainy", vec({1, 2})}}), DimensionError);
}

TEST(Vocabulary, BuiltinMatchesShippedFile) {
  const VocabularySet builtin = VocabularySet::builtin();
  const VocabularySet file = VocabularySet::load(SEVO_TEST_DATA "/../../data/vocabulary.txt");
  ASSERT_EQ(builtin.vocabularies.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(builtin.vocabularies[i].words, file.vocabularies[i].words);
  EXPECT_EQ(builtin.phrase_templates, file.phrase_templates);
  for (const char* w : {"rainy", "foggy", "anime", "art"}) {
    bool found = false;
    for (const Vocabulary& v : builtin.vocabularies) found = found || std::find(v.words.begin(), v.words.end(), w) != v.words.end();
    EXPECT_TRUE(found) << w;
  }
}

TEST(Vocabulary, ParseErrors) {
  EXPECT_THROW(VocabularySet::parse("rainy\n"), ConfigError);
  EXPECT_THROW(VocabularySet::parse("[weather\nrainy\n"), ConfigError);
  EXPECT_THROW(VocabularySet::parse("[colors]\nred\n"), ConfigError);
  // Missing vocabularies fail validation.
  EXPECT_THROW(VocabularySet::parse("[weather]\nrainy\n"), ConfigError);
  try {
    VocabularySet::parse("# c\n\n[nope]\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Vocabulary, DuplicateWordRejected) {
  std::string text(VocabularySet::builtin_text());
  text.replace(text.find("[weather]\n") + 10, 0, "rainy\n");
  EXPECT_THROW(VocabularySet::parse(text), ConfigError);
}

TEST(SourceText, SumsSourceWords) {
  const VocabularySet vocab = VocabularySet::builtin();
  const FakeTextEncoder enc(16);
  Embedding expected = Embedding::Zero(16);
  for (const std::string& w : vocab.source_words) expected += enc.encode(w);
  EXPECT_TRUE(bit_equal(source_text_features(vocab, enc), expected));
}

TEST(ScaledText, CosineLossIgnoresTextScale) {
  const PromptChain c = sample_chain(VocabularySet::builtin(), FakeTextEncoder(16), 9);
  Rng rng(2);
  Tensor<float> styled(Shape{2, 16, 3, 3});
  for (Index i = 0; i < styled.numel(); ++i) styled[i] = static_cast<float>(rng.normal());
  const Tensor<float> proj = matrix_to_tensor(random_orthonormal_projection(16, 16, 4));
  auto loss = [&](float s) {
    Graph<float> g;
    return loss_tc(g.constant(styled), g.constant(vector_to_tensor(Vector<float>(c.f_t3 * s))), g.constant(proj))
        .value()
        .item();
  };
  for (float s : {0.1f, 3.0f, 100.0f}) EXPECT_LT(std::abs(loss(s) - loss(1.0f)), 1e-6);
}

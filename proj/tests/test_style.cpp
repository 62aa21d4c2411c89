#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "gradcheck.hpp"
#include "sevo/prompt_chain.hpp"
#include "sevo/style.hpp"

using namespace sevo;
using sevo::testing::random_tensor;

namespace {

Tensor<float> random_map(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(shape);
  for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
  return t;
}

double tc(const Tensor<double>& styled, const Tensor<double>& text, const Tensor<double>& proj) {
  Graph<double> g;
  return loss_tc(g.constant(styled), g.constant(text), g.constant(proj)).value().item();
}

Tensor<double> eye(Index n) {
  Tensor<double> t(Shape{n, n});
  for (Index i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

StyleParams<float> style(std::initializer_list<float> mu, std::initializer_list<float> sigma) {
  StyleParams<float> s;
  s.mu = Eigen::Map<const Vector<float>>(mu.begin(), static_cast<Index>(mu.size()));
  s.sigma = Eigen::Map<const Vector<float>>(sigma.begin(), static_cast<Index>(sigma.size()));
  return s;
}

}  // namespace

TEST(Normalize, ZeroMeanUnitStdPerChannel) {
  const Tensor<double> x = Tensor<double>(Shape{1, 1, 1, 3}, {1, 2, 3});
  Graph<double> g;
  const Tensor<double> y = normalize(g.constant(x)).value();
  const double sd = std::sqrt(2.0 / 3.0 + 1e-5);
  EXPECT_NEAR(y[0], -1.0 / sd, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_NEAR(y[2], 1.0 / sd, 1e-12);
}

TEST(Normalize, ConstantChannelMapsToZero) {
  Graph<double> g;
  const Tensor<double> y = normalize(g.constant(Tensor<double>::constant(Shape{2, 3, 2, 2}, 4.5))).value();
  EXPECT_LT(y.array().abs().maxCoeff(), 1e-12);
}

TEST(ApplyStyle, ScalesAndShiftsPerChannel) {
  Tensor<double> x(Shape{1, 2, 1, 2}, {1, -1, 2, 0});
  StyleParams<double> s;
  s.mu = Vector<double>{{0.5, -1.0}};
  s.sigma = Vector<double>{{2.0, 3.0}};
  Graph<double> g;
  const Tensor<double> y = apply_style(g.constant(x), s).value();
  EXPECT_DOUBLE_EQ(y[0], 2.5);
  EXPECT_DOUBLE_EQ(y[1], -1.5);
  EXPECT_DOUBLE_EQ(y[2], 5.0);
  EXPECT_DOUBLE_EQ(y[3], -1.0);
}

TEST(ApplyStyle, IdentityStyleIsNoOp) {
  Rng rng(1);
  const Tensor<double> x = random_tensor(Shape{2, 4, 3, 3}, rng);
  Graph<double> g;
  const Tensor<double> y = apply_style(g.constant(x), StyleParams<double>::identity(4)).value();
  EXPECT_TRUE((y.array() == x.array()).all());
}

TEST(ApplyStyle, ChannelMismatchThrows) {
  Graph<double> g;
  EXPECT_THROW(apply_style(g.constant(Tensor<double>(Shape{1, 3, 2, 2})), StyleParams<double>::identity(2)),
               DimensionError);
}

TEST(LossTc, AlignedOrthogonalOpposite) {
  const Tensor<double> text(Shape{2}, {1, 0});
  EXPECT_NEAR(tc(Tensor<double>(Shape{1, 2, 1, 1}, {3, 0}), text, eye(2)), 0.0, 1e-9);
  EXPECT_NEAR(tc(Tensor<double>(Shape{1, 2, 1, 1}, {0, 2}), text, eye(2)), 1.0, 1e-9);
  EXPECT_NEAR(tc(Tensor<double>(Shape{1, 2, 1, 1}, {-1, 0}), text, eye(2)), 2.0, 1e-9);
}

TEST(LossTc, StaysInRange) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double l = tc(random_tensor(Shape{2, 4, 3, 3}, rng), random_tensor(Shape{6}, rng),
                        random_tensor(Shape{6, 4}, rng));
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 2.0);
  }
}

TEST(LossTc, InvariantToPositiveScaling) {
  Rng rng(4);
  const Tensor<double> x = random_tensor(Shape{1, 4, 2, 2}, rng);
  const Tensor<double> t = random_tensor(Shape{4}, rng);
  const Tensor<double> p = random_tensor(Shape{4, 4}, rng);
  const double base = tc(x, t, p);
  for (double s : {0.01, 7.0, 1e3}) {
    Tensor<double> xs = x, ts = t;
    xs.array() *= s;
    ts.array() *= s;
    EXPECT_NEAR(tc(xs, t, p), base, 1e-10);
    EXPECT_NEAR(tc(x, ts, p), base, 1e-10);
  }
}

TEST(Projection, OrthonormalColumnsAndRows) {
  const Matrix<float> tall = random_orthonormal_projection(32, 8, 1);
  EXPECT_LT((tall.transpose() * tall - Matrix<float>::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-5);
  const Matrix<float> wide = random_orthonormal_projection(4, 8, 1);
  EXPECT_LT((wide * wide.transpose() - Matrix<float>::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_TRUE((random_orthonormal_projection(16, 16, 9).array() == random_orthonormal_projection(16, 16, 9).array()).all());
}

TEST(StyleTraining, ZeroStepsReturnsIdentity) {
  const Tensor<float> f = random_map(Shape{2, 4, 3, 3}, 1);
  StyleTrainConfig cfg;
  cfg.steps = 0;
  const StyleTrainResult r =
      train_style_params(fake_encode("x", 4), std::span(&f, 1), random_orthonormal_projection(4, 4, 0), cfg);
  EXPECT_TRUE(r.losses.empty());
  EXPECT_TRUE((r.params.mu.array() == 0.0f).all());
  EXPECT_TRUE((r.params.sigma.array() == 1.0f).all());
}

TEST(StyleTraining, ReachesThresholdAndRecordsLosses) {
  const Tensor<float> f = random_map(Shape{2, 16, 8, 8}, 5);
  const Embedding text = sample_chain(VocabularySet::builtin(), FakeTextEncoder(16), 5).f_t3;
  const StyleTrainResult r = train_style_params(text, std::span(&f, 1), random_orthonormal_projection(16, 16, 5),
                                                StyleTrainConfig{}, "chain 5");
  ASSERT_EQ(r.losses.size(), 500u);
  EXPECT_GT(r.losses.front(), 0.5);
  EXPECT_LE(r.final_loss, 0.05);
  EXPECT_EQ(r.params.provenance, "chain 5");
  EXPECT_GE(r.params.sigma.minCoeff(), static_cast<float>(kSigmaFloor));
  EXPECT_NO_THROW(r.params.validate());
}

TEST(StyleTraining, Deterministic) {
  const Tensor<float> f = random_map(Shape{2, 8, 4, 4}, 2);
  StyleTrainConfig cfg;
  cfg.steps = 40;
  const Embedding text = fake_encode("night", 8);
  const Matrix<float> p = random_orthonormal_projection(8, 8, 2);
  const StyleTrainResult a = train_style_params(text, std::span(&f, 1), p, cfg);
  const StyleTrainResult b = train_style_params(text, std::span(&f, 1), p, cfg);
  EXPECT_TRUE((a.params.mu.array() == b.params.mu.array()).all());
  EXPECT_TRUE((a.params.sigma.array() == b.params.sigma.array()).all());
}

TEST(StyleTraining, RejectsBadInputs) {
  const Tensor<float> f = random_map(Shape{1, 4, 2, 2}, 0);
  StyleTrainConfig cfg;
  EXPECT_THROW(train_style_params(fake_encode("x", 4), {}, random_orthonormal_projection(4, 4, 0), cfg), ConfigError);
  EXPECT_THROW(train_style_params(fake_encode("x", 5), std::span(&f, 1), random_orthonormal_projection(4, 4, 0), cfg),
               DimensionError);
  cfg.steps = -1;
  EXPECT_THROW(train_style_params(fake_encode("x", 4), std::span(&f, 1), random_orthonormal_projection(4, 4, 0), cfg),
               ConfigError);
}

TEST(SplitBatches, LastBatchMayBeShorter) {
  const Tensor<float> f = random_map(Shape{5, 2, 1, 1}, 0);
  const auto b = split_batches(f, 2);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2].dim(0), 1);
  EXPECT_EQ(b[2][0], f[8]);
}

TEST(StyleParams, ValidateRejectsBadValues) {
  EXPECT_NO_THROW(style({0, 1}, {1, 2}).validate());
  EXPECT_THROW(style({0, 1}, {1}).validate(), DimensionError);
  EXPECT_THROW(style({0, 1}, {1, 0}).validate(), ConfigError);
  EXPECT_THROW(style({0, NAN}, {1, 1}).validate(), ConfigError);
}

TEST(StyleBank, SampleFromEmptyBankThrows) {
  const StyleBank bank(4);
  EXPECT_THROW(sample_style(bank, 0), StateError);
}

TEST(StyleBank, SingleEntryAlwaysDrawn) {
  StyleBank bank(2);
  bank.append(style({1, 2}, {1, 1}));
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(&sample_style(bank, s), &bank[0]);
}

TEST(StyleBank, UniformDraws) {
  StyleBank bank(1);
  for (int i = 0; i < 8; ++i) bank.append(style({static_cast<float>(i)}, {1}));
  std::map<const StyleParams<float>*, int> counts;
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) ++counts[&sample_style(bank, rng)];
  ASSERT_EQ(counts.size(), 8u);
  for (const auto& [entry, n] : counts) EXPECT_NEAR(n / 10000.0, 0.125, 0.02);
  EXPECT_EQ(&sample_style(bank, 77), &sample_style(bank, 77));
}

TEST(StyleBank, AppendOnlyChecksum) {
  StyleBank bank(2);
  bank.append(style({1, 2}, {1, 1}));
  const std::uint64_t one = bank.checksum();
  bank.append(style({3, 4}, {2, 2}));
  const std::uint64_t two = bank.checksum();
  EXPECT_NE(one, two);
  for (std::uint64_t s = 0; s < 100; ++s) sample_style(bank, s);
  EXPECT_EQ(bank.checksum(), two);
  EXPECT_THROW(bank.append(style({1}, {1})), DimensionError);
  EXPECT_THROW(bank.append(style({1, 1}, {1, -1})), ConfigError);
  EXPECT_EQ(bank.size(), 2u);
}

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "sevo/disentangle.hpp"
#include "sevo/sgd.hpp"

using namespace sevo;
using sevo::testing::random_tensor;

namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

double loss_d_at(double sim_style, double sim_content, double tau) {
  Graph<double> g;
  return loss_d_from_similarities(g.constant(Tensor<double>::scalar(sim_style)),
                                  g.constant(Tensor<double>::scalar(sim_content)), tau)
      .value()
      .item();
}

}  // namespace

TEST(Extractor, IdentityInitReproducesInput) {
  Rng rng(1);
  Extractor<double> e = Extractor<double>::identity(3, 0.0, rng);
  const Tensor<double> x = random_tensor(Shape{2, 3, 4, 5}, rng, 2.0);
  Graph<double> g;
  EXPECT_LT(max_abs_diff(e(g.constant(x)).value(), x), 1e-12);
}

TEST(Extractor, ZerosGiveZeroMap) {
  Rng rng(2);
  Extractor<double> e = Extractor<double>::zeros(3);
  Graph<double> g;
  const Tensor<double> y = e(g.constant(random_tensor(Shape{1, 3, 3, 3}, rng))).value();
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  EXPECT_LT(y.array().abs().maxCoeff(), 1e-15);
}

TEST(LossD, AnalyticValues) {
  Rng rng(3);
  Extractor<double> same = Extractor<double>::identity(3, 0.0, rng, "s");
  Extractor<double> zero = Extractor<double>::zeros(3, "c");
  Extractor<double> same2 = Extractor<double>::identity(3, 0.0, rng, "c2");
  const Tensor<double> f1 = random_tensor(Shape{2, 3, 4, 4}, rng);
  {
    Graph<double> g;
    const double l = loss_d(split(g.constant(f1), same, zero), 1.0).value().item();
    EXPECT_NEAR(l, std::log1p(std::exp(-1.0)), 1e-9);
    EXPECT_NEAR(l, 0.31326, 1e-5);
  }
  {
    Graph<double> g;
    EXPECT_NEAR(loss_d(split(g.constant(f1), same, same2), 1.0).value().item(), std::log(2.0), 1e-9);
  }
}

TEST(LossD, MonotoneInBothSimilarities) {
  for (double tau : {0.5, 1.0, 2.0}) {
    for (double a = -1.0; a < 1.0; a += 0.25) {
      for (double b = -1.0; b < 1.0; b += 0.25) {
        const double l = loss_d_at(a, b, tau);
        EXPECT_GT(l, 0.0);
        EXPECT_LT(loss_d_at(a + 0.25, b, tau), l);
        EXPECT_GT(loss_d_at(a, b + 0.25, tau), l);
      }
    }
  }
}

TEST(LossD, RejectsNonPositiveTemperature) {
  EXPECT_THROW(loss_d_at(0.5, 0.1, 0.0), ConfigError);
}

TEST(LossSc, AlignedOrthogonalOpposite) {
  Tensor<double> proj(Shape{2, 2}, {1, 0, 0, 1});
  const Tensor<double> text(Shape{2}, {0, 1});
  auto sc = [&](std::initializer_list<double> px) {
    Graph<double> g;
    return loss_sc(g.constant(Tensor<double>(Shape{1, 2, 1, 1}, px)), g.constant(text), g.constant(proj)).value().item();
  };
  EXPECT_NEAR(sc({0, 4}), 0.0, 1e-9);
  EXPECT_NEAR(sc({1, 0}), 1.0, 1e-9);
  EXPECT_NEAR(sc({0, -1}), 2.0, 1e-9);
}

TEST(LossGc, AlignedOrthogonalOpposite) {
  Rng rng(4);
  DimensionMatcher<double> m = DimensionMatcher<double>::random(2, 2, 1, 1, rng);
  m.channel_map.value = Tensor<double>(Shape{2, 2, 1, 1}, {1, 0, 0, 1});
  auto gc = [&](std::initializer_list<double> content) {
    Graph<double> g;
    // 2x2 map whose average is (1, 0).
    const Tensor<double> p(Shape{1, 2, 2, 2}, {2, 0, 1, 1, 0, 0, 0, 0});
    return loss_gc(g.constant(p), g.constant(Tensor<double>(Shape{1, 2, 1, 1}, content)), m).value().item();
  };
  EXPECT_NEAR(gc({5, 0}), 0.0, 1e-9);
  EXPECT_NEAR(gc({0, 1}), 1.0, 1e-9);
  EXPECT_NEAR(gc({-2, 0}), 2.0, 1e-9);
}

TEST(DimensionMatcher, OutputShapeAndFrozen) {
  Rng rng(5);
  DimensionMatcher<double> m = DimensionMatcher<double>::random(8, 4, 6, 6, rng);
  EXPECT_FALSE(m.channel_map.trainable);
  Graph<double> g;
  EXPECT_EQ(m(g.constant(random_tensor(Shape{2, 8, 3, 3}, rng))).shape(), (Shape{2, 4, 6, 6}));
}

TEST(Fuse, ExplicitIdentityConv) {
  Fuse<double> f = Fuse<double>::identity(3);
  for (Index c = 0; c < 3; ++c) f.weight.value.at(c, c, 0, 0) = 1.0;
  Rng rng(6);
  const Tensor<double> styled = random_tensor(Shape{2, 3, 3, 3}, rng);
  const Tensor<double> content = random_tensor(Shape{2, 3, 3, 3}, rng);
  {
    Graph<double> g;
    EXPECT_LT(max_abs_diff(f(g.constant(styled), g.constant(Tensor<double>(content.shape()))).value(), styled), 1e-12);
  }
  {
    Graph<double> g;
    Tensor<double> twice = content;
    twice.array() *= 2.0;
    EXPECT_LT(max_abs_diff(f(g.constant(content), g.constant(content)).value(), twice), 1e-12);
  }
}

TEST(Fuse, DefaultInitAveragesStreams) {
  Fuse<double> f = Fuse<double>::identity(2);
  Rng rng(7);
  const Tensor<double> a = random_tensor(Shape{1, 2, 2, 2}, rng);
  const Tensor<double> b = random_tensor(Shape{1, 2, 2, 2}, rng);
  Graph<double> g;
  Tensor<double> mean_ab = a;
  mean_ab.array() = 0.5 * (a.array() + b.array());
  EXPECT_LT(max_abs_diff(f(g.constant(a), g.constant(b)).value(), mean_ab), 1e-12);
}

TEST(Disentangle, TrainingHalvesLoss) {
  Rng rng(8);
  Extractor<double> es = Extractor<double>::identity(4, 0.05, rng, "style");
  Extractor<double> ec = Extractor<double>::identity(4, 0.05, rng, "content");
  std::vector<Param<double>*> params = es.params();
  for (Param<double>* p : ec.params()) params.push_back(p);
  Sgd<double> opt(params, {0.1, 0.9, 0.0});
  const Tensor<double> f1 = random_tensor(Shape{2, 4, 6, 6}, rng);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 300; ++step) {
    opt.zero_grad();
    Graph<double> g;
    Var<double> l = loss_d(split(g.constant(f1), es, ec), 1.0);
    if (step == 0) first = l.value().item();
    last = l.value().item();
    g.backward(l);
    opt.step();
  }
  EXPECT_NEAR(first, std::log(2.0), 0.05);
  EXPECT_LE(last, 0.5 * first);
}

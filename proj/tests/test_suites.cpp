#include <gtest/gtest.h>

#include "support/suites.hpp"

using namespace sevo::testing;

TEST(Suites, GradientsMatchFiniteDifferences) {
  const GradientSuite s = run_gradient_suite(3);
  EXPECT_GE(s.instances, 90);
  for (const CaseResult& c : s.cases) EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
}

TEST(Suites, AdaptiveNormalization) {
  const AdainSuite s = run_adain_suite(50);
  EXPECT_LT(s.max_abs_mean, 1e-5);
  EXPECT_LT(s.max_std_error, 1e-3);
  EXPECT_LT(s.max_roundtrip_error, 1e-3);
}

TEST(Suites, ChainAccumulation) {
  const ChainSuite s = run_chain_suite(200);
  EXPECT_EQ(s.chains, 200);
  EXPECT_EQ(s.linearity_failures, 0);
  EXPECT_LT(s.max_scale_delta, 1e-6);
}

TEST(Suites, StyleTrainingConverges) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const StyleTrainingRun r = run_style_training(seed, 500);
    EXPECT_LE(r.final_loss, 0.05) << seed;
    EXPECT_GE(r.steps_to_threshold, 0) << seed;
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sevo/config.hpp"
#include "sevo/harness.hpp"
#include "sevo/report.hpp"

using namespace sevo;

namespace {

RunConfig small_config(Variant v = Variant::Full) {
  RunConfig cfg;
  cfg.bank_size = 2;
  cfg.style.steps = 60;
  cfg.train_samples = 64;
  cfg.eval_samples = 64;
  cfg.epochs = 1;
  cfg.flags = AblationFlags::of(v);
  return cfg;
}

struct Fixture {
  RunConfig cfg;
  TextContext text;
  SeedStreams streams;
  Dataset train;
  Matrix<float> proj;
  Embedding source_text;

  explicit Fixture(RunConfig c)
      : cfg(std::move(c)),
        text(make_text(cfg)),
        streams(SeedStreams::of(cfg.seed)),
        train(gen_synthetic(source_domain(cfg.classes), cfg.train_samples, streams.data)),
        proj(random_orthonormal_projection(cfg.text_dim, cfg.channels, streams.projection)),
        source_text(source_text_features(text.vocab, *text.encoder)) {}

  TinyModel model() const { return TinyModel::init(cfg, streams.backbone); }
};

AblationReport fake_report(std::vector<double> baseline, std::vector<double> full) {
  AblationReport r;
  for (Variant v : kAblationRows) r.variants.emplace_back(to_string(v));
  r.domains = {"source", "night"};
  for (std::size_t s = 0; s < baseline.size(); ++s) r.seeds.push_back(s);
  r.raw.assign(5, {});
  for (std::size_t v = 0; v < 5; ++v) {
    for (std::size_t s = 0; s < baseline.size(); ++s) {
      const double shifted = v == 4 ? full[s] : baseline[s];
      r.raw[v].push_back({0.9, shifted});
    }
  }
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(Synthetic, DeterministicPerSeed) {
  const SyntheticDomain d = source_domain(4);
  const Dataset a = gen_synthetic(d, 32, 5), b = gen_synthetic(d, 32, 5), c = gen_synthetic(d, 32, 6);
  EXPECT_TRUE((a.images.array() == b.images.array()).all());
  EXPECT_FALSE((a.images.array() == c.images.array()).all());
  EXPECT_EQ(a.images.shape(), (Shape{32, kImageChannels, kImageSize, kImageSize}));
  for (Index i = 0; i < 32; ++i) EXPECT_EQ(a.labels[static_cast<std::size_t>(i)], i % 4);
}

TEST(Synthetic, MeanShiftIsExactOffset) {
  SyntheticDomain plain{"plain", 4};
  SyntheticDomain shifted{"shifted", 4, {2.0, 2.0, 2.0}};
  const Dataset a = gen_synthetic(plain, 8, 1), b = gen_synthetic(shifted, 8, 1);
  EXPECT_LT(((b.images.array() - a.images.array()) - 2.0f).abs().maxCoeff(), 1e-5);
}

TEST(Synthetic, IdentityStyleKeepsBaseImages) {
  SyntheticDomain plain{"plain", 4};
  SyntheticDomain same{"same", 4, {0.0, 0.0, 0.0}, 1.0, 0.0};
  EXPECT_TRUE((gen_synthetic(plain, 8, 3).images.array() == gen_synthetic(same, 8, 3).images.array()).all());
}

TEST(Synthetic, DomainValidation) {
  EXPECT_THROW((SyntheticDomain{"x", 4, {}, 0.0}.validate()), ConfigError);
  EXPECT_THROW((SyntheticDomain{"x", 4, {}, 1.0, -0.1}.validate()), ConfigError);
  EXPECT_THROW((SyntheticDomain{"x", 1}.validate()), ConfigError);
  std::vector<std::string> names;
  for (const SyntheticDomain& d : target_domains(4)) names.push_back(d.name);
  EXPECT_EQ(names, (std::vector<std::string>{"night", "rain", "night_rain", "fog"}));
}

TEST(Variants, ParseAndFlags) {
  for (Variant v : kAblationRows) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("all"), ConfigError);
  EXPECT_FALSE(AblationFlags::of(Variant::Baseline).styles());
  EXPECT_TRUE(AblationFlags::of(Variant::OneStep).one_step);
  const AblationFlags full = AblationFlags::of(Variant::Full);
  EXPECT_TRUE(full.cgse && full.sdm && full.cpcm && !full.one_step);
  EXPECT_THROW((AblationFlags{true, true, false, false}.validate()), ConfigError);
  EXPECT_THROW((AblationFlags{false, false, false, true}.validate()), ConfigError);
}

TEST(StyleEvolution, ZeroBankSizeRejected) {
  RunConfig cfg = small_config();
  cfg.bank_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(StyleEvolution, ChainLevelChangesTextAndStyle) {
  RunConfig c1 = small_config(), c3 = small_config();
  c1.chain_level = 1;
  c1.bank_size = c3.bank_size = 1;
  const TextContext text = make_text(c1);
  const EvolutionResult e1 = evolve_styles(c1, text.setup());
  const EvolutionResult e3 = evolve_styles(c3, text.setup());
  ASSERT_EQ(e1.bank.size(), 1u);
  EXPECT_EQ(e1.chains[0].words, e3.chains[0].words);
  EXPECT_FALSE((e1.texts[0].array() == e3.texts[0].array()).all());
  EXPECT_FALSE((e1.bank[0].mu.array() == e3.bank[0].mu.array()).all());
}

TEST(StyleEvolution, SingleEntryConverges) {
  RunConfig cfg = small_config();
  cfg.bank_size = 1;
  cfg.style.steps = 500;
  const TextContext text = make_text(cfg);
  const EvolutionResult e = evolve_styles(cfg, text.setup());
  ASSERT_EQ(e.final_losses.size(), 1u);
  EXPECT_LE(e.final_losses[0], 0.05);
  EXPECT_FALSE(e.bank[0].provenance.empty());
}

TEST(Transfer, BaselineLogsNoAuxiliaryLosses) {
  Fixture fx(small_config(Variant::Baseline));
  TinyModel m = fx.model();
  const TransferResult r = run_transfer_training(fx.cfg, m, nullptr, fx.train, fx.source_text, fx.proj);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_FALSE(r.log[0].loss_d || r.log[0].loss_sc || r.log[0].loss_gc);
  EXPECT_DOUBLE_EQ(r.log[0].total_loss, r.log[0].task_loss);
  EXPECT_EQ(r.step_losses.size(), 16u);
}

TEST(Transfer, FullArmLogsEveryLoss) {
  Fixture fx(small_config(Variant::Full));
  TinyModel m = fx.model();
  const EvolutionResult e = evolve_styles(fx.cfg, fx.text.setup(), m, fx.train, fx.proj);
  const TransferResult r = run_transfer_training(fx.cfg, m, &e.bank, fx.train, fx.source_text, fx.proj);
  EXPECT_TRUE(r.log[0].loss_d && r.log[0].loss_sc && r.log[0].loss_gc);
  EXPECT_EQ(r.bank_checksum_before, r.bank_checksum_after);
  EXPECT_EQ(r.bank_checksum_after, e.bank.checksum());
}

TEST(Transfer, StyleArmNeedsBank) {
  Fixture fx(small_config(Variant::Cgse));
  TinyModel m = fx.model();
  const StyleBank empty(fx.cfg.channels);
  EXPECT_THROW(run_transfer_training(fx.cfg, m, &empty, fx.train, fx.source_text, fx.proj), ConfigError);
}

TEST(Transfer, FreezeKeepsEarlyLayers) {
  RunConfig cfg = small_config(Variant::Baseline);
  cfg.freeze = true;
  Fixture fx(cfg);
  TinyModel m = fx.model();
  std::vector<Param<float>*> early = {&m.layer1.weight, &m.layer1.bias, &m.layer2.weight,
                                      &m.layer2.bias,   &m.layer3.weight, &m.layer3.bias};
  std::vector<Param<float>*> late = {&m.layer4.weight, &m.head_w};
  const std::uint64_t early_before = param_checksum(early), late_before = param_checksum(late);
  run_transfer_training(fx.cfg, m, nullptr, fx.train, fx.source_text, fx.proj);
  EXPECT_EQ(param_checksum(early), early_before);
  EXPECT_NE(param_checksum(late), late_before);
}

TEST(Transfer, BaselineMatchesPlainTrainingLoop) {
  Fixture fx(small_config(Variant::Baseline));
  TinyModel ours = fx.model();
  run_transfer_training(fx.cfg, ours, nullptr, fx.train, fx.source_text, fx.proj);

  // Plain classifier loop over the same backbone start.
  TinyModel ref = fx.model();
  std::vector<Param<float>*> params = ref.backbone_params();
  Sgd<float> opt(params, fx.cfg.train_sgd);
  ConvBlock<float>* blocks[4] = {&ref.layer1, &ref.layer2, &ref.layer3, &ref.layer4};
  const Index n = fx.train.size();
  for (int epoch = 1; epoch <= fx.cfg.epochs; ++epoch) {
    const std::vector<Index> order = epoch_order(n, epoch, fx.streams.order);
    for (Index start = 0; start < n; start += fx.cfg.batch) {
      const Index take = std::min(fx.cfg.batch, n - start);
      const Dataset b = fx.train.gather(std::span<const Index>(order).subspan(static_cast<std::size_t>(start),
                                                                               static_cast<std::size_t>(take)));
      Graph<float> g;
      Var<float> h = g.constant(b.images);
      for (ConvBlock<float>* blk : blocks) {
        h = relu(conv2d(h, g.param(blk->weight), g.param(blk->bias), blk->stride, 1));
      }
      const Index c = h.value().dim(1);
      Var<float> logits = linear(reshape(adaptive_avg_pool2d(h, 1, 1), Shape{take, c}), g.param(ref.head_w),
                                 g.param(ref.head_b));
      opt.zero_grad();
      g.backward(cross_entropy(logits, std::span<const int>(b.labels)));
      clip_grad_norm(std::span<Param<float>* const>(params), fx.cfg.clip_norm);
      opt.step();
    }
  }
  const std::vector<Param<float>*> a = ours.backbone_params();
  ASSERT_EQ(a.size(), params.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LT((a[i]->value.array() - params[i]->value.array()).abs().maxCoeff(), 1e-6) << a[i]->name;
  }
}

TEST(Transfer, GraphIndependentOfChainLevel) {
  std::uint64_t hashes[2];
  for (int i = 0; i < 2; ++i) {
    RunConfig cfg = small_config(Variant::Full);
    cfg.chain_level = i == 0 ? 1 : 3;
    Fixture fx(cfg);
    TinyModel m = fx.model();
    const EvolutionResult e = evolve_styles(fx.cfg, fx.text.setup(), m, fx.train, fx.proj);
    hashes[i] = run_transfer_training(fx.cfg, m, &e.bank, fx.train, fx.source_text, fx.proj).graph_hash;
  }
  EXPECT_NE(hashes[0], 0u);
  EXPECT_EQ(hashes[0], hashes[1]);
}

TEST(Transfer, FullArmTaskLossDrops) {
  std::vector<double> drops;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.flags = AblationFlags::of(Variant::Full);
    Fixture fx(cfg);
    TinyModel m = fx.model();
    const EvolutionResult e = evolve_styles(fx.cfg, fx.text.setup(), m, fx.train, fx.proj);
    const TransferResult r = run_transfer_training(fx.cfg, m, &e.bank, fx.train, fx.source_text, fx.proj);
    const double first = r.log.front().task_loss, last = r.log.back().task_loss;
    drops.push_back((first - last) / first);
  }
  EXPECT_GE(median(drops), 0.2);
}

TEST(Evaluation, UntrainedNearChanceTrainedAccurate) {
  RunConfig cfg;
  cfg.epochs = 4;
  cfg.flags = AblationFlags::of(Variant::Baseline);
  Fixture fx(cfg);
  TinyModel m = fx.model();
  const Dataset held_out = gen_synthetic(source_domain(cfg.classes), 256, fx.streams.eval);
  EXPECT_NEAR(accuracy(m, cfg.flags, held_out), 0.25, 0.05);
  run_transfer_training(fx.cfg, m, nullptr, fx.train, fx.source_text, fx.proj);
  EXPECT_GT(accuracy(m, cfg.flags, held_out), 0.9);
}

TEST(Evaluation, DeterministicAndRejectsEmptyDomains) {
  Fixture fx(small_config(Variant::Baseline));
  TinyModel m = fx.model();
  const std::vector<SyntheticDomain> domains = target_domains(4);
  const auto a = evaluate_shift(m, fx.cfg.flags, domains, 32, 9);
  const auto b = evaluate_shift(m, fx.cfg.flags, domains, 32, 9);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].domain, domains[i].name);
    EXPECT_EQ(a[i].accuracy, b[i].accuracy);
  }
  EXPECT_THROW(evaluate_shift(m, fx.cfg.flags, {}, 32, 9), ConfigError);
}

TEST(Experiment, RejectsEncoderDimMismatch) {
  RunConfig cfg = small_config();
  const TextContext text = make_text(cfg);
  cfg.text_dim = 8;
  EXPECT_THROW(run_experiment(cfg, text.setup()), ConfigError);
}

TEST(Ablation, ReportStructure) {
  RunConfig cfg = small_config();
  cfg.bank_size = 1;
  cfg.style.steps = 20;
  cfg.train_samples = 32;
  cfg.eval_samples = 32;
  cfg.ablation_seeds = 2;
  const TextContext text = make_text(cfg);
  const AblationReport r = run_ablation(cfg, text.setup());
  ASSERT_EQ(r.variants.size(), 5u);
  EXPECT_EQ(r.variants.front(), "baseline");
  EXPECT_EQ(r.variants.back(), "full");
  EXPECT_EQ(r.domains, (std::vector<std::string>{"source", "night", "rain", "night_rain", "fog"}));
  ASSERT_EQ(r.raw.size(), 5u);
  for (const auto& per_variant : r.raw) {
    ASSERT_EQ(per_variant.size(), 2u);
    for (const auto& row : per_variant) EXPECT_EQ(row.size(), 5u);
  }
  const std::string tsv = format_ablation_tsv(r);
  EXPECT_EQ(tsv.rfind("variant\tsource\tnight\train\tnight_rain\tfog\tmean_shifted\n", 0), 0u);
  EXPECT_NE(tsv.find(trend_line(r)), std::string::npos);
}

TEST(Ablation, TrendFlag) {
  const std::vector<double> base(5, 0.5);
  const AblationReport good = fake_report(base, {0.6, 0.5, 0.7, 0.4, 0.6});
  EXPECT_EQ(good.full_at_least_baseline(), 4);
  EXPECT_TRUE(good.trend_holds());
  EXPECT_EQ(trend_line(good), "# full >= baseline in 4/5 seeds");

  const AblationReport bad = fake_report(base, {0.6, 0.4, 0.7, 0.4, 0.6});
  EXPECT_FALSE(bad.trend_holds());
  EXPECT_EQ(trend_line(bad), "# full >= baseline in 3/5 seeds VIOLATION");
  EXPECT_NE(format_ablation_json(bad).find("\"trend_holds\": false"), std::string::npos);
}

TEST(Ablation, ShiftedMeansExcludeSource) {
  const AblationReport r = fake_report({0.5, 0.7}, {0.6, 0.6});
  EXPECT_DOUBLE_EQ(r.shifted(0, 1), 0.7);
  EXPECT_DOUBLE_EQ(r.mean_shifted(0), 0.6);
  EXPECT_DOUBLE_EQ(r.mean(0, 0), 0.9);
}

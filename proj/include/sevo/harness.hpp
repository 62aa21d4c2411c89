#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevo/disentangle.hpp"
#include "sevo/prompt_chain.hpp"
#include "sevo/proto_cluster.hpp"
#include "sevo/style.hpp"

namespace sevo {

inline constexpr Index kImageChannels = 3;
inline constexpr Index kImageSize = 32;

/// Per-channel affine shift plus Gaussian pixel noise applied to the base shape images:
///   x' = scale_shift * x + mean_shift[c] + noise * N(0, 1)
struct SyntheticDomain {
  std::string name;
  int classes = 4;
  std::array<double, 3> mean_shift{0.0, 0.0, 0.0};
  double scale_shift = 1.0;
  double noise = 0.0;

  /// Throws ConfigError on scale_shift <= 0, negative noise or fewer than two classes.
  void validate() const;
};

struct Dataset {
  Tensor<float> images;  // (N, 3, 32, 32)
  std::vector<int> labels;

  Index size() const noexcept { return static_cast<Index>(labels.size()); }
  Dataset gather(std::span<const Index> indices) const;
};

/// n labeled images; sample i has label i % classes. The shape layout depends
/// only on (seed, i), the pixel noise on a separate stream, so two domains
/// generated from one seed differ exactly by their style descriptor.
Dataset gen_synthetic(const SyntheticDomain& domain, Index n, std::uint64_t seed);

SyntheticDomain source_domain(int classes);
/// night, rain, night_rain, fog.
std::vector<SyntheticDomain> target_domains(int classes);

enum class Variant { Baseline, OneStep, Cgse, CgseSdm, Full };
inline constexpr std::array<Variant, 5> kAblationRows = {Variant::Baseline, Variant::OneStep, Variant::Cgse,
                                                        Variant::CgseSdm, Variant::Full};
std::string_view to_string(Variant v);
/// Accepts baseline, one_step, cgse, cgse_sdm, full. Throws ConfigError otherwise.
Variant parse_variant(std::string_view name);

struct AblationFlags {
  bool one_step = false;
  bool cgse = false;
  bool sdm = false;
  bool cpcm = false;

  static AblationFlags of(Variant v);
  bool styles() const noexcept { return one_step || cgse; }
  /// one_step and cgse are exclusive; cpcm needs sdm.
  void validate() const;
  bool operator==(const AblationFlags&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;

  int bank_size = 8;
  StyleTrainConfig style{};
  int chain_level = 3;
  Index style_samples = 16;

  double tau = 1.0;
  std::array<double, 3> loss_weights{1.0, 1.0, 1.0};  // L_d, L_sc, L_gc
  double init_noise_std = 0.01;

  int proto_k = 0;  // 0: one prototype per class
  double center_init_std = 0.1;

  Index text_dim = 16;
  std::string encoder = "fake";
  std::string embeddings;
  std::string vocabulary;

  Index channels = 16;

  int classes = 4;
  Index train_samples = 256;
  Index eval_samples = 256;

  int epochs = 2;
  SgdConfig train_sgd{0.02, 0.9, 0.0005};
  Index batch = 4;
  double clip_norm = 2.0;  // 0 disables
  bool freeze = false;
  double aux_weight = 0.01;

  AblationFlags flags{};
  int ablation_seeds = 5;

  int prototypes() const noexcept { return proto_k > 0 ? proto_k : classes; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

template <typename Scalar>
struct ConvBlock {
  Param<Scalar> weight;
  Param<Scalar> bias;
  int stride = 1;

  /// relu(conv3x3(x)), padding 1.
  Var<Scalar> operator()(Var<Scalar> x);
};

/// Four stride-2 conv blocks, global average pooling and a linear classifier,
/// plus the disentangling, fusing and prototype modules used by the ablation arms.
/// 32x32 input gives layer outputs of 16x16 (C), 8x8, 4x4 and 2x2 (2C).
struct TinyModel {
  ConvBlock<float> layer1, layer2, layer3, layer4;
  Param<float> head_w, head_b;
  Extractor<float> style_extractor, content_extractor;
  Fuse<float> fuse;
  PrototypeBank<float> content_protos;   // on layer-1 content features
  PrototypeBank<float> semantic_protos;  // on layer-4 features, yields F_p
  DimensionMatcher<float> matcher;       // layer 4 onto layer 1

  /// Backbone weights come from one stream of `seed`, the auxiliary modules
  /// from another, so every ablation arm shares the same backbone start.
  static TinyModel init(const RunConfig& cfg, std::uint64_t seed);

  Index channels() const { return layer1.weight.value.dim(0); }

  std::vector<Param<float>*> backbone_params();
  std::vector<Param<float>*> params();
  /// Parameters the optimizer sees for the given arm.
  std::vector<Param<float>*> trainable_params(const AblationFlags& flags);
  /// Marks layers 1 to 3 frozen (or trainable again).
  void set_frozen(bool frozen);
};

/// Order-sensitive hash of the bits of the given parameters.
std::uint64_t param_checksum(std::span<Param<float>* const> params);

/// Layer-1 feature maps of `images` (no graph kept).
Tensor<float> layer1_features(TinyModel& model, const Tensor<float>& images);

struct TransferInputs {
  const StyleParams<float>* style = nullptr;  // null: no style transfer
  Tensor<float> source_text;                  // (D), for L_sc
  Tensor<float> projection;                   // (D, C)
  double tau = 1.0;
};

struct ForwardResult {
  Var<float> logits;
  std::optional<Var<float>> loss_d;
  std::optional<Var<float>> loss_sc;
  std::optional<Var<float>> loss_gc;
};

/// One forward pass for the given arm. `inputs` is null at evaluation time,
/// which disables style transfer and the auxiliary losses.
ForwardResult forward(Graph<float>& g, TinyModel& model, const Tensor<float>& images, const AblationFlags& flags,
                      const TransferInputs* inputs);

/// Permutation of [0, n) for one epoch.
std::vector<Index> epoch_order(Index n, int epoch, std::uint64_t seed);

/// Named RNG streams derived from a run seed.
struct SeedStreams {
  std::uint64_t data, backbone, projection, chains, style_sampling, order, eval;
  static SeedStreams of(std::uint64_t seed);
};

/// Text side of the style evolution.
struct TextSetup {
  VocabularySet vocab;
  const TextEncoder* encoder = nullptr;
};

struct EvolutionResult {
  StyleBank bank;
  std::vector<PromptChain> chains;
  std::vector<Embedding> texts;
  std::vector<double> final_losses;
};

/// Trains cfg.bank_size style parameter sets against layer-1 source features.
/// Each entry uses its own chain; the text is the chain's level-cfg.chain_level
/// features, or the encoded sentence in one-step mode.
EvolutionResult run_style_evolution(const RunConfig& cfg, const TextSetup& text, std::span<const Tensor<float>> source_feats,
                                    const Matrix<float>& projection, bool one_step);

/// Style evolution on layer-1 features of the first cfg.style_samples training images.
EvolutionResult evolve_styles(const RunConfig& cfg, const TextSetup& text, TinyModel& model, const Dataset& train,
                              const Matrix<float>& projection);
/// Same, with the data, model and projection run_experiment would build for cfg.seed.
EvolutionResult evolve_styles(const RunConfig& cfg, const TextSetup& text);

struct EpochLog {
  int epoch = 0;
  double task_loss = 0.0;
  std::optional<double> loss_d;
  std::optional<double> loss_sc;
  std::optional<double> loss_gc;
  double total_loss = 0.0;
};

struct TransferResult {
  std::vector<EpochLog> log;
  /// Per-iteration task loss, in order.
  std::vector<double> step_losses;
  /// Structure hash of the first iteration's graph.
  std::uint64_t graph_hash = 0;
  std::uint64_t bank_checksum_before = 0;
  std::uint64_t bank_checksum_after = 0;
};

/// Trains `model` in place on `data`. Requires a non-empty bank when the arm uses styles.
TransferResult run_transfer_training(const RunConfig& cfg, TinyModel& model, const StyleBank* bank, const Dataset& data,
                                     const Embedding& source_text, const Matrix<float>& projection);

struct DomainAccuracy {
  std::string domain;
  double accuracy = 0.0;
};

double accuracy(TinyModel& model, const AblationFlags& flags, const Dataset& data, Index batch = 64);

/// Accuracy on freshly generated data for each domain. Throws ConfigError on an empty list.
std::vector<DomainAccuracy> evaluate_shift(TinyModel& model, const AblationFlags& flags,
                                           std::span<const SyntheticDomain> domains, Index samples, std::uint64_t seed);

/// Everything one (arm, seed) run produces.
struct RunOutcome {
  TinyModel model;
  EvolutionResult evolution;
  TransferResult transfer;
  std::vector<DomainAccuracy> accuracy;
};

/// Full two-stage run for cfg.flags and cfg.seed.
RunOutcome run_experiment(const RunConfig& cfg, const TextSetup& text);

struct AblationReport {
  std::vector<std::string> variants;
  std::vector<std::string> domains;  // source first
  std::vector<std::uint64_t> seeds;
  /// raw[variant][seed][domain]
  std::vector<std::vector<std::vector<double>>> raw;

  double mean(std::size_t variant, std::size_t domain) const;
  /// Mean over the shifted (non-source) domains for one run.
  double shifted(std::size_t variant, std::size_t seed) const;
  double mean_shifted(std::size_t variant) const;
  /// Seeds where the full pipeline's shifted accuracy is at least the baseline's.
  int full_at_least_baseline() const;
  /// True when the trend holds in at least four fifths of the seeds.
  bool trend_holds() const;
};

/// Runs the five arms for cfg.ablation_seeds consecutive seeds starting at cfg.seed.
AblationReport run_ablation(const RunConfig& cfg, const TextSetup& text);

}  // namespace sevo

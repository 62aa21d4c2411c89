#include "sevo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace sevo {
namespace {

enum class ShapeKind { HBar, VBar, Plus, Ring, Square, Disk, Diagonal };
constexpr int kShapeKinds = 7;

bool inside(ShapeKind kind, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  const double d2 = dx * dx + dy * dy;
  switch (kind) {
    case ShapeKind::Square: return ax <= r && ay <= r;
    case ShapeKind::Disk: return d2 <= r * r;
    case ShapeKind::HBar: return ay <= r / 3.0 && ax <= r + 2.0;
    case ShapeKind::VBar: return ax <= r / 3.0 && ay <= r + 2.0;
    case ShapeKind::Plus: return (ay <= r / 3.0 && ax <= r + 1.0) || (ax <= r / 3.0 && ay <= r + 1.0);
    case ShapeKind::Ring: return d2 <= r * r && d2 >= 0.3 * r * r;
    case ShapeKind::Diagonal: return std::abs(dx - dy) <= 1.5 && ax <= r + 1.0;
  }
  return false;
}

Tensor<float> gaussian(const Shape& shape, double sd, Rng& rng) {
  Tensor<float> t(shape);
  for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, sd));
  return t;
}

Tensor<float> he_normal(const Shape& shape, Index fan_in, Rng& rng) {
  return gaussian(shape, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

ConvBlock<float> conv_block(const std::string& name, Index in, Index out, Rng& rng) {
  return {Param<float>(name + ".weight", he_normal(Shape{out, in, 3, 3}, in * 9, rng)),
          Param<float>(name + ".bias", Tensor<float>(Shape{out})), 2};
}

void append(std::vector<Param<float>*>& out, std::vector<Param<float>*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

void SyntheticDomain::validate() const {
  if (classes < 2) throw ConfigError("synthetic domain '" + name + "' needs at least two classes");
  if (!(scale_shift > 0.0)) throw ConfigError("synthetic domain '" + name + "' needs a positive scale shift");
  if (!(noise >= 0.0)) throw ConfigError("synthetic domain '" + name + "' needs a non-negative noise level");
  for (double m : mean_shift) {
    if (!std::isfinite(m)) throw ConfigError("synthetic domain '" + name + "' has a non-finite mean shift");
  }
}

Dataset Dataset::gather(std::span<const Index> indices) const {
  const Index per = kImageChannels * kImageSize * kImageSize;
  Dataset out;
  out.images = Tensor<float>(Shape{static_cast<Index>(indices.size()), kImageChannels, kImageSize, kImageSize});
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    if (i < 0 || i >= size()) throw DimensionError("dataset index out of range");
    std::copy_n(images.data() + i * per, per, out.images.data() + static_cast<Index>(k) * per);
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

Dataset gen_synthetic(const SyntheticDomain& domain, Index n, std::uint64_t seed) {
  domain.validate();
  if (n < 1) throw ConfigError("gen_synthetic needs at least one sample");
  Dataset d;
  d.images = Tensor<float>(Shape{n, kImageChannels, kImageSize, kImageSize});
  d.labels.resize(static_cast<std::size_t>(n));
  const std::uint64_t layout_seed = derive_seed(seed, fnv1a("layout"));
  const std::uint64_t noise_seed = derive_seed(seed, fnv1a("noise"));
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % domain.classes);
    d.labels[static_cast<std::size_t>(i)] = label;
    Rng rng(derive_seed(layout_seed, static_cast<std::uint64_t>(i)));
    const auto kind = static_cast<ShapeKind>(label % kShapeKinds);
    const double cx = rng.uniform(13.0, 19.0), cy = rng.uniform(13.0, 19.0);
    const double r = rng.uniform(5.0, 8.0);
    std::array<double, 3> bg{}, fg{};
    for (int c = 0; c < 3; ++c) {
      bg[static_cast<std::size_t>(c)] = -1.0 + rng.uniform(-0.2, 0.2);
      fg[static_cast<std::size_t>(c)] = 1.0 + rng.uniform(-0.2, 0.2);
    }
    Rng noise(derive_seed(noise_seed, static_cast<std::uint64_t>(i)));
    for (Index c = 0; c < kImageChannels; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      for (Index y = 0; y < kImageSize; ++y) {
        for (Index x = 0; x < kImageSize; ++x) {
          const double base = inside(kind, static_cast<double>(x) - cx, static_cast<double>(y) - cy, r) ? fg[cu] : bg[cu];
          double v = domain.scale_shift * base + domain.mean_shift[cu];
          if (domain.noise > 0.0) v += domain.noise * noise.normal();
          d.images.at(i, c, y, x) = static_cast<float>(v);
        }
      }
    }
  }
  return d;
}

SyntheticDomain source_domain(int classes) { return {"source", classes, {0.0, 0.0, 0.0}, 1.0, 0.05}; }

std::vector<SyntheticDomain> target_domains(int classes) {
  return {{"night", classes, {-0.5, -0.5, -0.3}, 0.5, 0.05},
          {"rain", classes, {0.0, 0.0, 0.1}, 0.9, 0.35},
          {"night_rain", classes, {-0.5, -0.5, -0.5}, 0.5, 0.3},
          {"fog", classes, {0.5, 0.5, 0.5}, 0.35, 0.05}};
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::OneStep: return "one_step";
    case Variant::Cgse: return "cgse";
    case Variant::CgseSdm: return "cgse_sdm";
    case Variant::Full: return "full";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAblationRows) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected baseline, one_step, cgse, cgse_sdm or full)");
}

AblationFlags AblationFlags::of(Variant v) {
  switch (v) {
    case Variant::Baseline: return {};
    case Variant::OneStep: return {true, false, false, false};
    case Variant::Cgse: return {false, true, false, false};
    case Variant::CgseSdm: return {false, true, true, false};
    case Variant::Full: return {false, true, true, true};
  }
  return {};
}

void AblationFlags::validate() const {
  if (one_step && cgse) throw ConfigError("one_step and cgse are mutually exclusive");
  if (cpcm && !sdm) throw ConfigError("cpcm requires sdm");
}

void RunConfig::validate() const {
  flags.validate();
  if (bank_size < 1) throw ConfigError("style.bank_size must be at least 1");
  if (style.steps < 0) throw ConfigError("style.steps must be non-negative");
  if (style.batch < 1) throw ConfigError("style.batch must be positive");
  if (style_samples < 1) throw ConfigError("style.samples must be positive");
  if (chain_level < 1 || chain_level > 3) throw ConfigError("chain.level must be 1, 2 or 3");
  if (!(tau > 0.0)) throw ConfigError("disentangle.tau must be positive");
  if (init_noise_std < 0.0) throw ConfigError("disentangle.init_noise_std must be non-negative");
  if (proto_k != 0 && proto_k < 2) throw ConfigError("proto.k must be at least 2");
  if (center_init_std < 0.0) throw ConfigError("proto.center_init_std must be non-negative");
  if (text_dim < 1) throw ConfigError("text.dim must be positive");
  if (encoder != "fake" && encoder != "file") throw ConfigError("text.encoder must be 'fake' or 'file'");
  if (encoder == "file" && embeddings.empty()) throw ConfigError("text.encoder = file needs text.embeddings");
  if (channels < 1) throw ConfigError("model.channels must be positive");
  if (classes < 2) throw ConfigError("data.classes must be at least 2");
  if (train_samples < 1 || eval_samples < 1) throw ConfigError("sample counts must be positive");
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (batch < 1) throw ConfigError("train.batch must be positive");
  if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be non-negative");
  if (ablation_seeds < 1) throw ConfigError("ablation.seeds must be at least 1");
}

template <typename Scalar>
Var<Scalar> ConvBlock<Scalar>::operator()(Var<Scalar> x) {
  Graph<Scalar>& g = x.graph();
  return relu(conv2d(x, g.param(weight), g.param(bias), stride, 1));
}

template struct ConvBlock<float>;
template struct ConvBlock<double>;

TinyModel TinyModel::init(const RunConfig& cfg, std::uint64_t seed) {
  const Index c1 = cfg.channels, c2 = 2 * cfg.channels;
  Rng backbone(derive_seed(seed, fnv1a("backbone")));
  Rng aux(derive_seed(seed, fnv1a("auxiliary")));
  TinyModel m{conv_block("layer1", kImageChannels, c1, backbone),
              conv_block("layer2", c1, c2, backbone),
              conv_block("layer3", c2, c2, backbone),
              conv_block("layer4", c2, c2, backbone),
              Param<float>("head.weight", gaussian(Shape{cfg.classes, c2}, 0.01, backbone)),
              Param<float>("head.bias", Tensor<float>(Shape{cfg.classes})),
              Extractor<float>::identity(c1, cfg.init_noise_std, aux, "style_extractor"),
              Extractor<float>::identity(c1, cfg.init_noise_std, aux, "content_extractor"),
              Fuse<float>::identity(c1, "fuse"),
              PrototypeBank<float>::init(cfg.prototypes(), c1, cfg.center_init_std, aux, "content_protos"),
              PrototypeBank<float>::init(cfg.prototypes(), c2, cfg.center_init_std, aux, "semantic_protos"),
              DimensionMatcher<float>::random(c2, c1, kImageSize / 2, kImageSize / 2, aux)};
  m.set_frozen(cfg.freeze);
  return m;
}

std::vector<Param<float>*> TinyModel::backbone_params() {
  return {&layer1.weight, &layer1.bias, &layer2.weight, &layer2.bias, &layer3.weight,
          &layer3.bias,   &layer4.weight, &layer4.bias, &head_w,       &head_b};
}

std::vector<Param<float>*> TinyModel::params() {
  std::vector<Param<float>*> out = backbone_params();
  append(out, style_extractor.params());
  append(out, content_extractor.params());
  append(out, fuse.params());
  append(out, content_protos.params());
  append(out, semantic_protos.params());
  out.push_back(&matcher.channel_map);
  return out;
}

std::vector<Param<float>*> TinyModel::trainable_params(const AblationFlags& flags) {
  std::vector<Param<float>*> out = backbone_params();
  if (flags.sdm) {
    append(out, style_extractor.params());
    append(out, content_extractor.params());
    append(out, fuse.params());
  }
  if (flags.cpcm) {
    append(out, content_protos.params());
    append(out, semantic_protos.params());
  }
  return out;
}

void TinyModel::set_frozen(bool frozen) {
  for (Param<float>* p : {&layer1.weight, &layer1.bias, &layer2.weight, &layer2.bias, &layer3.weight, &layer3.bias}) {
    p->trainable = !frozen;
  }
}

std::uint64_t param_checksum(std::span<Param<float>* const> params) {
  std::uint64_t h = fnv1a("params");
  for (const Param<float>* p : params) {
    h = mix_seed(h ^ fnv1a(p->name));
    for (Index i = 0; i < p->value.numel(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, p->value.data() + i, sizeof bits);
      h = mix_seed(h ^ bits);
    }
  }
  return h;
}

Tensor<float> layer1_features(TinyModel& model, const Tensor<float>& images) {
  Graph<float> g;
  return model.layer1(g.constant(images)).value();
}

ForwardResult forward(Graph<float>& g, TinyModel& model, const Tensor<float>& images, const AblationFlags& flags,
                      const TransferInputs* inputs) {
  flags.validate();
  ForwardResult out;
  Var<float> f1 = model.layer1(g.constant(images));
  Var<float> style_stream = f1, content_stream;
  DisentangledPair<float> pair;
  if (flags.sdm) {
    pair = split(f1, model.style_extractor, model.content_extractor);
    style_stream = pair.style;
    content_stream = pair.content;
  }
  if (inputs && inputs->style && flags.styles()) {
    style_stream = apply_style(normalize(style_stream), *inputs->style);
  }
  if (flags.cpcm) content_stream = enhance(content_stream, model.content_protos);

  Var<float> h = flags.sdm ? model.fuse(style_stream, content_stream) : style_stream;
  h = model.layer4(model.layer3(model.layer2(h)));
  if (flags.cpcm) h = enhance(h, model.semantic_protos);

  const Index n = images.dim(0), c = h.value().dim(1);
  Var<float> pooled = reshape(adaptive_avg_pool2d(h, 1, 1), Shape{n, c});
  out.logits = linear(pooled, g.param(model.head_w), g.param(model.head_b));

  if (inputs && flags.sdm) {
    out.loss_d = loss_d(pair, inputs->tau);
    out.loss_sc = loss_sc(pair.style, g.constant(inputs->source_text), g.constant(inputs->projection));
    if (flags.cpcm) out.loss_gc = loss_gc(g.constant(h.value()), pair.content, model.matcher);
  }
  return out;
}

std::vector<Index> epoch_order(Index n, int epoch, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

SeedStreams SeedStreams::of(std::uint64_t seed) {
  auto s = [seed](std::string_view name) { return derive_seed(seed, fnv1a(name)); };
  return {s("data"), s("model"), s("projection"), s("chains"), s("style-sampling"), s("order"), s("eval")};
}

EvolutionResult run_style_evolution(const RunConfig& cfg, const TextSetup& text, std::span<const Tensor<float>> source_feats,
                                    const Matrix<float>& projection, bool one_step) {
  if (cfg.bank_size < 1) throw ConfigError("style.bank_size must be at least 1");
  if (cfg.chain_level < 1 || cfg.chain_level > 3) throw ConfigError("chain.level must be 1, 2 or 3");
  if (!text.encoder) throw ConfigError("style evolution needs a text encoder");
  const std::uint64_t chains_seed = SeedStreams::of(cfg.seed).chains;
  EvolutionResult r;
  for (int i = 0; i < cfg.bank_size; ++i) {
    PromptChain chain = sample_chain(text.vocab, *text.encoder, derive_seed(chains_seed, static_cast<std::uint64_t>(i)));
    Embedding f = one_step ? text.encoder->encode(chain.sentence) : chain.features(cfg.chain_level);
    std::string provenance = one_step ? "one-step: " + chain.sentence : chain.provenance(cfg.chain_level);
    StyleTrainResult trained = train_style_params(f, source_feats, projection, cfg.style, std::move(provenance));
    r.bank.append(trained.params);
    r.final_losses.push_back(trained.final_loss);
    r.texts.push_back(std::move(f));
    r.chains.push_back(std::move(chain));
  }
  return r;
}

TransferResult run_transfer_training(const RunConfig& cfg, TinyModel& model, const StyleBank* bank, const Dataset& data,
                                     const Embedding& source_text, const Matrix<float>& projection) {
  cfg.validate();
  const AblationFlags& flags = cfg.flags;
  if (flags.styles() && (!bank || bank->empty())) throw ConfigError("style transfer needs a non-empty style bank");
  if (bank && flags.styles() && bank->channels() != model.channels()) {
    throw DimensionError("style bank channels do not match layer 1");
  }
  const SeedStreams streams = SeedStreams::of(cfg.seed);
  TransferResult result;
  if (bank) result.bank_checksum_before = bank->checksum();

  TransferInputs inputs;
  inputs.source_text = vector_to_tensor(Vector<float>(source_text));
  inputs.projection = matrix_to_tensor(projection);
  inputs.tau = cfg.tau;

  const std::vector<Param<float>*> trainable = model.trainable_params(flags);
  Sgd<float> opt(trainable, cfg.train_sgd);
  Rng style_rng(streams.style_sampling);
  const Index n = data.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<Index> order = epoch_order(n, epoch, streams.order);
    EpochLog log;
    log.epoch = epoch;
    double sums[4] = {0, 0, 0, 0};
    int steps = 0;
    for (Index start = 0; start < n; start += cfg.batch) {
      const Index take = std::min(cfg.batch, n - start);
      const Dataset batch = data.gather(std::span<const Index>(order).subspan(static_cast<std::size_t>(start),
                                                                               static_cast<std::size_t>(take)));
      inputs.style = flags.styles() ? &sample_style(*bank, style_rng) : nullptr;
      Graph<float> g;
      ForwardResult fr = forward(g, model, batch.images, flags, &inputs);
      Var<float> task = cross_entropy(fr.logits, std::span<const int>(batch.labels));
      Var<float> total = task;
      const std::optional<Var<float>>* aux[3] = {&fr.loss_d, &fr.loss_sc, &fr.loss_gc};
      for (int k = 0; k < 3; ++k) {
        if (!aux[k]->has_value()) continue;
        total = add(total, affine(**aux[k], cfg.aux_weight * cfg.loss_weights[static_cast<std::size_t>(k)]));
        sums[k + 1] += (**aux[k]).value().item();
      }
      if (result.graph_hash == 0) result.graph_hash = g.structure_hash();
      opt.zero_grad();
      g.backward(total);
      clip_grad_norm(std::span<Param<float>* const>(trainable), cfg.clip_norm);
      opt.step();
      const double task_value = task.value().item();
      if (!std::isfinite(total.value().item())) throw StateError("training diverged: non-finite loss");
      result.step_losses.push_back(task_value);
      sums[0] += task_value;
      log.total_loss += total.value().item();
      ++steps;
    }
    const double denom = std::max(steps, 1);
    log.task_loss = sums[0] / denom;
    log.total_loss /= denom;
    if (flags.sdm) {
      log.loss_d = sums[1] / denom;
      log.loss_sc = sums[2] / denom;
    }
    if (flags.cpcm) log.loss_gc = sums[3] / denom;
    result.log.push_back(log);
  }
  if (bank) result.bank_checksum_after = bank->checksum();
  return result;
}

double accuracy(TinyModel& model, const AblationFlags& flags, const Dataset& data, Index batch) {
  Index correct = 0;
  const Index n = data.size();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index start = 0; start < n; start += batch) {
    const Index take = std::min(batch, n - start);
    const Dataset b = data.gather(std::span<const Index>(idx).subspan(static_cast<std::size_t>(start),
                                                                       static_cast<std::size_t>(take)));
    Graph<float> g;
    const Tensor<float>& logits = forward(g, model, b.images, flags, nullptr).logits.value();
    const Index classes = logits.dim(1);
    for (Index i = 0; i < take; ++i) {
      const float* row = logits.data() + i * classes;
      const Index pred = std::max_element(row, row + classes) - row;
      if (pred == b.labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<DomainAccuracy> evaluate_shift(TinyModel& model, const AblationFlags& flags,
                                           std::span<const SyntheticDomain> domains, Index samples, std::uint64_t seed) {
  if (domains.empty()) throw ConfigError("evaluate_shift needs at least one domain");
  std::vector<DomainAccuracy> out;
  for (const SyntheticDomain& d : domains) {
    const Dataset data = gen_synthetic(d, samples, seed);
    out.push_back({d.name, accuracy(model, flags, data)});
  }
  return out;
}

EvolutionResult evolve_styles(const RunConfig& cfg, const TextSetup& text, TinyModel& model, const Dataset& train,
                              const Matrix<float>& projection) {
  std::vector<Index> first(static_cast<std::size_t>(std::min(cfg.style_samples, train.size())));
  std::iota(first.begin(), first.end(), Index{0});
  const Tensor<float> feats = layer1_features(model, train.gather(first).images);
  const std::vector<Tensor<float>> batches = split_batches(feats, cfg.style.batch);
  return run_style_evolution(cfg, text, batches, projection, cfg.flags.one_step);
}

EvolutionResult evolve_styles(const RunConfig& cfg, const TextSetup& text) {
  cfg.validate();
  if (!text.encoder) throw ConfigError("style evolution needs a text encoder");
  const SeedStreams streams = SeedStreams::of(cfg.seed);
  const Dataset train = gen_synthetic(source_domain(cfg.classes), cfg.train_samples, streams.data);
  TinyModel model = TinyModel::init(cfg, streams.backbone);
  const Matrix<float> proj = random_orthonormal_projection(cfg.text_dim, cfg.channels, streams.projection);
  return evolve_styles(cfg, text, model, train, proj);
}

RunOutcome run_experiment(const RunConfig& cfg, const TextSetup& text) {
  cfg.validate();
  if (!text.encoder) throw ConfigError("experiment needs a text encoder");
  if (text.encoder->dim() != cfg.text_dim) {
    throw ConfigError("text encoder dimension " + std::to_string(text.encoder->dim()) + " differs from text.dim " +
                      std::to_string(cfg.text_dim));
  }
  const SeedStreams streams = SeedStreams::of(cfg.seed);
  const Dataset train = gen_synthetic(source_domain(cfg.classes), cfg.train_samples, streams.data);
  RunOutcome out{TinyModel::init(cfg, streams.backbone), {}, {}, {}};
  const Matrix<float> proj = random_orthonormal_projection(cfg.text_dim, cfg.channels, streams.projection);
  const Embedding source_text = source_text_features(text.vocab, *text.encoder);

  if (cfg.flags.styles()) out.evolution = evolve_styles(cfg, text, out.model, train, proj);
  out.transfer = run_transfer_training(cfg, out.model, &out.evolution.bank, train, source_text, proj);

  std::vector<SyntheticDomain> domains{source_domain(cfg.classes)};
  for (SyntheticDomain& d : target_domains(cfg.classes)) domains.push_back(std::move(d));
  out.accuracy = evaluate_shift(out.model, cfg.flags, domains, cfg.eval_samples, streams.eval);
  return out;
}

double AblationReport::mean(std::size_t variant, std::size_t domain) const {
  double s = 0.0;
  for (const auto& row : raw.at(variant)) s += row.at(domain);
  return s / static_cast<double>(raw.at(variant).size());
}

double AblationReport::shifted(std::size_t variant, std::size_t seed) const {
  const std::vector<double>& row = raw.at(variant).at(seed);
  if (row.size() < 2) return 0.0;
  return std::accumulate(row.begin() + 1, row.end(), 0.0) / static_cast<double>(row.size() - 1);
}

double AblationReport::mean_shifted(std::size_t variant) const {
  double s = 0.0;
  for (std::size_t k = 0; k < seeds.size(); ++k) s += shifted(variant, k);
  return s / static_cast<double>(seeds.size());
}

int AblationReport::full_at_least_baseline() const {
  const auto find = [this](Variant v) {
    const auto it = std::find(variants.begin(), variants.end(), std::string(to_string(v)));
    if (it == variants.end()) throw StateError("report lacks the " + std::string(to_string(v)) + " row");
    return static_cast<std::size_t>(it - variants.begin());
  };
  const std::size_t base = find(Variant::Baseline), full = find(Variant::Full);
  int count = 0;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (shifted(full, k) >= shifted(base, k)) ++count;
  }
  return count;
}

bool AblationReport::trend_holds() const {
  const int n = static_cast<int>(seeds.size());
  return full_at_least_baseline() * 5 >= n * 4;
}

AblationReport run_ablation(const RunConfig& cfg, const TextSetup& text) {
  cfg.validate();
  AblationReport report;
  for (Variant v : kAblationRows) report.variants.emplace_back(to_string(v));
  report.domains.push_back(source_domain(cfg.classes).name);
  for (const SyntheticDomain& d : target_domains(cfg.classes)) report.domains.push_back(d.name);
  for (int k = 0; k < cfg.ablation_seeds; ++k) report.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(k));
  report.raw.assign(kAblationRows.size(), {});
  for (std::size_t v = 0; v < kAblationRows.size(); ++v) {
    for (std::uint64_t seed : report.seeds) {
      RunConfig run = cfg;
      run.seed = seed;
      run.flags = AblationFlags::of(kAblationRows[v]);
      const RunOutcome outcome = run_experiment(run, text);
      std::vector<double> row;
      for (const DomainAccuracy& a : outcome.accuracy) row.push_back(a.accuracy);
      report.raw[v].push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace sevo

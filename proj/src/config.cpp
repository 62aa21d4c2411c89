#include "sevo/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sevo/formats.hpp"

namespace sevo {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view value, std::string_view key, int line) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + " expects a number, got '" + std::string(value) + "'", line);
  }
  return out;
}

double parse_double(std::string_view value, std::string_view key, int line) {
  const double v = parse_number<double>(value, key, line);
  if (!std::isfinite(v)) throw ConfigError(std::string(key) + " must be finite", line);
  return v;
}

bool parse_bool(std::string_view value, std::string_view key, int line) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(std::string(key) + " expects true or false, got '" + std::string(value) + "'", line);
}

using Setter = std::function<void(RunConfig&, std::string_view value, std::string_view key, int line)>;

template <typename T, typename Member>
Setter integer(Member member) {
  return [member](RunConfig& c, std::string_view v, std::string_view k, int line) {
    c.*member = parse_number<T>(v, k, line);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"seed", integer<std::uint64_t>(&RunConfig::seed)},
      {"style.bank_size", integer<int>(&RunConfig::bank_size)},
      {"style.steps", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.style.steps = parse_number<int>(v, k, l); }},
      {"style.lr", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.style.sgd.lr = parse_double(v, k, l); }},
      {"style.momentum", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.style.sgd.momentum = parse_double(v, k, l); }},
      {"style.weight_decay", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.style.sgd.weight_decay = parse_double(v, k, l); }},
      {"style.batch", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.style.batch = parse_number<Index>(v, k, l); }},
      {"style.samples", integer<Index>(&RunConfig::style_samples)},
      {"chain.level", integer<int>(&RunConfig::chain_level)},
      {"disentangle.tau", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.tau = parse_double(v, k, l); }},
      {"disentangle.loss_weights",
       [](RunConfig& c, std::string_view v, std::string_view k, int l) {
         std::array<double, 3> w{};
         std::size_t n = 0;
         while (true) {
           const auto comma = v.find(',');
           if (n == w.size()) throw ConfigError(std::string(k) + " expects three comma-separated numbers", l);
           w[n++] = parse_double(trim(v.substr(0, comma)), k, l);
           if (comma == std::string_view::npos) break;
           v.remove_prefix(comma + 1);
         }
         if (n != w.size()) throw ConfigError(std::string(k) + " expects three comma-separated numbers", l);
         c.loss_weights = w;
       }},
      {"disentangle.init_noise_std", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.init_noise_std = parse_double(v, k, l); }},
      {"proto.k", integer<int>(&RunConfig::proto_k)},
      {"proto.center_init_std", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.center_init_std = parse_double(v, k, l); }},
      {"text.dim", integer<Index>(&RunConfig::text_dim)},
      {"text.encoder", [](RunConfig& c, std::string_view v, std::string_view, int) { c.encoder = std::string(v); }},
      {"text.embeddings", [](RunConfig& c, std::string_view v, std::string_view, int) { c.embeddings = std::string(v); }},
      {"text.vocabulary", [](RunConfig& c, std::string_view v, std::string_view, int) { c.vocabulary = std::string(v); }},
      {"model.channels", integer<Index>(&RunConfig::channels)},
      {"data.classes", integer<int>(&RunConfig::classes)},
      {"data.train_samples", integer<Index>(&RunConfig::train_samples)},
      {"data.eval_samples", integer<Index>(&RunConfig::eval_samples)},
      {"train.epochs", integer<int>(&RunConfig::epochs)},
      {"train.lr", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.train_sgd.lr = parse_double(v, k, l); }},
      {"train.momentum", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.train_sgd.momentum = parse_double(v, k, l); }},
      {"train.weight_decay", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.train_sgd.weight_decay = parse_double(v, k, l); }},
      {"train.batch", integer<Index>(&RunConfig::batch)},
      {"train.clip_norm", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.clip_norm = parse_double(v, k, l); }},
      {"train.freeze", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.freeze = parse_bool(v, k, l); }},
      {"train.aux_weight", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.aux_weight = parse_double(v, k, l); }},
      {"run.variant",
       [](RunConfig& c, std::string_view v, std::string_view, int l) {
         try {
           c.flags = AblationFlags::of(parse_variant(v));
         } catch (const ConfigError& e) {
           throw ConfigError(e.what(), l);
         }
       }},
      {"run.one_step", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.flags.one_step = parse_bool(v, k, l); }},
      {"run.cgse", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.flags.cgse = parse_bool(v, k, l); }},
      {"run.sdm", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.flags.sdm = parse_bool(v, k, l); }},
      {"run.cpcm", [](RunConfig& c, std::string_view v, std::string_view k, int l) { c.flags.cpcm = parse_bool(v, k, l); }},
      {"ablation.seeds", integer<int>(&RunConfig::ablation_seeds)},
  };
  return table;
}

}  // namespace

ParsedConfig parse_config(std::string_view text) {
  ParsedConfig out;
  std::map<std::string, int, std::less<>> seen;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key before '='", line_no);
    if (value.empty()) throw ConfigError("missing value for " + std::string(key), line_no);
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
    if (const auto prev = seen.find(key); prev != seen.end()) {
      out.warnings.push_back("line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) +
                             "' overrides line " + std::to_string(prev->second));
      prev->second = line_no;
    } else {
      seen.emplace(std::string(key), line_no);
      out.keys.emplace(key);
    }
    it->second(out.config, value, key, line_no);
  }
  out.config.validate();
  return out;
}

ParsedConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const ParseError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text);
}

std::string default_config_text() {
  const RunConfig c;
  std::ostringstream out;
  out.precision(17);
  out << "seed = " << c.seed << "\n"
      << "style.bank_size = " << c.bank_size << "\n"
      << "style.steps = " << c.style.steps << "\n"
      << "style.lr = " << c.style.sgd.lr << "\n"
      << "style.momentum = " << c.style.sgd.momentum << "\n"
      << "style.weight_decay = " << c.style.sgd.weight_decay << "\n"
      << "style.batch = " << c.style.batch << "\n"
      << "style.samples = " << c.style_samples << "\n"
      << "chain.level = " << c.chain_level << "\n"
      << "disentangle.tau = " << c.tau << "\n"
      << "disentangle.loss_weights = " << c.loss_weights[0] << ", " << c.loss_weights[1] << ", " << c.loss_weights[2]
      << "\n"
      << "disentangle.init_noise_std = " << c.init_noise_std << "\n"
      << "proto.k = " << c.proto_k << "  # 0: data.classes\n"
      << "proto.center_init_std = " << c.center_init_std << "\n"
      << "text.dim = " << c.text_dim << "\n"
      << "text.encoder = " << c.encoder << "\n"
      << "model.channels = " << c.channels << "\n"
      << "data.classes = " << c.classes << "\n"
      << "data.train_samples = " << c.train_samples << "\n"
      << "data.eval_samples = " << c.eval_samples << "\n"
      << "train.epochs = " << c.epochs << "\n"
      << "train.lr = " << c.train_sgd.lr << "\n"
      << "train.momentum = " << c.train_sgd.momentum << "\n"
      << "train.weight_decay = " << c.train_sgd.weight_decay << "\n"
      << "train.batch = " << c.batch << "\n"
      << "train.clip_norm = " << c.clip_norm << "\n"
      << "train.freeze = " << (c.freeze ? "true" : "false") << "\n"
      << "train.aux_weight = " << c.aux_weight << "\n"
      << "run.variant = baseline\n"
      << "ablation.seeds = " << c.ablation_seeds << "\n";
  return out.str();
}

}  // namespace sevo

namespace sevo {

TextContext make_text(const RunConfig& cfg) {
  TextContext t;
  t.vocab = cfg.vocabulary.empty() ? VocabularySet::builtin() : VocabularySet::load(cfg.vocabulary);
  if (cfg.encoder == "file") {
    const EmbeddingFile file = read_embeddings(cfg.embeddings, static_cast<std::uint32_t>(cfg.text_dim));
    t.encoder = std::make_unique<TableTextEncoder>(file.encoder());
  } else {
    t.encoder = std::make_unique<FakeTextEncoder>(cfg.text_dim);
  }
  return t;
}

EmbeddingFile fake_embedding_file(const RunConfig& cfg, const VocabularySet& vocab, int seeds) {
  const FakeTextEncoder fake(cfg.text_dim);
  std::set<std::string, std::less<>> names;
  for (const std::string& w : vocab.source_words) names.insert(w);
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t chains_seed = SeedStreams::of(cfg.seed + static_cast<std::uint64_t>(k)).chains;
    for (int i = 0; i < cfg.bank_size; ++i) {
      const PromptChain chain = sample_chain(vocab, fake, derive_seed(chains_seed, static_cast<std::uint64_t>(i)));
      for (std::string& s : chain_strings(chain)) names.insert(std::move(s));
    }
  }
  EmbeddingFile file;
  file.dim = static_cast<std::uint32_t>(cfg.text_dim);
  for (const std::string& n : names) file.records.push_back({n, fake.encode(n)});
  return file;
}

}  // namespace sevo

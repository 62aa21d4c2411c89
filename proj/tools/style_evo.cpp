#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sevo/config.hpp"
#include "sevo/errors.hpp"
#include "sevo/formats.hpp"
#include "sevo/harness.hpp"
#include "sevo/report.hpp"

namespace {

using namespace sevo;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

std::uint64_t resolve_seed(const Common& c, std::uint64_t from_config, bool config_has_seed) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("STYLE_EVO_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw CLI::ValidationError("STYLE_EVO_SEED", std::string("not an unsigned integer: ") + env);
  }
  return config_has_seed ? from_config : 0;
}

RunConfig load(const Common& c) {
  ParsedConfig parsed;
  if (!c.config.empty()) parsed = load_config(c.config);
  for (const std::string& w : parsed.warnings) std::cerr << "warning: " << w << '\n';
  parsed.config.seed = resolve_seed(c, parsed.config.seed, parsed.keys.contains("seed"));
  return parsed.config;
}

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "run seed (default: STYLE_EVO_SEED, then the config seed, then 0)");
}

std::string norm(const Embedding& e) { return format_number(static_cast<double>(e.norm())); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided style evolution on a synthetic domain-shift benchmark"};
  app.require_subcommand(1);
  Common common;
  std::string out;
  std::string model_path;
  int level = 3;
  int seeds = 1;

  CLI::App* vocab = app.add_subcommand("vocab", "vocabulary tools");
  vocab->require_subcommand(1);
  CLI::App* vocab_list = vocab->add_subcommand("list", "print the vocabularies and templates");
  std::string vocab_file;
  vocab_list->add_option("--vocabulary", vocab_file, "vocabulary file (default: builtin)")->check(CLI::ExistingFile);

  CLI::App* chain = app.add_subcommand("chain", "prompt chains");
  chain->require_subcommand(1);
  CLI::App* chain_sample = chain->add_subcommand("sample", "print one prompt chain");
  add_common(chain_sample, common);
  chain_sample->add_option("--level", level, "highest level to print")->check(CLI::Range(1, 3));
  bool chain_json = false;
  chain_sample->add_flag("--json", chain_json, "print the chain as JSON");

  CLI::App* style = app.add_subcommand("style", "style evolution");
  style->require_subcommand(1);
  CLI::App* style_train = style->add_subcommand("train", "evolve a style bank");
  add_common(style_train, common);
  style_train->add_option("--out", out, "style bank file")->required();

  CLI::App* train = app.add_subcommand("train", "run both stages and save the model");
  add_common(train, common);
  train->add_option("--out", out, "checkpoint file")->required();

  CLI::App* eval = app.add_subcommand("eval", "accuracy of a saved model on every domain");
  add_common(eval, common);
  eval->add_option("--model", model_path, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "accuracy table (default: stdout)");

  CLI::App* ablate = app.add_subcommand("ablate", "run the five ablation arms over several seeds");
  add_common(ablate, common);
  ablate->add_option("--out", out, "report file (a .json sidecar is written next to it)")->required();

  CLI::App* exporter = app.add_subcommand("export-fake-embeddings", "write an embedding file from the fake encoder");
  add_common(exporter, common);
  exporter->add_option("--out", out, "embedding file")->required();
  exporter->add_option("--seeds", seeds, "consecutive run seeds to cover")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (vocab_list->parsed()) {
      const VocabularySet v = vocab_file.empty() ? VocabularySet::builtin() : VocabularySet::load(vocab_file);
      for (const Vocabulary& voc : v.vocabularies) {
        std::cout << voc.name << ':';
        for (const std::string& w : voc.words) std::cout << ' ' << w;
        std::cout << '\n';
      }
      std::cout << "phrases: " << v.phrase_templates.size() << " templates\n"
                << "sentences: " << v.sentence_templates.size() << " templates\n"
                << "source:";
      for (const std::string& w : v.source_words) std::cout << ' ' << w;
      std::cout << '\n';
      return 0;
    }

    const RunConfig cfg = load(common);
    const TextContext text = make_text(cfg);

    if (chain_sample->parsed()) {
      const PromptChain c = sample_chain(text.vocab, *text.encoder, cfg.seed);
      if (chain_json) {
        std::cout << chain_to_json(c);
        return 0;
      }
      std::cout << "seed " << cfg.seed << '\n' << "level 1:";
      for (const std::string& w : c.words) std::cout << ' ' << w;
      std::cout << "\t|f_t1| = " << norm(c.f_t1) << '\n';
      if (level >= 2) std::cout << "level 2: " << c.phrase << "\t|f_t2| = " << norm(c.f_t2) << '\n';
      if (level >= 3) std::cout << "level 3: " << c.sentence << "\t|f_t3| = " << norm(c.f_t3) << '\n';
      return 0;
    }
    if (style_train->parsed()) {
      const EvolutionResult r = evolve_styles(cfg, text.setup());
      write_style_bank(out, r.bank);
      for (std::size_t i = 0; i < r.bank.size(); ++i) {
        std::cout << i << '\t' << format_number(r.final_losses[i]) << '\t' << r.bank[i].provenance << '\n';
      }
      return 0;
    }
    if (train->parsed()) {
      RunOutcome r = run_experiment(cfg, text.setup());
      const auto params = r.model.params();
      write_checkpoint(out, params);
      for (const EpochLog& e : r.transfer.log) {
        std::cout << "epoch " << e.epoch << "\ttask " << format_number(e.task_loss) << "\ttotal "
                  << format_number(e.total_loss) << '\n';
      }
      std::cout << format_accuracy_tsv(r.accuracy);
      return 0;
    }
    if (eval->parsed()) {
      TinyModel model = TinyModel::init(cfg, SeedStreams::of(cfg.seed).backbone);
      const auto params = model.params();
      load_checkpoint(model_path, params);
      std::vector<SyntheticDomain> domains{source_domain(cfg.classes)};
      for (SyntheticDomain& d : target_domains(cfg.classes)) domains.push_back(std::move(d));
      const std::string table =
          format_accuracy_tsv(evaluate_shift(model, cfg.flags, domains, cfg.eval_samples, SeedStreams::of(cfg.seed).eval));
      if (out.empty()) {
        std::cout << table;
      } else {
        write_file_atomic(out, table);
      }
      return 0;
    }
    if (ablate->parsed()) {
      const AblationReport report = run_ablation(cfg, text.setup());
      write_ablation_report(out, report);
      std::cout << format_ablation_tsv(report);
      if (!report.trend_holds()) std::cerr << "warning: " << trend_line(report).substr(2) << '\n';
      return 0;
    }
    if (exporter->parsed()) {
      write_embeddings(out, fake_embedding_file(cfg, text.vocab, seeds));
      return 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

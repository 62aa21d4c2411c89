#include "sevo/report.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "sevo/formats.hpp"

namespace sevo {
namespace {

using nlohmann::ordered_json;

ordered_json embedding_json(const Embedding& e) {
  ordered_json out = ordered_json::array();
  for (Index i = 0; i < e.size(); ++i) out.push_back(e[i]);
  return out;
}

Embedding embedding_from(const ordered_json& j) {
  Embedding e(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) e[static_cast<Index>(i)] = j[i].get<float>();
  return e;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string trend_line(const AblationReport& report) {
  const int n = static_cast<int>(report.seeds.size());
  std::string line = "# full >= baseline in " + std::to_string(report.full_at_least_baseline()) + "/" +
                     std::to_string(n) + " seeds";
  if (!report.trend_holds()) line += " VIOLATION";
  return line;
}

std::string format_ablation_tsv(const AblationReport& report) {
  std::ostringstream out;
  out << "variant";
  for (const auto& d : report.domains) out << '\t' << d;
  out << "\tmean_shifted\n";
  for (std::size_t v = 0; v < report.variants.size(); ++v) {
    out << report.variants[v];
    for (std::size_t d = 0; d < report.domains.size(); ++d) out << '\t' << format_number(report.mean(v, d));
    out << '\t' << format_number(report.mean_shifted(v)) << '\n';
  }
  out << "\nvariant\tseed";
  for (const auto& d : report.domains) out << '\t' << d;
  out << "\tshifted\n";
  for (std::size_t v = 0; v < report.variants.size(); ++v) {
    for (std::size_t s = 0; s < report.seeds.size(); ++s) {
      out << report.variants[v] << '\t' << report.seeds[s];
      for (double a : report.raw[v][s]) out << '\t' << format_number(a);
      out << '\t' << format_number(report.shifted(v, s)) << '\n';
    }
  }
  out << '\n' << trend_line(report) << '\n';
  return out.str();
}

std::string format_ablation_json(const AblationReport& report) {
  ordered_json j;
  j["domains"] = report.domains;
  j["seeds"] = report.seeds;
  ordered_json rows = ordered_json::array();
  for (std::size_t v = 0; v < report.variants.size(); ++v) {
    ordered_json row;
    row["variant"] = report.variants[v];
    ordered_json means = ordered_json::array();
    for (std::size_t d = 0; d < report.domains.size(); ++d) means.push_back(report.mean(v, d));
    row["mean"] = means;
    row["mean_shifted"] = report.mean_shifted(v);
    row["raw"] = report.raw[v];
    rows.push_back(row);
  }
  j["rows"] = rows;
  j["full_at_least_baseline"] = report.full_at_least_baseline();
  j["trend_holds"] = report.trend_holds();
  return j.dump(2) + "\n";
}

void write_ablation_report(const std::filesystem::path& path, const AblationReport& report) {
  write_file_atomic(path, format_ablation_tsv(report));
  write_file_atomic(path.string() + ".json", format_ablation_json(report));
}

std::string format_accuracy_tsv(const std::vector<DomainAccuracy>& table) {
  std::string out = "domain\taccuracy\n";
  for (const auto& row : table) out += row.domain + '\t' + format_number(row.accuracy) + '\n';
  return out;
}

std::string chain_to_json(const PromptChain& chain) {
  ordered_json j;
  j["seed"] = chain.seed;
  j["words"] = chain.words;
  j["extra_detail"] = chain.extra_detail;
  j["phrase"] = chain.phrase;
  j["sentence"] = chain.sentence;
  j["f_t1"] = embedding_json(chain.f_t1);
  j["f_t2"] = embedding_json(chain.f_t2);
  j["f_t3"] = embedding_json(chain.f_t3);
  return j.dump(2) + "\n";
}

PromptChain chain_from_json(std::string_view text) {
  try {
    const ordered_json j = ordered_json::parse(text);
    PromptChain c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.words = j.at("words").get<std::vector<std::string>>();
    c.extra_detail = j.at("extra_detail").get<std::string>();
    c.phrase = j.at("phrase").get<std::string>();
    c.sentence = j.at("sentence").get<std::string>();
    c.f_t1 = embedding_from(j.at("f_t1"));
    c.f_t2 = embedding_from(j.at("f_t2"));
    c.f_t3 = embedding_from(j.at("f_t3"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad prompt chain JSON: ") + e.what());
  }
}

}  // namespace sevo

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sevo/harness.hpp"

namespace sevo {

/// Tab-separated table: a header, one row per arm with the per-domain means
/// and the mean shifted accuracy, a blank line, the per-seed raw values, and a
/// closing trend line that reads VIOLATION when the trend does not hold.
std::string format_ablation_tsv(const AblationReport& report);
/// JSON with the same numbers.
std::string format_ablation_json(const AblationReport& report);
/// Writes `path` and `path` + ".json".
void write_ablation_report(const std::filesystem::path& path, const AblationReport& report);
std::string trend_line(const AblationReport& report);

std::string format_accuracy_tsv(const std::vector<DomainAccuracy>& table);

/// Words, prompts and per-level features of a chain.
std::string chain_to_json(const PromptChain& chain);
/// Inverse of chain_to_json. Throws ConfigError on malformed input.
PromptChain chain_from_json(std::string_view text);

/// Fixed-point with six decimals; the same value always prints the same way.
std::string format_number(double v);

}  // namespace sevo

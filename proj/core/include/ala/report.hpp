// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ala/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace ala {

/// {"explainer", "aggregate": {...}, "samples": [...]}; absent mIoU is null.
nlohmann::json to_json(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);

/// Plain-text table: Method | mIoU (↑) | Insertion (↑) | Deletion (↓) | ID Score (↑).
std::string render_comparison_table(const std::vector<EvalReport>& reports);

struct AblationRow {
  std::string name;
  bool use_aea = true;
  bool use_lora = true;
  bool use_taps = true;
  EvalReport report;
};

/// Same metric columns preceded by AEA / LoRA / ALA check columns.
std::string render_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace ala

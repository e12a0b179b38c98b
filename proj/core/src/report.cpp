// SPDX-License-Identifier: Apache-2.0
#include "ala/report.hpp"

#include "ala/errors.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace ala {

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : report.per_sample) {
    samples.push_back({{"sample_id", s.sample_id},
                       {"label", s.label},
                       {"iou", s.iou ? nlohmann::json(*s.iou) : nlohmann::json(nullptr)},
                       {"insertion", s.insertion},
                       {"deletion", s.deletion},
                       {"id_score", s.id_score}});
  }
  return {{"explainer", report.explainer},
          {"aggregate",
           {{"mean_iou", report.mean_iou ? nlohmann::json(*report.mean_iou) : nlohmann::json(nullptr)},
            {"insertion", report.insertion},
            {"deletion", report.deletion},
            {"id_score", report.id_score},
            {"num_samples", report.per_sample.size()}}},
          {"samples", samples}};
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write " + path.string());
  os << to_json(report).dump(2) << "\n";
}

namespace {

std::string cell(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

std::string metric_cells(const EvalReport& r) {
  std::ostringstream os;
  os << " | " << std::setw(8) << (r.mean_iou ? cell(*r.mean_iou) : std::string("n/a")) << " | " << std::setw(13)
     << cell(r.insertion) << " | " << std::setw(12) << cell(r.deletion) << " | " << std::setw(12)
     << cell(r.id_score) << " |";
  return os.str();
}

constexpr const char* kMetricHeader = " | mIoU (↑) | Insertion (↑) | Deletion (↓) | ID Score (↑) |";
constexpr const char* kMetricRule = "-|----------|---------------|--------------|--------------|";

}  // namespace

std::string render_comparison_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "| " << std::left << std::setw(10) << "Method" << kMetricHeader << "\n";
  os << "|-" << std::string(10, '-') << kMetricRule << "\n";
  for (const auto& r : reports) {
    os << "| " << std::left << std::setw(10) << r.explainer << std::right << metric_cells(r) << "\n";
  }
  return os.str();
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| " << std::left << std::setw(12) << "Model" << " | AEA | LoRA | ALA" << kMetricHeader << "\n";
  os << "|-" << std::string(12, '-') << "-|-----|------|----" << kMetricRule << "\n";
  auto mark = [](bool on) { return on ? "x" : " "; };
  for (const auto& r : rows) {
    os << "| " << std::left << std::setw(12) << r.name << " |  " << mark(r.use_aea) << "  |  " << mark(r.use_lora)
       << "   |  " << mark(r.use_taps) << std::right << metric_cells(r.report) << "\n";
  }
  return os.str();
}

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration shared by the CLI and the acceptance suite:
// build a model from a run config, train it, evaluate explanations on the
// test split, and emit the run directory.
#pragma once

#include "ala/config.hpp"
#include "ala/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <ostream>

namespace ala {

/// "ala", "gradcam", "ig", "uniform" (constant 0.5) or "random" (U(0,1),
/// seeded per sample id).
Explainer make_explainer(const std::string& name, const AlaModel& model, const MetricsConfig& metrics,
                         std::uint64_t seed);

double classification_accuracy(const AlaModel& model, const Dataset& data);

/// First `limit` samples (all when limit <= 0).
Dataset take(const Dataset& data, int limit);

struct RunResult {
  std::unique_ptr<AlaModel> model;
  DatasetSplit data;
  TrainingReport training;
  double test_accuracy = 0.0;
  std::vector<EvalReport> reports;
  nlohmann::json summary;
};

/// Resolves the config, trains to early stopping and evaluates every
/// configured explainer on the test split. With a non-empty out_dir, writes
/// train.log, best.ckpt, config.json, summary.json and eval/<explainer>.json.
RunResult run_experiment(RunConfig config, const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

/// Run summary: resolved config (without output_dir), per-epoch records,
/// stopping epoch, test metrics and checkpoint hash. Contains no paths or
/// timestamps so identical runs serialise identically.
nlohmann::json make_summary(const RunConfig& config, const TrainingReport& training, double test_accuracy,
                            const std::vector<EvalReport>& reports, const std::string& checkpoint_hash);

}  // namespace ala

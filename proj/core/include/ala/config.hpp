// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one nested JSON document covering the model, training,
// data source, metric settings and output directory. Unknown keys are
// rejected so typos fail fast.
#pragma once

#include "ala/model.hpp"
#include "ala/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace ala {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "manifest" | "cache"
  int num_samples = 800;
  int num_classes = 4;
  int image_size = 32;
  std::uint64_t seed = 7;
  std::vector<double> split{0.75, 0.125, 0.125};
  std::uint64_t split_seed = 11;
  std::string root;      // manifest source: directory the manifest paths are relative to
  std::string manifest;  // manifest source: path to manifest.tsv
  std::string cache;     // cache source: dataset archive path
};

struct MetricsConfig {
  int num_steps = 100;  // <= 0: exhaustive
  double threshold = 0.5;
  int ig_steps = 16;
  std::vector<std::string> explainers{"ala"};
  int max_eval_samples = 0;  // 0: whole test split
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  MetricsConfig metrics;
  std::string output_dir = "runs/default";

  /// Applies ablation flags to the model (LoRA removal, tap removal), fills
  /// defaults and validates everything. Throws ConfigError.
  void resolve();
};

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const AdapterConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const DataConfig& c);
nlohmann::json to_json(const MetricsConfig& c);
nlohmann::json to_json(const RunConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Loads the configured dataset and splits it.
DatasetSplit load_data(const DataConfig& config, int channels);

}  // namespace ala

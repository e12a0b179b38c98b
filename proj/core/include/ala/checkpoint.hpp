// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ala/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>

namespace ala {

/// Writes every model parameter (float64) under its namespaced name, with
/// the model configuration and `extra` embedded as metadata.
void save_checkpoint(const std::filesystem::path& path, const AlaModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<AlaModel> model;
  nlohmann::json metadata;
};

/// Rebuilds the model from the embedded configuration and restores values.
/// Throws ConfigError when tensors are missing or mis-shaped.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ala

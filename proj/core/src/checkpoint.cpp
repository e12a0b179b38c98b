// SPDX-License-Identifier: Apache-2.0
#include "ala/checkpoint.hpp"

#include "ala/archive.hpp"
#include "ala/config.hpp"
#include "ala/errors.hpp"

namespace ala {

void save_checkpoint(const std::filesystem::path& path, const AlaModel& model, const nlohmann::json& extra) {
  TensorArchive archive;
  nlohmann::json meta{{"kind", "checkpoint"}, {"model", to_json(model.config())}, {"extra", extra}};
  archive.metadata = meta.dump(2);
  for (const auto& p : model.parameters()) {
    TensorEntry t;
    t.name = p.name;
    t.shape = {static_cast<std::uint64_t>(p.var.rows()), static_cast<std::uint64_t>(p.var.cols())};
    t.values.assign(p.var.value().data(), p.var.value().data() + p.var.value().size());
    archive.tensors.push_back(std::move(t));
  }
  write_archive(path, archive);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = read_archive(path);
  LoadedCheckpoint out;
  try {
    out.metadata = nlohmann::json::parse(archive.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  if (out.metadata.value("kind", "") != "checkpoint") throw InputError(path.string() + ": not a checkpoint");
  out.model = std::make_unique<AlaModel>(model_config_from_json(out.metadata.at("model")));
  for (const auto& p : out.model->parameters()) {
    const TensorEntry* t = archive.find(p.name);
    if (!t) throw ConfigError(path.string() + ": checkpoint lacks tensor " + p.name);
    if (t->shape.size() != 2 || t->shape[0] != static_cast<std::uint64_t>(p.var.rows()) ||
        t->shape[1] != static_cast<std::uint64_t>(p.var.cols())) {
      throw ConfigError(path.string() + ": tensor " + p.name + " has the wrong shape for the embedded config");
    }
    ag::Var v = p.var;
    std::copy(t->values.begin(), t->values.end(), v.mutable_value().data());
  }
  return out;
}

}  // namespace ala

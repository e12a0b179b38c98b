// SPDX-License-Identifier: Apache-2.0
#include "ala/config.hpp"

#include "ala/errors.hpp"

#include <fstream>
#include <set>

namespace ala {

using nlohmann::json;

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string projection_name(Projection p) { return p == Projection::Query ? "query" : "value"; }

Projection projection_from(const std::string& s, const std::string& path) {
  if (s == "query") return Projection::Query;
  if (s == "value") return Projection::Value;
  throw ConfigError(path + ": unknown projection '" + s + "' (expected query or value)");
}

LoraSpec lora_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  LoraSpec spec;
  r.get("rank", spec.rank);
  std::vector<int> blocks;
  r.get("target_blocks", blocks);
  spec.target_blocks = {blocks.begin(), blocks.end()};
  std::vector<std::string> projections;
  if (j.contains("target_projections")) {
    r.get("target_projections", projections);
    spec.target_projections.clear();
    for (const auto& p : projections) spec.target_projections.insert(projection_from(p, r.path("target_projections")));
  }
  r.get("scaling", spec.scaling);
  r.finish();
  return spec;
}

EncoderConfig encoder_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  EncoderConfig c;
  r.get("num_blocks", c.num_blocks);
  r.get("embed_dim", c.embed_dim);
  r.get("num_heads", c.num_heads);
  r.get("mlp_ratio", c.mlp_ratio);
  r.get("patch_size", c.patch_size);
  r.get("channels", c.channels);
  r.get("image_height", c.image_height);
  r.get("image_width", c.image_width);
  if (const json* l = r.child("lora"); l && !l->is_null()) c.lora = lora_from_json(*l, r.path("lora"));
  r.finish();
  return c;
}

AdapterConfig adapter_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  AdapterConfig c;
  r.get("num_layers", c.num_layers);
  r.get("num_heads", c.num_heads);
  r.get("dim", c.dim);
  r.get("mlp_ratio", c.mlp_ratio);
  r.get("patch_size", c.patch_size);
  r.get("num_taps", c.num_taps);
  r.get("tap_blocks", c.tap_blocks);
  r.get("classifier_channels", c.classifier_channels);
  r.get("use_taps", c.use_taps);
  r.finish();
  return c;
}

ModelConfig model_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  ModelConfig c;
  if (const json* e = r.child("encoder")) c.encoder = encoder_from_json(*e, r.path("encoder"));
  if (const json* a = r.child("adapter")) c.adapter = adapter_from_json(*a, r.path("adapter"));
  r.get("num_classes", c.num_classes);
  r.get("init_seed", c.init_seed);
  r.get("attention_norm_power", c.attention_norm_power);
  r.finish();
  return c;
}

TrainConfig train_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  TrainConfig c;
  r.get("max_epochs", c.max_epochs);
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("epsilon", c.epsilon);
  r.get("weight_decay", c.weight_decay);
  r.get("lambda", c.lambda);
  r.get("patience", c.patience);
  r.get("seed", c.seed);
  if (const json* a = r.child("augment")) {
    Reader ar(*a, r.path("augment"));
    ar.get("flip", c.augment.flip);
    ar.get("crop", c.augment.crop);
    ar.get("crop_area", c.augment.crop_area);
    ar.finish();
  }
  if (const json* a = r.child("ablation")) {
    Reader ar(*a, r.path("ablation"));
    ar.get("use_taps", c.ablation.use_taps);
    ar.get("use_lora", c.ablation.use_lora);
    ar.get("use_aea", c.ablation.use_aea);
    ar.finish();
  }
  r.finish();
  return c;
}

DataConfig data_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  DataConfig c;
  r.get("source", c.source);
  r.get("num_samples", c.num_samples);
  r.get("num_classes", c.num_classes);
  r.get("image_size", c.image_size);
  r.get("seed", c.seed);
  r.get("split", c.split);
  r.get("split_seed", c.split_seed);
  r.get("root", c.root);
  r.get("manifest", c.manifest);
  r.get("cache", c.cache);
  r.finish();
  return c;
}

MetricsConfig metrics_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  MetricsConfig c;
  r.get("num_steps", c.num_steps);
  r.get("threshold", c.threshold);
  r.get("ig_steps", c.ig_steps);
  r.get("explainers", c.explainers);
  r.get("max_eval_samples", c.max_eval_samples);
  r.finish();
  return c;
}

}  // namespace

json to_json(const EncoderConfig& c) {
  json j{{"num_blocks", c.num_blocks},   {"embed_dim", c.embed_dim},   {"num_heads", c.num_heads},
         {"mlp_ratio", c.mlp_ratio},     {"patch_size", c.patch_size}, {"channels", c.channels},
         {"image_height", c.image_height}, {"image_width", c.image_width}};
  if (c.lora) {
    json projections = json::array();
    for (auto p : c.lora->target_projections) projections.push_back(projection_name(p));
    j["lora"] = {{"rank", c.lora->rank},
                 {"target_blocks", std::vector<int>(c.lora->target_blocks.begin(), c.lora->target_blocks.end())},
                 {"target_projections", projections},
                 {"scaling", c.lora->scaling}};
  } else {
    j["lora"] = nullptr;
  }
  return j;
}

json to_json(const AdapterConfig& c) {
  return {{"num_layers", c.num_layers}, {"num_heads", c.num_heads},   {"dim", c.dim},
          {"mlp_ratio", c.mlp_ratio},   {"patch_size", c.patch_size}, {"num_taps", c.num_taps},
          {"tap_blocks", c.tap_blocks}, {"classifier_channels", c.classifier_channels},
          {"use_taps", c.use_taps}};
}

json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"adapter", to_json(c.adapter)},
          {"num_classes", c.num_classes},
          {"init_seed", c.init_seed},
          {"attention_norm_power", c.attention_norm_power}};
}

json to_json(const TrainConfig& c) {
  return {{"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"weight_decay", c.weight_decay},
          {"lambda", c.lambda},
          {"patience", c.patience},
          {"seed", c.seed},
          {"augment", {{"flip", c.augment.flip}, {"crop", c.augment.crop}, {"crop_area", c.augment.crop_area}}},
          {"ablation",
           {{"use_taps", c.ablation.use_taps}, {"use_lora", c.ablation.use_lora}, {"use_aea", c.ablation.use_aea}}}};
}

json to_json(const DataConfig& c) {
  return {{"source", c.source}, {"num_samples", c.num_samples}, {"num_classes", c.num_classes},
          {"image_size", c.image_size}, {"seed", c.seed}, {"split", c.split}, {"split_seed", c.split_seed},
          {"root", c.root}, {"manifest", c.manifest}, {"cache", c.cache}};
}

json to_json(const MetricsConfig& c) {
  return {{"num_steps", c.num_steps}, {"threshold", c.threshold}, {"ig_steps", c.ig_steps},
          {"explainers", c.explainers}, {"max_eval_samples", c.max_eval_samples}};
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"data", to_json(c.data)},
          {"metrics", to_json(c.metrics)},
          {"output_dir", c.output_dir}};
}

ModelConfig model_config_from_json(const json& j) { return model_from_json(j, "model"); }

RunConfig run_config_from_json(const json& j) {
  Reader r(j, "config");
  RunConfig c;
  bool lora_given = false;
  if (const json* m = r.child("model")) {
    c.model = model_from_json(*m, "model");
    lora_given = m->contains("encoder") && m->at("encoder").contains("lora");
  }
  if (const json* t = r.child("train")) c.train = train_from_json(*t, "train");
  if (const json* d = r.child("data")) c.data = data_from_json(*d, "data");
  if (const json* mm = r.child("metrics")) c.metrics = metrics_from_json(*mm, "metrics");
  r.get("output_dir", c.output_dir);
  r.finish();
  if (!lora_given) c.model.encoder.lora = LoraSpec::default_for(c.model.encoder.num_blocks);
  return c;
}

void RunConfig::resolve() {
  if (model.num_classes != data.num_classes && data.source == "synthetic") {
    throw ConfigError("model.num_classes: must equal data.num_classes (" + std::to_string(data.num_classes) + ")");
  }
  if (data.source == "synthetic" &&
      (model.encoder.image_height != data.image_size || model.encoder.image_width != data.image_size)) {
    throw ConfigError("data.image_size: must match model.encoder image_height/image_width");
  }
  if (data.source != "synthetic" && data.source != "manifest" && data.source != "cache") {
    throw ConfigError("data.source: expected synthetic, manifest or cache");
  }
  if (data.split.size() != 3) throw ConfigError("data.split: expected three fractions (train, val, test)");
  if (!train.ablation.use_lora) {
    model.encoder.lora.reset();
  } else if (!model.encoder.lora) {
    model.encoder.lora = LoraSpec::default_for(model.encoder.num_blocks);
  }
  model.adapter.use_taps = train.ablation.use_taps;
  model.validate();
  train.validate();
  if (!(metrics.threshold > 0.0 && metrics.threshold < 1.0)) throw ConfigError("metrics.threshold: must lie in (0, 1)");
  if (metrics.ig_steps < 1) throw ConfigError("metrics.ig_steps: must be >= 1");
  static const std::set<std::string> kExplainers{"ala", "gradcam", "ig", "uniform", "random"};
  for (const auto& e : metrics.explainers) {
    if (!kExplainers.count(e)) throw ConfigError("metrics.explainers: unknown explainer '" + e + "'");
  }
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

DatasetSplit load_data(const DataConfig& config, int channels) {
  Dataset all;
  if (config.source == "synthetic") {
    all = synth_shapes(config.num_samples, config.num_classes, config.image_size, config.seed);
  } else if (config.source == "cache") {
    all = load_dataset(config.cache);
  } else {
    all = load_external(config.root, read_manifest(config.manifest), config.image_size, channels);
  }
  return split(all, config.split[0], config.split[1], config.split[2], config.split_seed);
}

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
#include "ala/pipeline.hpp"

#include "ala/archive.hpp"
#include "ala/checkpoint.hpp"
#include "ala/errors.hpp"
#include "ala/report.hpp"

#include <fstream>
#include <sstream>

namespace ala {

Explainer make_explainer(const std::string& name, const AlaModel& model, const MetricsConfig& metrics,
                         std::uint64_t seed) {
  if (name == "ala") {
    return [&model](const ImageSample& s) { return model.explain(s.image); };
  }
  if (name == "gradcam") {
    return [&model](const ImageSample& s) { return grad_cam(model, s.image, s.label); };
  }
  if (name == "ig") {
    const int steps = metrics.ig_steps;
    return [&model, steps](const ImageSample& s) { return integrated_gradients(model, s.image, s.label, steps); };
  }
  if (name == "uniform") {
    return [](const ImageSample& s) { return uniform_map(s.image.height, s.image.width); };
  }
  if (name == "random") {
    return [seed](const ImageSample& s) {
      Rng rng(seed ^ std::hash<std::string>{}(s.sample_id));
      return random_map(s.image.height, s.image.width, rng);
    };
  }
  throw ConfigError("unknown explainer '" + name + "' (expected ala, gradcam, ig, uniform or random)");
}

double classification_accuracy(const AlaModel& model, const Dataset& data) {
  if (data.empty()) throw InputError("classification_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& s : data) {
    if (model.predict(s.image).argmax() == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Dataset take(const Dataset& data, int limit) {
  if (limit <= 0 || static_cast<std::size_t>(limit) >= data.size()) return data;
  return Dataset(data.begin(), data.begin() + limit);
}

nlohmann::json make_summary(const RunConfig& config, const TrainingReport& training, double test_accuracy,
                            const std::vector<EvalReport>& reports, const std::string& checkpoint_hash) {
  nlohmann::json cfg = to_json(config);
  cfg.erase("output_dir");
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : training.epochs) {
    std::ostringstream checksum;
    checksum << std::hex << e.checksum;
    epochs.push_back({{"epoch", e.epoch},
                      {"gate", to_string(e.gate)},
                      {"ala_frozen", e.ala_frozen},
                      {"train_loss", e.train_loss},
                      {"train_pb_loss", e.train_pb_loss},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"parameter_checksum", checksum.str()}});
  }
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& r : reports) metrics[r.explainer] = to_json(r).at("aggregate");
  return {{"config", cfg},
          {"config_hash", string_hash(cfg.dump())},
          {"training",
           {{"best_epoch", training.best_epoch},
            {"best_val_loss", training.best_val_loss},
            {"stopping_epoch", training.stopping_epoch},
            {"early_stopped", training.early_stopped},
            {"epochs", epochs}}},
          {"test", {{"accuracy", test_accuracy}, {"explainers", metrics}}},
          {"checkpoint_hash", checkpoint_hash}};
}

RunResult run_experiment(RunConfig config, const std::filesystem::path& out_dir, std::ostream* progress) {
  config.resolve();
  RunResult result;
  result.data = load_data(config.data, config.model.encoder.channels);
  for (const auto* part : {&result.data.train, &result.data.val, &result.data.test}) {
    for (const auto& s : *part) {
      if (s.image.height != config.model.encoder.image_height || s.image.width != config.model.encoder.image_width ||
          s.image.channels() != config.model.encoder.channels) {
        throw ConfigError("dataset sample " + s.sample_id + " does not match the encoder input shape");
      }
      if (s.label < 0 || s.label >= config.model.num_classes) {
        throw InputError("dataset sample " + s.sample_id + " has label outside 0..num_classes-1");
      }
    }
  }
  result.model = std::make_unique<AlaModel>(config.model);

  std::ofstream log_file;
  std::ostream* log = progress;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir / "train.log", std::ios::trunc);
    log = &log_file;
    std::ofstream(out_dir / "config.json", std::ios::trunc) << to_json(config).dump(2) << "\n";
  }
  auto tee = [&](const EpochRecord& rec, const AlaModel&) {
    if (progress && log != progress) {
      *progress << "epoch " << rec.epoch << " gate " << to_string(rec.gate) << " train " << rec.train_loss
                << " val " << rec.val_loss << " acc " << rec.val_accuracy << std::endl;
    }
  };
  result.training = fit(*result.model, result.data.train, result.data.val, config.train, log, tee);

  result.test_accuracy = classification_accuracy(*result.model, result.data.test);
  const Dataset eval_set = take(result.data.test, config.metrics.max_eval_samples);
  const EvalOptions options{config.metrics.num_steps, config.metrics.threshold};
  for (const auto& name : config.metrics.explainers) {
    result.reports.push_back(evaluate(*result.model, eval_set,
                                      make_explainer(name, *result.model, config.metrics, config.train.seed), options,
                                      name));
  }

  std::string ckpt_hash;
  if (!out_dir.empty()) {
    nlohmann::json extra{{"data", to_json(config.data)},
                         {"metrics", to_json(config.metrics)},
                         {"ablation",
                          {{"use_taps", config.train.ablation.use_taps},
                           {"use_lora", config.train.ablation.use_lora},
                           {"use_aea", config.train.ablation.use_aea}}}};
    save_checkpoint(out_dir / "best.ckpt", *result.model, extra);
    ckpt_hash = file_hash(out_dir / "best.ckpt");
    for (const auto& r : result.reports) write_report(out_dir / "eval" / (r.explainer + ".json"), r);
  } else {
    ckpt_hash = string_hash(std::to_string(parameter_checksum(result.model->parameters())));
  }
  result.summary = make_summary(config, result.training, result.test_accuracy, result.reports, ckpt_hash);
  if (!out_dir.empty()) {
    std::ofstream(out_dir / "summary.json", std::ios::trunc) << result.summary.dump(2) << "\n";
  }
  return result;
}

}  // namespace ala

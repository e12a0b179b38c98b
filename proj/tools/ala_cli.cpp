// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen-data, train, eval, explain, compare.
// Exit codes: 0 success, 2 config or user error, 3 numeric failure.

#include "ala/archive.hpp"
#include "ala/checkpoint.hpp"
#include "ala/config.hpp"
#include "ala/errors.hpp"
#include "ala/image_io.hpp"
#include "ala/pipeline.hpp"
#include "ala/render.hpp"
#include "ala/report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 2;
constexpr int kExitNumeric = 3;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int parse_steps(const std::string& s) {
  if (s == "exhaustive") return 0;
  try {
    std::size_t used = 0;
    const int n = std::stoi(s, &used);
    if (used != s.size() || n < 1) throw std::invalid_argument(s);
    return n;
  } catch (const std::exception&) {
    throw ala::ConfigError("--steps: expected a positive integer or 'exhaustive', got '" + s + "'");
  }
}

fs::path cache_dir() {
  if (const char* env = std::getenv("ALA_CACHE_DIR"); env && *env) return env;
  return ".ala-cache";
}

// Flags shared by train and compare that edit a RunConfig.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::vector<std::string> ablations;
  std::optional<bool> use_taps;
  std::optional<bool> use_lora;
  std::optional<bool> use_aea;
  std::string explainers;
  std::string steps;
  std::optional<double> threshold;
  std::string out;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Training seed (shuffling, augmentation, init)");
    cmd->add_option("--ablation", ablations, "Ablations: no-aea, no-lora, no-taps")
        ->check(CLI::IsMember({"no-aea", "no-lora", "no-taps"}));
    cmd->add_option("--use-taps", use_taps, "Inject intermediate encoder features into the adapter");
    cmd->add_option("--use-lora", use_lora, "Attach low-rank factors to the encoder");
    cmd->add_option("--use-aea", use_aea, "Alternate PASS_ALPHA and ALL_ONES epochs");
    cmd->add_option("--explainers", explainers, "Comma list of ala, gradcam, ig, uniform, random");
    cmd->add_option("--steps", steps, "Insertion/deletion steps: N or 'exhaustive'");
    cmd->add_option("--threshold", threshold, "IoU binarisation threshold");
    cmd->add_option("--out", out, "Output directory");
  }

  void apply(ala::RunConfig& c) const {
    if (seed) {
      c.train.seed = *seed;
      c.model.init_seed = *seed;
    }
    for (const auto& a : ablations) {
      if (a == "no-aea") c.train.ablation.use_aea = false;
      if (a == "no-lora") c.train.ablation.use_lora = false;
      if (a == "no-taps") c.train.ablation.use_taps = false;
    }
    if (use_taps) c.train.ablation.use_taps = *use_taps;
    if (use_lora) c.train.ablation.use_lora = *use_lora;
    if (use_aea) c.train.ablation.use_aea = *use_aea;
    if (!explainers.empty()) c.metrics.explainers = split_list(explainers);
    if (!steps.empty()) c.metrics.num_steps = parse_steps(steps);
    if (threshold) c.metrics.threshold = *threshold;
    if (!out.empty()) c.output_dir = out;
  }
};

ala::RunConfig load_config(const std::string& path) {
  if (path.empty()) return ala::run_config_from_json(json::object());
  return ala::load_run_config(path);
}

std::string config_hash(const json& config) { return ala::string_hash(config.dump()); }

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::string config;
  std::optional<int> num_samples;
  std::optional<int> num_classes;
  std::optional<int> image_size;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string png_dir;
};

int cmd_gen_data(const GenDataArgs& a) {
  ala::DataConfig d = load_config(a.config).data;
  if (a.num_samples) d.num_samples = *a.num_samples;
  if (a.num_classes) d.num_classes = *a.num_classes;
  if (a.image_size) d.image_size = *a.image_size;
  if (a.seed) d.seed = *a.seed;
  if (d.num_samples < 1) throw ala::ConfigError("--num-samples: must be >= 1");
  if (d.num_classes < 2) throw ala::ConfigError("--num-classes: must be >= 2");
  if (d.image_size < 8) throw ala::ConfigError("--image-size: must be >= 8");
  fs::path out = a.out;
  if (out.empty()) {
    out = cache_dir() / ("synth-" + std::to_string(d.seed) + "-" + std::to_string(d.num_samples) + "-" +
                         std::to_string(d.num_classes) + "-" + std::to_string(d.image_size) + ".alds");
  }
  const ala::Dataset data = ala::synth_shapes(d.num_samples, d.num_classes, d.image_size, d.seed);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ala::save_dataset(out, data, d.num_classes);
  if (!a.png_dir.empty()) ala::export_dataset_png(a.png_dir, data);
  std::cout << "wrote " << data.size() << " samples to " << out.string() << " (checksum " << std::hex
            << ala::dataset_checksum(data) << std::dec << ")\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  RunOverrides overrides;
  bool print_config = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  ala::RunConfig c = load_config(a.config);
  a.overrides.apply(c);
  c.resolve();
  if (a.print_config) {
    std::cout << ala::to_json(c).dump(2) << "\n";
    return kExitOk;
  }
  const auto result = ala::run_experiment(c, c.output_dir, a.quiet ? nullptr : &std::cout);
  std::cout << "best epoch " << result.training.best_epoch << ", stopped at " << result.training.stopping_epoch
            << ", test accuracy " << result.test_accuracy << "\n";
  if (result.reports.size() > 1) std::cout << ala::render_comparison_table(result.reports);
  std::cout << "run directory " << c.output_dir << "\n";
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;  // dataset archive; default: checkpoint's data config, test split
  std::string manifest;
  std::string root;
  std::string explainers = "ala";
  std::string steps;
  std::optional<double> threshold;
  int max_samples = 0;
  std::uint64_t seed = 0;
  std::string out;
};

ala::Dataset eval_dataset(const EvalArgs& a, const ala::AlaModel& model, const json& meta) {
  const auto& enc = model.config().encoder;
  ala::Dataset data;
  if (!a.dataset.empty()) {
    data = ala::load_dataset(a.dataset);
  } else if (!a.manifest.empty()) {
    const fs::path root = a.root.empty() ? fs::path(a.manifest).parent_path() : fs::path(a.root);
    data = ala::load_external(root, ala::read_manifest(a.manifest), enc.image_height, enc.channels);
  } else {
    ala::RunConfig c = ala::run_config_from_json(json::object());
    if (meta.contains("extra") && meta["extra"].contains("data")) {
      c = ala::run_config_from_json(json{{"data", meta["extra"]["data"]}});
    }
    data = ala::load_data(c.data, enc.channels).test;
  }
  for (const auto& s : data) {
    if (s.image.height != enc.image_height || s.image.width != enc.image_width || s.image.channels() != enc.channels) {
      throw ala::ConfigError("dataset sample " + s.sample_id + " is " + std::to_string(s.image.channels()) + "x" +
                             std::to_string(s.image.height) + "x" + std::to_string(s.image.width) +
                             " but the checkpoint expects " + std::to_string(enc.channels) + "x" +
                             std::to_string(enc.image_height) + "x" + std::to_string(enc.image_width));
    }
    if (s.label < 0 || s.label >= model.config().num_classes) {
      throw ala::ConfigError("dataset sample " + s.sample_id + " has label " + std::to_string(s.label) +
                             " outside the checkpoint's " + std::to_string(model.config().num_classes) + " classes");
    }
  }
  return ala::take(data, a.max_samples);
}

int run_eval(const EvalArgs& a, bool print_table) {
  const auto ckpt = ala::load_checkpoint(a.checkpoint);
  const ala::AlaModel& model = *ckpt.model;
  ala::MetricsConfig m;
  if (ckpt.metadata.contains("extra") && ckpt.metadata["extra"].contains("metrics")) {
    m = ala::run_config_from_json(json{{"metrics", ckpt.metadata["extra"]["metrics"]}}).metrics;
  }
  m.explainers = split_list(a.explainers);
  if (m.explainers.empty()) throw ala::ConfigError("--explainers: at least one explainer required");
  if (!a.steps.empty()) m.num_steps = parse_steps(a.steps);
  if (a.threshold) m.threshold = *a.threshold;
  if (!(m.threshold > 0.0 && m.threshold < 1.0)) throw ala::ConfigError("--threshold: must lie in (0, 1)");

  const ala::Dataset data = eval_dataset(a, model, ckpt.metadata);
  if (data.empty()) throw ala::InputError("evaluation dataset is empty");
  const ala::EvalOptions options{m.num_steps, m.threshold};
  std::vector<ala::EvalReport> reports;
  for (const auto& name : m.explainers) {
    reports.push_back(ala::evaluate(model, data, ala::make_explainer(name, model, m, a.seed), options, name));
  }
  const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() / "eval" : fs::path(a.out);
  for (const auto& r : reports) ala::write_report(out / (r.explainer + ".json"), r);
  const std::string table = ala::render_comparison_table(reports);
  std::ofstream(out / "table.txt", std::ios::trunc) << table;
  if (print_table || reports.size() > 1) std::cout << table;
  std::cout << "reports written to " << out.string() << "\n";
  return kExitOk;
}

// ---- explain --------------------------------------------------------------

struct ExplainArgs {
  std::string checkpoint;
  std::string image;
  std::string sample_id;
  std::string dataset;
  std::string out = "explain";
};

int cmd_explain(const ExplainArgs& a) {
  if (a.image.empty() == a.sample_id.empty()) throw ala::ConfigError("explain: give exactly one of --image or --sample-id");
  const auto ckpt = ala::load_checkpoint(a.checkpoint);
  const ala::AlaModel& model = *ckpt.model;
  const auto& enc = model.config().encoder;

  ala::ImageTensor image;
  std::string sample_id;
  ala::Raster original;
  if (!a.image.empty()) {
    try {
      original = ala::read_raster(a.image);
    } catch (const ala::InputError& e) {
      throw ala::ConfigError(std::string("cannot read image: ") + e.what());
    }
    image = ala::raster_to_image(original, enc.channels);
    if (image.height != enc.image_height || image.width != enc.image_width) {
      image = ala::resize_image_bilinear(image, enc.image_height, enc.image_width);
    }
    sample_id = fs::path(a.image).filename().string();
  } else {
    ala::Dataset data;
    if (!a.dataset.empty()) {
      data = ala::load_dataset(a.dataset);
    } else {
      ala::RunConfig c = ala::run_config_from_json(json::object());
      if (ckpt.metadata.contains("extra") && ckpt.metadata["extra"].contains("data")) {
        c = ala::run_config_from_json(json{{"data", ckpt.metadata["extra"]["data"]}});
      }
      c.data.split = {1.0, 0.0, 0.0};
      ala::DataConfig d = c.data;
      data = d.source == "synthetic" ? ala::synth_shapes(d.num_samples, d.num_classes, d.image_size, d.seed)
             : d.source == "cache"   ? ala::load_dataset(d.cache)
                                     : ala::load_external(d.root, ala::read_manifest(d.manifest), d.image_size,
                                                          enc.channels);
    }
    const auto it = std::find_if(data.begin(), data.end(), [&](const auto& s) { return s.sample_id == a.sample_id; });
    if (it == data.end()) throw ala::ConfigError("sample id '" + a.sample_id + "' not found");
    image = it->image;
    sample_id = it->sample_id;
    if (image.height != enc.image_height || image.width != enc.image_width || image.channels() != enc.channels) {
      throw ala::ConfigError("sample " + sample_id + " does not match the checkpoint input shape");
    }
  }

  const ala::AttentionMap alpha = model.explain(image);
  const ala::Prediction pred = model.predict(image);
  // Render at the input's native resolution so the overlay matches it.
  ala::ImageTensor display = image;
  ala::AttentionMap display_alpha = alpha;
  if (!a.image.empty() && (original.height != image.height || original.width != image.width)) {
    display = ala::raster_to_image(original, enc.channels);
    display_alpha = ala::AttentionMap::from_grid(alpha.token_grid, alpha.grid_height, alpha.grid_width,
                                                 original.height, original.width);
  }

  const fs::path out = a.out;
  fs::create_directories(out);
  ala::write_png(out / "heatmap.png", ala::render_heatmap(display_alpha));
  ala::write_png(out / "overlay.png", ala::render_overlay(display, display_alpha));
  const std::vector<float> raw(alpha.pixel_map.begin(), alpha.pixel_map.end());
  ala::write_npy(out / "alpha.npy", raw, {static_cast<std::size_t>(alpha.height), static_cast<std::size_t>(alpha.width)});

  const json model_cfg = ala::to_json(model.config());
  json provenance{{"sample_id", sample_id},
                  {"checkpoint_hash", ala::file_hash(a.checkpoint)},
                  {"config_hash", config_hash(model_cfg)},
                  {"predicted_class", pred.argmax()},
                  {"probabilities", std::vector<double>(pred.probs.data(), pred.probs.data() + pred.probs.size())},
                  {"alpha_shape", {alpha.height, alpha.width}},
                  {"overlay_blend", 0.6}};
  std::ofstream(out / "provenance.json", std::ios::trunc) << provenance.dump(2) << "\n";
  std::cout << "sample " << sample_id << " predicted class " << pred.argmax() << "; wrote " << out.string() << "\n";
  return kExitOk;
}

// ---- compare --------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> runs;
  EvalArgs eval;
};

// Renders the ablation table from finished run directories.
int compare_runs(const std::vector<std::string>& runs) {
  std::vector<ala::AblationRow> rows;
  for (const auto& dir : runs) {
    const fs::path summary_path = fs::path(dir) / "summary.json";
    std::ifstream is(summary_path);
    if (!is) throw ala::ConfigError("cannot read " + summary_path.string());
    const json s = json::parse(is);
    const json& ab = s.at("config").at("train").at("ablation");
    const json& explainers = s.at("test").at("explainers");
    if (!explainers.contains("ala")) throw ala::ConfigError(summary_path.string() + ": run has no 'ala' evaluation");
    const json& m = explainers.at("ala");
    ala::AblationRow row;
    row.name = fs::path(dir).filename().string();
    row.use_aea = ab.at("use_aea");
    row.use_lora = ab.at("use_lora");
    row.use_taps = ab.at("use_taps");
    row.report.explainer = row.name;
    if (!m.at("mean_iou").is_null()) row.report.mean_iou = m.at("mean_iou").get<double>();
    row.report.insertion = m.at("insertion");
    row.report.deletion = m.at("deletion");
    row.report.id_score = m.at("id_score");
    rows.push_back(row);
  }
  std::cout << ala::render_ablation_table(rows);
  return kExitOk;
}

int cmd_compare(CompareArgs a) {
  if (!a.runs.empty()) {
    if (!a.eval.checkpoint.empty()) throw ala::ConfigError("compare: give either --runs or --checkpoint, not both");
    return compare_runs(a.runs);
  }
  if (a.eval.checkpoint.empty()) throw ala::ConfigError("compare: --checkpoint or --runs is required");
  return run_eval(a.eval, true);
}

void add_eval_options(CLI::App* cmd, EvalArgs& a, bool checkpoint_required) {
  auto* ck = cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint file (best.ckpt)");
  if (checkpoint_required) ck->required();
  cmd->add_option("--dataset", a.dataset, "Dataset archive (default: checkpoint's data config, test split)");
  cmd->add_option("--manifest", a.manifest, "Manifest TSV of external images");
  cmd->add_option("--root", a.root, "Directory manifest paths are relative to");
  cmd->add_option("--steps", a.steps, "Insertion/deletion steps: N or 'exhaustive'");
  cmd->add_option("--threshold", a.threshold, "IoU binarisation threshold");
  cmd->add_option("--max-samples", a.max_samples, "Evaluate only the first N samples");
  cmd->add_option("--seed", a.seed, "Seed for the random baseline");
  cmd->add_option("--out", a.out, "Report directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-map classifier: train, evaluate and explain"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ala 0.1.0");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate and cache the synthetic shapes dataset");
  gen_cmd->add_option("--config", gen.config, "Run config whose data section supplies defaults");
  gen_cmd->add_option("--num-samples", gen.num_samples, "Number of samples");
  gen_cmd->add_option("--num-classes", gen.num_classes, "Number of classes");
  gen_cmd->add_option("--image-size", gen.image_size, "Square image side");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Archive path (default: $ALA_CACHE_DIR/synth-*.alds)");
  gen_cmd->add_option("--png-dir", gen.png_dir, "Also export PNG images, masks and manifest.tsv here");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train with early stopping and evaluate on the test split");
  train_cmd->add_option("config", train.config, "Run config (JSON)")->check(CLI::ExistingFile);
  train.overrides.add_to(train_cmd);
  train_cmd->add_flag("--print-config", train.print_config, "Print the resolved config and exit");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch progress on stdout");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate explanations of a checkpoint");
  add_eval_options(eval_cmd, eval, true);
  eval_cmd->add_option("--explainers", eval.explainers, "Comma list of ala, gradcam, ig, uniform, random");

  ExplainArgs explain;
  auto* explain_cmd = app.add_subcommand("explain", "Write heatmap, overlay and raw attention for one input");
  explain_cmd->add_option("--checkpoint", explain.checkpoint, "Checkpoint file")->required();
  explain_cmd->add_option("--image", explain.image, "PNG/PPM/PGM image");
  explain_cmd->add_option("--sample-id", explain.sample_id, "Sample id from the checkpoint's dataset");
  explain_cmd->add_option("--dataset", explain.dataset, "Dataset archive to look the sample id up in");
  explain_cmd->add_option("--out", explain.out, "Output directory");

  CompareArgs compare;
  compare.eval.explainers = "ala,gradcam,ig,uniform,random";
  auto* compare_cmd = app.add_subcommand("compare", "Compare explainers on a checkpoint, or ablation runs");
  add_eval_options(compare_cmd, compare.eval, false);
  compare_cmd->add_option("--explainers", compare.eval.explainers, "Comma list of explainers");
  compare_cmd->add_option("--runs", compare.runs, "Run directories to tabulate as an ablation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return run_eval(eval, false);
    if (*explain_cmd) return cmd_explain(explain);
    if (*compare_cmd) return cmd_compare(compare);
  } catch (const ala::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    if (!e.snapshot().empty()) std::cerr << "state: " << e.snapshot() << "\n";
    return kExitNumeric;
  } catch (const ala::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUser;
  } catch (const ala::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUser;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUser;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kExitUser;
  }
  return kExitUser;
}

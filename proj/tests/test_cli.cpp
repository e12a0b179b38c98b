// SPDX-License-Identifier: Apache-2.0
//
// Drives the installed command-line tool as a subprocess.
#include "ala/checkpoint.hpp"
#include "ala/data.hpp"
#include "ala/image_io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kCli = ALA_CLI_PATH;
const fs::path kConfigs = ALA_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ala_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli.string() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Small synthetic run shared by several tests.
fs::path tiny_config(const fs::path& dir, int epochs, const std::string& extra_train = "") {
  const fs::path cfg = dir / "tiny.json";
  std::ofstream(cfg) << R"({"train": {"max_epochs": )" << epochs << R"(, "patience": 3)" << extra_train
                     << R"(}, "data": {"num_samples": 48}, "metrics": {"num_steps": 8, "explainers": ["ala"],
                        "max_eval_samples": 4}})";
  return cfg;
}

TEST(Cli, UsageErrorsExitTwo) {
  const fs::path dir = scratch("usage");
  EXPECT_EQ(run("", dir / "log"), 2);
  EXPECT_EQ(run("--help", dir / "log"), 0);
  EXPECT_EQ(run("train " + (dir / "nope.json").string(), dir / "log"), 2);
  std::ofstream(dir / "bad.json") << R"({"train": {"patience": 0}})";
  EXPECT_EQ(run("train " + (dir / "bad.json").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("train.patience"), std::string::npos);
  std::ofstream(dir / "typo.json") << R"({"trian": {}})";
  EXPECT_EQ(run("train " + (dir / "typo.json").string(), dir / "log"), 2);
  EXPECT_EQ(run("train " + (dir / "typo.json").string() + " --ablation no-everything", dir / "log"), 2);
}

TEST(Cli, PrintConfigShowsDefaults) {
  const fs::path dir = scratch("print");
  ASSERT_EQ(run("train " + (kConfigs / "quickstart.json").string() + " --print-config", dir / "out"), 0);
  const json j = json::parse(slurp(dir / "out"));
  EXPECT_EQ(j.at("train").at("lambda"), 1.0);
  EXPECT_EQ(j.at("model").at("attention_norm_power"), 0.5);
}

TEST(Cli, QuickstartTrainsAndWritesRunDirectory) {
  const fs::path dir = scratch("quickstart");
  ASSERT_EQ(run("train " + (kConfigs / "quickstart.json").string() + " --quiet --out " + (dir / "run").string(),
                dir / "log"),
            0)
      << slurp(dir / "log");
  for (const char* f : {"best.ckpt", "summary.json", "config.json", "train.log", "eval/ala.json", "eval/uniform.json"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  const json s = read_json(dir / "run" / "summary.json");
  EXPECT_EQ(s.at("training").at("epochs").size(), 2u);
  EXPECT_EQ(s.at("training").at("epochs")[1].at("gate"), "ALL_ONES");
  EXPECT_NE(slurp(dir / "run" / "train.log").find("gate PASS_ALPHA"), std::string::npos);
}

TEST(Cli, NoAeaAblationKeepsAttentionEveryEpoch) {
  const fs::path dir = scratch("noaea");
  const fs::path cfg = tiny_config(dir, 3);
  ASSERT_EQ(run("train " + cfg.string() + " --quiet --ablation no-aea --out " + (dir / "run").string(), dir / "log"), 0)
      << slurp(dir / "log");
  const json s = read_json(dir / "run" / "summary.json");
  ASSERT_EQ(s.at("training").at("epochs").size(), 3u);
  for (const auto& e : s.at("training").at("epochs")) EXPECT_EQ(e.at("gate"), "PASS_ALPHA");
  EXPECT_EQ(s.at("config").at("train").at("ablation").at("use_aea"), false);
}

TEST(Cli, IdenticalRunsGiveIdenticalCheckpoints) {
  const fs::path dir = scratch("determinism");
  const fs::path cfg = tiny_config(dir, 2);
  ASSERT_EQ(run("train " + cfg.string() + " --quiet --out " + (dir / "a").string(), dir / "log"), 0);
  ASSERT_EQ(run("train " + cfg.string() + " --quiet --out " + (dir / "b").string(), dir / "log"), 0);
  EXPECT_EQ(slurp(dir / "a" / "best.ckpt"), slurp(dir / "b" / "best.ckpt"));
  EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json"));
  ASSERT_EQ(run("train " + cfg.string() + " --quiet --seed 9 --out " + (dir / "c").string(), dir / "log"), 0);
  EXPECT_NE(slurp(dir / "a" / "best.ckpt"), slurp(dir / "c" / "best.ckpt"));
}

class CliWithCheckpoint : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("trained");
    const fs::path cfg = tiny_config(dir_, 1);
    ASSERT_EQ(run("train " + cfg.string() + " --quiet --out " + (dir_ / "run").string(), dir_ / "log"), 0);
    ckpt_ = dir_ / "run" / "best.ckpt";
  }
  static fs::path dir_;
  static fs::path ckpt_;
};
fs::path CliWithCheckpoint::dir_;
fs::path CliWithCheckpoint::ckpt_;

TEST_F(CliWithCheckpoint, ExplainBySampleIdWritesArtifacts) {
  const fs::path out = dir_ / "explain";
  ASSERT_EQ(run("explain --checkpoint " + ckpt_.string() + " --sample-id synth-7-00003 --out " + out.string(),
                dir_ / "log"),
            0)
      << slurp(dir_ / "log");
  const ala::Raster overlay = ala::read_raster(out / "overlay.png");
  EXPECT_EQ(overlay.width, 32);
  EXPECT_EQ(overlay.height, 32);
  std::vector<std::size_t> shape;
  const std::vector<float> raw = ala::read_npy(out / "alpha.npy", &shape);
  EXPECT_EQ(shape, (std::vector<std::size_t>{32, 32}));

  const auto loaded = ala::load_checkpoint(ckpt_);
  const ala::Dataset d = ala::synth_shapes(48, 4, 32, 7);
  const ala::AttentionMap alpha = loaded.model->explain(d[3].image);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_EQ(raw[i], static_cast<float>(alpha.pixel_map[i]));

  const json prov = read_json(out / "provenance.json");
  EXPECT_EQ(prov.at("sample_id"), "synth-7-00003");
  EXPECT_EQ(prov.at("checkpoint_hash").get<std::string>().size(), 16u);
  EXPECT_TRUE(prov.contains("config_hash"));

  // rerun: byte-identical raw attention
  const std::string first = slurp(out / "alpha.npy");
  ASSERT_EQ(run("explain --checkpoint " + ckpt_.string() + " --sample-id synth-7-00003 --out " + out.string(),
                dir_ / "log"),
            0);
  EXPECT_EQ(slurp(out / "alpha.npy"), first);
}

TEST_F(CliWithCheckpoint, ExplainImageAtNativeResolution) {
  const fs::path out = dir_ / "explain_img";
  const ala::Dataset d = ala::synth_shapes(1, 4, 48, 3);
  ala::write_png(dir_ / "big.png", ala::image_to_raster(d[0].image));
  ASSERT_EQ(run("explain --checkpoint " + ckpt_.string() + " --image " + (dir_ / "big.png").string() + " --out " +
                    out.string(),
                dir_ / "log"),
            0)
      << slurp(dir_ / "log");
  EXPECT_EQ(ala::read_raster(out / "overlay.png").width, 48);
}

TEST_F(CliWithCheckpoint, ExplainErrorsExitTwo) {
  std::ofstream(dir_ / "junk.png") << "not a png";
  EXPECT_EQ(run("explain --checkpoint " + ckpt_.string() + " --image " + (dir_ / "junk.png").string(), dir_ / "log"),
            2);
  EXPECT_EQ(run("explain --checkpoint " + ckpt_.string() + " --sample-id nope", dir_ / "log"), 2);
  EXPECT_EQ(run("explain --checkpoint " + (dir_ / "missing.ckpt").string() + " --sample-id x", dir_ / "log"), 2);
}

TEST_F(CliWithCheckpoint, EvalTableHasOneRowPerExplainer) {
  const fs::path out = dir_ / "eval3";
  ASSERT_EQ(run("eval --checkpoint " + ckpt_.string() + " --explainers ala,gradcam,ig --steps 8 --max-samples 2 --out " +
                    out.string(),
                dir_ / "log"),
            0)
      << slurp(dir_ / "log");
  const std::string table = slurp(out / "table.txt");
  for (const char* name : {"ala", "gradcam", "ig"}) EXPECT_NE(table.find(name), std::string::npos);
  EXPECT_NE(table.find("ID Score"), std::string::npos);
  EXPECT_EQ(read_json(out / "ig.json").at("samples").size(), 2u);
}

TEST_F(CliWithCheckpoint, EvalWithoutMasksReportsAbsentIou) {
  const fs::path data = dir_ / "pngs";
  ASSERT_EQ(run("gen-data --num-samples 4 --seed 2 --out " + (dir_ / "d.alds").string() + " --png-dir " + data.string(),
                dir_ / "log"),
            0)
      << slurp(dir_ / "log");
  auto entries = ala::read_manifest(data / "manifest.tsv");
  for (auto& e : entries) e.mask_path.reset();
  ala::write_manifest(data / "nomask.tsv", entries);
  const fs::path out = dir_ / "eval_nomask";
  ASSERT_EQ(run("eval --checkpoint " + ckpt_.string() + " --manifest " + (data / "nomask.tsv").string() + " --root " +
                    data.string() + " --steps 8 --out " + out.string(),
                dir_ / "log"),
            0)
      << slurp(dir_ / "log");
  const json r = read_json(out / "ala.json");
  EXPECT_TRUE(r.at("aggregate").at("mean_iou").is_null());
  EXPECT_GT(r.at("aggregate").at("insertion").get<double>(), 0.0);
}

TEST_F(CliWithCheckpoint, EvalMismatchedDatasetExitsTwo) {
  ASSERT_EQ(run("gen-data --num-samples 4 --image-size 16 --out " + (dir_ / "small.alds").string(), dir_ / "log"), 0);
  EXPECT_EQ(run("eval --checkpoint " + ckpt_.string() + " --dataset " + (dir_ / "small.alds").string(), dir_ / "log"),
            2);
}

TEST_F(CliWithCheckpoint, ExhaustiveStepsMatchDefaultSteps) {
  auto eval = [&](const std::string& steps, const std::string& name) {
    const fs::path out = dir_ / name;
    EXPECT_EQ(run("eval --checkpoint " + ckpt_.string() + " --max-samples 3 --steps " + steps + " --out " +
                      out.string(),
                  dir_ / "log"),
              0);
    return read_json(out / "ala.json").at("aggregate");
  };
  const json coarse = eval("100", "steps_default");
  const json fine = eval("exhaustive", "steps_exhaustive");
  EXPECT_NEAR(coarse.at("insertion").get<double>(), fine.at("insertion").get<double>(), 0.02);
  EXPECT_NEAR(coarse.at("deletion").get<double>(), fine.at("deletion").get<double>(), 0.02);
}

TEST(Cli, ExhaustiveStepsOnEightByEightInputs) {
  const fs::path dir = scratch("eight");
  ASSERT_EQ(run("gen-data --num-samples 40 --image-size 16 --out " + (dir / "d.alds").string() + " --png-dir " +
                    (dir / "png").string(),
                dir / "log"),
            0);
  std::ofstream(dir / "cfg.json") << R"({
    "model": {"encoder": {"image_height": 8, "image_width": 8, "patch_size": 2},
              "adapter": {"patch_size": 2}},
    "train": {"max_epochs": 1},
    "data": {"source": "manifest", "image_size": 8, "root": ")"
                                  << (dir / "png").string() << R"(", "manifest": ")"
                                  << (dir / "png" / "manifest.tsv").string() << R"("},
    "metrics": {"num_steps": 100, "explainers": ["ala"], "max_eval_samples": 3}})";
  ASSERT_EQ(run("train " + (dir / "cfg.json").string() + " --quiet --out " + (dir / "run").string(), dir / "log"), 0)
      << slurp(dir / "log");
  const fs::path ckpt = dir / "run" / "best.ckpt";
  ASSERT_EQ(run("eval --checkpoint " + ckpt.string() + " --max-samples 3 --steps exhaustive --out " +
                    (dir / "ex").string(),
                dir / "log"),
            0)
      << slurp(dir / "log");
  const json a = read_json(dir / "run" / "eval" / "ala.json").at("aggregate");
  const json b = read_json(dir / "ex" / "ala.json").at("aggregate");
  EXPECT_NEAR(a.at("insertion").get<double>(), b.at("insertion").get<double>(), 0.02);
  EXPECT_NEAR(a.at("deletion").get<double>(), b.at("deletion").get<double>(), 0.02);
}

TEST_F(CliWithCheckpoint, CompareAblationRuns) {
  const fs::path out = dir_ / "cmp.txt";
  ASSERT_EQ(run("compare --runs " + (dir_ / "run").string(), out), 0) << slurp(out);
  EXPECT_NE(slurp(out).find("AEA"), std::string::npos);
}

}  // namespace

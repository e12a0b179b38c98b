// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails. Run with criterion names to
// select a subset; with no arguments every criterion runs.
#include "ala/archive.hpp"
#include "ala/config.hpp"
#include "ala/metrics.hpp"
#include "ala/pipeline.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using namespace ala;

const fs::path kConfigs = ALA_CONFIG_DIR;

// Pinned tolerances and budgets.
constexpr double kLoraTol = 1e-12;
constexpr double kGradStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr int kGradSamples = 25;
constexpr double kAeaBudgetSec = 120.0;
constexpr double kEffectivenessBudgetSec = 15.0 * 60.0;
constexpr double kMinAccuracy = 0.8;
constexpr double kIouRatio = 2.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Matrix> snapshot(const ParameterList& params) {
  std::vector<Matrix> out;
  for (const auto& p : params) out.push_back(p.var.value());
  return out;
}

bool bitwise_equal(const std::vector<Matrix>& a, const ParameterList& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].var.value().size()) return false;
    if (std::memcmp(a[i].data(), b[i].var.value().data(), sizeof(double) * static_cast<std::size_t>(a[i].size())) != 0) {
      return false;
    }
  }
  return true;
}

RunConfig desk_config() {
  RunConfig c = load_run_config(kConfigs / "shapes.json");
  c.metrics.explainers = {"ala", "random", "uniform"};
  return c;
}

// ---------------------------------------------------------------------------

Outcome aea_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = desk_config();
  c.train.max_epochs = 10;
  c.train.patience = 10;
  c.resolve();
  const DatasetSplit data = load_data(c.data, c.model.encoder.channels);
  AlaModel model(c.model);

  std::vector<Matrix> before = snapshot(model.ala_parameters());
  int even_ok = 0, odd_ok = 0, epochs = 0;
  std::string problems;
  fit(model, data.train, data.val, c.train, nullptr, [&](const EpochRecord& r, const AlaModel& m) {
    ++epochs;
    const ParameterList now = m.ala_parameters();
    const bool unchanged = bitwise_equal(before, now);
    if (r.epoch % 2 == 0) {
      if (unchanged && r.gate == GateState::AllOnes && r.ala_frozen) {
        ++even_ok;
      } else {
        problems += " epoch" + std::to_string(r.epoch) + "(even)";
      }
    } else if (!unchanged && r.gate == GateState::PassAlpha) {
      ++odd_ok;
    } else {
      problems += " epoch" + std::to_string(r.epoch) + "(odd)";
    }
    before = snapshot(now);
  });
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = epochs == 10 && even_ok == 5 && odd_ok == 5 && secs < kAeaBudgetSec;
  o.detail = std::to_string(even_ok) + "/5 even epochs frozen bitwise, " + std::to_string(odd_ok) +
             "/5 odd epochs updated, " + fmt(secs, 3) + " s (budget " + fmt(kAeaBudgetSec, 3) + " s)" + problems;
  return o;
}

Outcome even_epoch_identity() {
  Rng rng(101);
  AlaModel model(testing::toy_model_config());
  testing::randomize(model.parameters(), rng);
  const Eigen::Index cells = model.config().encoder.num_patches();
  int identical = 0;
  ag::NoGradGuard guard;
  for (int i = 0; i < 50; ++i) {
    const ImageTensor img = testing::random_image(3, 16, 16, rng);
    const ag::Var h_k = model.encoder().encode_with_taps(img).final();
    const GatedAttention gated = aea_gate(model.explain(img), 2);
    const Prediction gated_pred = model.perception().predict(h_k, gated);
    const Prediction plain = model.perception().predict_unmodulated(h_k);
    const auto via_forward = model.forward(ag::constant(img.pixels), GateState::AllOnes).pb.logits.value();
    const auto unmodulated = model.perception().forward(h_k, ag::Var{}).logits.value();
    const bool same = gated.gate_state == GateState::AllOnes && gated_pred.logits == plain.logits &&
                      gated_pred.probs == plain.probs && via_forward == unmodulated &&
                      static_cast<Eigen::Index>(gated.h_ala.size()) == cells;
    if (same) ++identical;
  }
  return {identical == 50, std::to_string(identical) + "/50 inputs bitwise identical (max |diff| = 0 required)"};
}

Outcome lora_contract() {
  AlaModel model(testing::toy_model_config(4, 1, 3, 7));
  Rng rng(102);
  const DatasetSplit data = testing::toy_split(40, 3, 103);
  const std::vector<Matrix> base = snapshot(model.encoder_base_parameters());
  const std::vector<Matrix> lora0 = snapshot(model.lora_parameters());
  TrainConfig t = testing::toy_train_config(1);
  AdamW opt(t.learning_rate, t.beta1, t.beta2, t.epsilon, t.weight_decay);
  const ParameterList all = model.parameters();
  for (int step = 1; step <= 100; ++step) {
    const EpochPlan plan = make_epoch_plan(1 + (step - 1) / 10, t);
    model.set_ala_trainable(!plan.ala_frozen);
    const ImageSample& s = data.train[static_cast<std::size_t>(step) % data.train.size()];
    accumulate_gradients(model, s.image, s.label, plan.gate, t.lambda, 1.0);
    opt.step(optimizer_parameters(model, plan));
    for (const auto& p : all) {
      ag::Var v = p.var;
      v.zero_grad();
    }
  }
  model.set_ala_trainable(true);
  const bool base_same = bitwise_equal(base, model.encoder_base_parameters());
  const bool lora_moved = !bitwise_equal(lora0, model.lora_parameters());

  double worst = 0.0;
  const int ranks[3] = {1, 2, 4};
  std::uniform_int_distribution<int> dim(4, 12);
  for (int i = 0; i < 20; ++i) {
    const int r = ranks[i % 3];
    const int d1 = dim(rng), d2 = dim(rng);
    LoraPair p{testing::random_matrix(d1, d2, rng), testing::random_matrix(r, d2, rng),
               testing::random_matrix(d1, r, rng), 1.0};
    const Matrix eff = lora_effective_weight(p);
    for (int a = 0; a < d1; ++a) {
      for (int b = 0; b < d2; ++b) {
        double s = p.base(a, b);
        for (int k = 0; k < r; ++k) s += p.b(a, k) * p.a(k, b);
        worst = std::max(worst, std::abs(eff(a, b) - s));
      }
    }
  }
  Outcome o;
  o.pass = base_same && lora_moved && worst <= kLoraTol;
  o.detail = std::string("base weights ") + (base_same ? "bitwise unchanged" : "CHANGED") + " after 100 steps, LoRA " +
             (lora_moved ? "updated" : "NOT updated") + "; max |W - (W0+BA)| over 20 shapes = " + fmt(worst, 3) +
             " (tol " + fmt(kLoraTol, 2) + ")";
  return o;
}

Outcome gradient_checks() {
  AlaModel model(testing::toy_model_config(4, 1, 3, 11));
  Rng rng(104);
  testing::randomize(model.parameters(), rng);
  const ImageTensor img = testing::random_image(3, 16, 16, rng);
  const int label = 1;
  const double lambda = 1.0;
  accumulate_gradients(model, img, label, GateState::PassAlpha, lambda, 1.0);

  // Trainable scalar entries across encoder LoRA, adapter and perception branch.
  std::vector<std::pair<NamedParameter, Eigen::Index>> pool;
  for (const auto& p : model.parameters()) {
    if (!p.var.requires_grad()) continue;
    for (Eigen::Index i = 0; i < p.var.value().size(); ++i) pool.push_back({p, i});
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  double worst = 0.0;
  std::string worst_name;
  int passed = 0;
  for (int k = 0; k < kGradSamples; ++k) {
    const auto& [p, i] = pool[static_cast<std::size_t>(k)];
    const double analytic = p.var.has_grad() ? p.var.grad().data()[i] : 0.0;
    const double numeric = testing::central_difference(
        p.var, i, kGradStep, [&] { return testing::joint_loss_value(model, img, label, GateState::PassAlpha, lambda); });
    const double err = testing::relative_error(analytic, numeric);
    if (err <= kGradRelTol) ++passed;
    if (err >= worst) {
      worst = err;
      worst_name = p.name + "[" + std::to_string(i) + "]";
    }
  }
  return {passed == kGradSamples, std::to_string(passed) + "/" + std::to_string(kGradSamples) +
                                      " parameters within rel. error " + fmt(kGradRelTol, 2) + " (worst " +
                                      fmt(worst, 3) + " at " + worst_name + ", step " + fmt(kGradStep, 2) + ")"};
}

// Mean of weighted pixels; a linear stub classifier for metric oracles.
class LinearStub : public ClassScorer {
 public:
  explicit LinearStub(Matrix w) : w_(std::move(w)) {}
  double class_probability(const ImageTensor& x, int) const override {
    return x.pixels.cwiseProduct(w_).sum() / static_cast<double>(w_.size());
  }

 private:
  Matrix w_;
};

Outcome metric_oracles() {
  Rng rng(105);
  std::bernoulli_distribution coin(0.35);
  int iou_ok = 0;
  for (int t = 0; t < 200; ++t) {
    BinaryMask a(16, 16), b(16, 16);
    std::set<int> sa, sb;
    for (int i = 0; i < 256; ++i) {
      if (coin(rng)) {
        a.cells[static_cast<std::size_t>(i)] = 1;
        sa.insert(i);
      }
      if (coin(rng)) {
        b.cells[static_cast<std::size_t>(i)] = 1;
        sb.insert(i);
      }
    }
    std::set<int> uni = sa, inter;
    uni.insert(sb.begin(), sb.end());
    for (int i : sa) {
      if (sb.count(i)) inter.insert(i);
    }
    const double oracle = uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    if (iou(a, b) == oracle) ++iou_ok;
  }

  int curve_ok = 0, endpoint_ok = 0;
  const int n = 64;
  for (int t = 0; t < 50; ++t) {
    const LinearStub model(testing::random_image(3, 8, 8, rng).pixels);
    const ImageTensor x = testing::random_image(3, 8, 8, rng);
    std::uniform_int_distribution<int> level(0, 15);  // coarse levels exercise tie-breaking
    std::vector<double> v(n);
    for (auto& e : v) e = level(rng) / 15.0;
    const AttentionMap alpha = AttentionMap::from_pixels(v, 8, 8);
    const CurveResult r = insertion_deletion(model, x, alpha, 0, 0);

    // Brute force: stable selection of the next-highest pixel, fresh images per n.
    std::vector<int> order;
    std::vector<bool> used(n, false);
    for (int k = 0; k < n; ++k) {
      int best = -1;
      for (int i = 0; i < n; ++i) {
        if (!used[static_cast<std::size_t>(i)] && (best < 0 || v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)])) best = i;
      }
      used[static_cast<std::size_t>(best)] = true;
      order.push_back(best);
    }
    std::vector<double> ins(n + 1), del(n + 1);
    for (int k = 0; k <= n; ++k) {
      ImageTensor in(3, 8, 8), de = x;
      for (int j = 0; j < k; ++j) {
        for (int c = 0; c < 3; ++c) {
          in.pixels(c, order[static_cast<std::size_t>(j)]) = x.pixels(c, order[static_cast<std::size_t>(j)]);
          de.pixels(c, order[static_cast<std::size_t>(j)]) = 0.0;
        }
      }
      ins[static_cast<std::size_t>(k)] = model.class_probability(in, 0);
      del[static_cast<std::size_t>(k)] = model.class_probability(de, 0);
    }
    double ins_auc = 0.0, del_auc = 0.0;
    for (int k = 1; k <= n; ++k) {
      ins_auc += (1.0 / n) * (ins[static_cast<std::size_t>(k - 1)] + ins[static_cast<std::size_t>(k)]) / 2.0;
      del_auc += (1.0 / n) * (del[static_cast<std::size_t>(k - 1)] + del[static_cast<std::size_t>(k)]) / 2.0;
    }
    if (r.insertion_values == ins && r.deletion_values == del && r.insertion_auc == ins_auc &&
        r.deletion_auc == del_auc) {
      ++curve_ok;
    }
    if (r.insertion_values.back() == r.deletion_values.front()) ++endpoint_ok;
  }

  // Endpoint identity on a real model through evaluate().
  AlaModel model(testing::toy_model_config());
  testing::randomize(model.parameters(), rng);
  const Dataset d = synth_shapes(10, 3, 16, 106);
  const EvalReport rep = evaluate(model, d, [&](const ImageSample& s) { return model.explain(s.image); }, {16, 0.5});
  int model_endpoint_ok = 0;
  for (const auto& s : rep.per_sample) {
    if (s.endpoint_gap == 0.0) ++model_endpoint_ok;
  }

  Outcome o;
  o.pass = iou_ok == 200 && curve_ok == 50 && endpoint_ok == 50 && model_endpoint_ok == 10;
  o.detail = "IoU exact " + std::to_string(iou_ok) + "/200, curves exact " + std::to_string(curve_ok) +
             "/50, endpoint identity " + std::to_string(endpoint_ok) + "/50 stub + " +
             std::to_string(model_endpoint_ok) + "/10 model samples";
  return o;
}

const EvalReport& report_for(const RunResult& r, const std::string& name) {
  for (const auto& rep : r.reports) {
    if (rep.explainer == name) return rep;
  }
  throw std::runtime_error("missing report " + name);
}

Outcome effectiveness() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = run_experiment(desk_config(), {});
  const double secs = seconds_since(t0);
  const double iou_ala = report_for(r, "ala").mean_iou.value();
  const double iou_rand = report_for(r, "random").mean_iou.value();
  const double id_ala = report_for(r, "ala").id_score;
  const double id_uni = report_for(r, "uniform").id_score;
  const bool a = r.test_accuracy >= kMinAccuracy;
  const bool b = iou_ala >= kIouRatio * iou_rand;
  const bool c = id_ala > id_uni;
  Outcome o;
  o.pass = a && b && c && secs < kEffectivenessBudgetSec;
  o.detail = "train " + std::to_string(r.data.train.size()) + ", stopped at epoch " +
             std::to_string(r.training.stopping_epoch) + " (best " + std::to_string(r.training.best_epoch) +
             "); (a) accuracy " + fmt(r.test_accuracy) + " >= " + fmt(kMinAccuracy) + (a ? "" : " FAILED") +
             "; (b) mIoU ala " + fmt(iou_ala) + " vs random " + fmt(iou_rand) + " (ratio " +
             fmt(iou_ala / iou_rand, 3) + " >= " + fmt(kIouRatio) + ")" + (b ? "" : " FAILED") + "; (c) ID ala " +
             fmt(id_ala) + " > uniform " + fmt(id_uni) + (c ? "" : " FAILED") + "; " + fmt(secs, 4) + " s (budget " +
             fmt(kEffectivenessBudgetSec, 4) + " s)";
  return o;
}

Outcome ablation_direction() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    double iou[2];
    for (int full = 1; full >= 0; --full) {
      RunConfig c = desk_config();
      c.metrics.explainers = {"ala"};
      c.train.seed = seed;
      c.model.init_seed = seed;
      c.train.ablation.use_aea = full == 1;
      iou[full] = run_experiment(c, {}).reports.front().mean_iou.value();
    }
    const bool win = iou[1] >= iou[0];
    if (win) ++wins;
    detail += " seed" + std::to_string(seed) + ": full " + fmt(iou[1]) + (win ? " >= " : " < ") + "no-aea " +
              fmt(iou[0]) + ";";
  }
  return {wins >= 2, std::to_string(wins) + "/3 seeds with full >= no-AEA mIoU (need 2);" + detail};
}

Outcome determinism() {
  const RunConfig c = desk_config();
  const fs::path root = fs::temp_directory_path() / "ala_acceptance_determinism";
  fs::remove_all(root);
  run_experiment(c, root / "a");
  run_experiment(c, root / "b");
  const std::string ha = file_hash(root / "a" / "summary.json");
  const std::string hb = file_hash(root / "b" / "summary.json");
  const std::string ca = file_hash(root / "a" / "best.ckpt");
  const std::string cb = file_hash(root / "b" / "best.ckpt");
  return {ha == hb && ca == cb, "summary hashes " + ha + " / " + hb + ", checkpoint hashes " + ca + " / " + cb};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"aea_exactness", aea_exactness},
      {"even_epoch_identity", even_epoch_identity},
      {"lora_contract", lora_contract},
      {"gradient_checks", gradient_checks},
      {"metric_oracles", metric_oracles},
      {"effectiveness", effectiveness},
      {"ablation_direction", ablation_direction},
      {"determinism", determinism},
  };
  std::set<std::string> selected(argv + 1, argv + argc);
  for (const auto& name : selected) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown criterion '" << name << "'\n";
      return 2;
    }
  }
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

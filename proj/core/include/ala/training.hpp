// SPDX-License-Identifier: Apache-2.0
//
// Joint training with the alternating-epoch schedule.
#pragma once

#include "ala/data.hpp"
#include "ala/model.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>

namespace ala {

struct AblationFlags {
  bool use_taps = true;
  bool use_lora = true;
  bool use_aea = true;
};

struct AugmentConfig {
  bool flip = true;
  bool crop = true;
  double crop_area = 0.875;
};

struct TrainConfig {
  int max_epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  double lambda = 1.0;
  int patience = 5;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  AblationFlags ablation;

  void validate() const;
};

struct EpochPlan {
  int epoch = 1;
  GateState gate = GateState::PassAlpha;
  bool ala_frozen = false;
};

EpochPlan make_epoch_plan(int epoch, const TrainConfig& config);

/// -log p[y], with p[y] floored at 1e-12. Sets *clamped when the floor hit.
double cross_entropy(const Prediction& p, int y, bool* clamped = nullptr);
/// CE(p_pb, y) + lambda * CE(p_ala, y).
double joint_loss(const Prediction& p_pb, const Prediction& p_ala, int y, double lambda);

ImageTensor hflip(const ImageTensor& image);
BinaryMask hflip(const BinaryMask& mask);

struct Augmented {
  ImageTensor image;
  std::optional<BinaryMask> mask;
};

/// Horizontal flip with probability 1/2, then a random crop covering
/// crop_area of the frame rescaled to the input size. Masks follow the
/// same geometry (nearest-neighbour).
Augmented augment(const ImageTensor& image, const std::optional<BinaryMask>& mask, Rng& rng,
                  const AugmentConfig& config);
ImageTensor augment(const ImageTensor& image, Rng& rng, const AugmentConfig& config);

class AdamW {
 public:
  AdamW(double lr, double beta1, double beta2, double epsilon, double weight_decay);
  /// Updates every parameter in `params` that holds a gradient; others,
  /// and their moment state, are left untouched.
  void step(const ParameterList& params);
  int steps_taken(const std::string& name) const;

 private:
  struct Moments {
    Matrix m, v;
    int t = 0;
  };
  double lr_, beta1_, beta2_, eps_, wd_;
  std::map<std::string, Moments> state_;
};

/// FNV-1a over parameter names and raw value bytes.
std::uint64_t parameter_checksum(const ParameterList& params);

struct EpochRecord {
  int epoch = 0;
  GateState gate = GateState::PassAlpha;
  bool ala_frozen = false;
  double train_loss = 0.0;
  double train_pb_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  std::uint64_t checksum = 0;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  int stopping_epoch = 0;
  bool early_stopped = false;
};

struct LossTerms {
  double total = 0.0;
  double pb = 0.0;
  double ala = 0.0;
};

/// Forward + backward for one sample under a plan; gradients accumulate
/// into the parameter leaves scaled by `weight`.
LossTerms accumulate_gradients(const AlaModel& model, const ImageTensor& image, int label, GateState gate,
                               double lambda, double weight);

/// Mean validation loss and accuracy with the attention passed through.
std::pair<double, double> validate_model(const AlaModel& model, const Dataset& val, double lambda);

using EpochCallback = std::function<void(const EpochRecord&, const AlaModel&)>;

/// Runs epochs under make_epoch_plan, early-stops on validation joint loss
/// and restores the best-validation weights.
/// Throws NumericError on a non-finite loss.
TrainingReport fit(AlaModel& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
                   std::ostream* log = nullptr, const EpochCallback& on_epoch = {});

/// Parameters the optimizer may touch under a plan.
ParameterList optimizer_parameters(const AlaModel& model, const EpochPlan& plan);

}  // namespace ala

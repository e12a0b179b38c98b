// SPDX-License-Identifier: Apache-2.0
#include "ala/training.hpp"

#include "ala/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

namespace ala {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("train." + field + ": " + why);
  };
  if (max_epochs < 1) fail("max_epochs", "must be positive");
  if (batch_size < 1) fail("batch_size", "must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon", "must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(lambda >= 0.0)) fail("lambda", "must be >= 0");
  if (patience < 1) fail("patience", "must be >= 1");
  if (!(augment.crop_area > 0.0 && augment.crop_area <= 1.0)) fail("augment.crop_area", "must lie in (0, 1]");
}

EpochPlan make_epoch_plan(int epoch, const TrainConfig& config) {
  if (epoch < 1) throw ConfigError("make_epoch_plan: epochs are 1-indexed");
  EpochPlan plan;
  plan.epoch = epoch;
  const bool even = epoch % 2 == 0;
  if (config.ablation.use_aea && even) {
    plan.gate = GateState::AllOnes;
    plan.ala_frozen = true;
  }
  return plan;
}

double cross_entropy(const Prediction& p, int y, bool* clamped) {
  if (y < 0 || y >= static_cast<int>(p.probs.size())) throw InputError("cross_entropy: label out of range");
  constexpr double kFloor = 1e-12;
  const double py = p.probs[static_cast<std::size_t>(y)];
  if (py < kFloor) {
    if (clamped) *clamped = true;
    std::clog << "warning: true-class probability " << py << " clamped to " << kFloor << "\n";
    return -std::log(kFloor);
  }
  return -std::log(py);
}

double joint_loss(const Prediction& p_pb, const Prediction& p_ala, int y, double lambda) {
  const double pb = cross_entropy(p_pb, y);
  if (lambda == 0.0) return pb;
  return pb + lambda * cross_entropy(p_ala, y);
}

ImageTensor hflip(const ImageTensor& image) {
  ImageTensor out(image.channels(), image.height, image.width);
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    }
  }
  return out;
}

BinaryMask hflip(const BinaryMask& mask) {
  BinaryMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) out.set(y, x, mask.at(y, mask.width - 1 - x));
  }
  return out;
}

namespace {

ImageTensor crop_image(const ImageTensor& image, int top, int left, int h, int w) {
  ImageTensor out(image.channels(), h, w);
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = image.at(c, top + y, left + x);
    }
  }
  return out;
}

BinaryMask crop_mask(const BinaryMask& mask, int top, int left, int h, int w) {
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.set(y, x, mask.at(top + y, left + x));
  }
  return out;
}

}  // namespace

Augmented augment(const ImageTensor& image, const std::optional<BinaryMask>& mask, Rng& rng,
                  const AugmentConfig& config) {
  Augmented out{image, mask};
  if (config.flip) {
    std::bernoulli_distribution coin(0.5);
    if (coin(rng)) {
      out.image = hflip(out.image);
      if (out.mask) out.mask = hflip(*out.mask);
    }
  }
  if (config.crop && config.crop_area < 1.0) {
    const double side = std::sqrt(config.crop_area);
    const int ch = std::max(1, static_cast<int>(std::lround(side * image.height)));
    const int cw = std::max(1, static_cast<int>(std::lround(side * image.width)));
    std::uniform_int_distribution<int> dy(0, image.height - ch);
    std::uniform_int_distribution<int> dx(0, image.width - cw);
    const int top = dy(rng);
    const int left = dx(rng);
    out.image = resize_image_bilinear(crop_image(out.image, top, left, ch, cw), image.height, image.width);
    if (out.mask) out.mask = resize_mask_nearest(crop_mask(*out.mask, top, left, ch, cw), image.height, image.width);
  }
  return out;
}

ImageTensor augment(const ImageTensor& image, Rng& rng, const AugmentConfig& config) {
  return augment(image, std::nullopt, rng, config).image;
}

AdamW::AdamW(double lr, double beta1, double beta2, double epsilon, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon), wd_(weight_decay) {}

void AdamW::step(const ParameterList& params) {
  for (const auto& p : params) {
    if (!p.var.has_grad()) continue;
    ag::Var var = p.var;
    Moments& s = state_[p.name];
    if (s.t == 0) {
      s.m = Matrix::Zero(var.rows(), var.cols());
      s.v = Matrix::Zero(var.rows(), var.cols());
    }
    ++s.t;
    const Matrix& g = var.grad();
    s.m = beta1_ * s.m + (1.0 - beta1_) * g;
    s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1_, s.t);
    const double bc2 = 1.0 - std::pow(beta2_, s.t);
    Matrix& w = var.mutable_value();
    if (wd_ != 0.0) w *= (1.0 - lr_ * wd_);
    w.array() -= lr_ * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + eps_);
  }
}

int AdamW::steps_taken(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? 0 : it->second.t;
}

std::uint64_t parameter_checksum(const ParameterList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    mix(p.var.value().data(), sizeof(double) * static_cast<std::size_t>(p.var.value().size()));
  }
  return h;
}

LossTerms accumulate_gradients(const AlaModel& model, const ImageTensor& image, int label, GateState gate,
                               double lambda, double weight) {
  const ForwardPass fp = model.forward(ag::constant(image.pixels), gate);
  const ag::Var ce_pb = ag::cross_entropy(fp.pb.logits, label);
  const ag::Var ce_ala = ag::cross_entropy(fp.ala_logits, label);
  const ag::Var total = lambda == 0.0 ? ce_pb : ag::add(ce_pb, ag::scale(ce_ala, lambda));
  LossTerms terms{total.scalar(), ce_pb.scalar(), ce_ala.scalar()};
  if (std::isfinite(terms.total)) ag::backward(weight == 1.0 ? total : ag::scale(total, weight));
  return terms;
}

std::pair<double, double> validate_model(const AlaModel& model, const Dataset& val, double lambda) {
  ag::NoGradGuard guard;
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& s : val) {
    const ForwardPass fp = model.forward(ag::constant(s.image.pixels), GateState::PassAlpha);
    const Prediction pb = Prediction::from_logits(fp.pb.logits.value());
    const Prediction al = Prediction::from_logits(fp.ala_logits.value());
    loss += joint_loss(pb, al, s.label, lambda);
    if (pb.argmax() == s.label) ++correct;
  }
  const double n = static_cast<double>(val.size());
  return {loss / n, static_cast<double>(correct) / n};
}

ParameterList optimizer_parameters(const AlaModel& model, const EpochPlan& plan) {
  ParameterList params = model.lora_parameters();
  for (auto& p : model.perception_parameters()) params.push_back(std::move(p));
  if (!plan.ala_frozen) {
    for (auto& p : model.ala_parameters()) params.push_back(std::move(p));
  }
  return params;
}

namespace {

void zero_grads(const ParameterList& params) {
  for (const auto& p : params) {
    ag::Var v = p.var;
    v.zero_grad();
  }
}

std::string snapshot(int epoch, std::size_t batch, const ImageSample& s, const LossTerms& t) {
  std::ostringstream os;
  os << "epoch=" << epoch << " batch=" << batch << " sample=" << s.sample_id << " label=" << s.label
     << " loss=" << t.total << " ce_pb=" << t.pb << " ce_ala=" << t.ala;
  return os.str();
}

}  // namespace

TrainingReport fit(AlaModel& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
                   std::ostream* log, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw InputError("fit: training set is empty");
  if (val.empty()) throw InputError("fit: validation set is empty");

  Rng rng(config.seed);
  AdamW optimizer(config.learning_rate, config.beta1, config.beta2, config.epsilon, config.weight_decay);
  const ParameterList all = model.parameters();
  zero_grads(all);

  TrainingReport report;
  std::vector<Matrix> best;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  std::vector<std::size_t> order(train.size());

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const EpochPlan plan = make_epoch_plan(epoch, config);
    model.set_ala_trainable(!plan.ala_frozen);
    const ParameterList trainable = optimizer_parameters(model, plan);

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    double pb_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double weight = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const ImageSample& s = train[order[i]];
        const ImageTensor img = augment(s.image, rng, config.augment);
        const LossTerms terms = accumulate_gradients(model, img, s.label, plan.gate, config.lambda, weight);
        if (!std::isfinite(terms.total)) {
          model.set_ala_trainable(true);
          throw NumericError("non-finite training loss", snapshot(epoch, batch_index, s, terms));
        }
        loss_sum += terms.total;
        pb_sum += terms.pb;
      }
      optimizer.step(trainable);
      zero_grads(all);
      ++batch_index;
    }
    model.set_ala_trainable(true);

    const auto [val_loss, val_acc] = validate_model(model, val, config.lambda);
    if (!std::isfinite(val_loss)) {
      std::ostringstream os;
      os << "epoch=" << epoch << " val_loss=" << val_loss;
      throw NumericError("non-finite validation loss", os.str());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.gate = plan.gate;
    rec.ala_frozen = plan.ala_frozen;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_pb_loss = pb_sum / static_cast<double>(train.size());
    rec.val_loss = val_loss;
    rec.val_accuracy = val_acc;
    rec.checksum = parameter_checksum(all);
    report.epochs.push_back(rec);

    if (log) {
      *log << "epoch " << epoch << " gate " << to_string(plan.gate) << " train_loss " << std::setprecision(10)
           << rec.train_loss << " val_loss " << rec.val_loss << " val_acc " << rec.val_accuracy << "\n";
      log->flush();
    }
    if (on_epoch) on_epoch(rec, model);

    report.stopping_epoch = epoch;
    if (val_loss < best_loss) {
      best_loss = val_loss;
      report.best_epoch = epoch;
      since_improvement = 0;
      best.clear();
      best.reserve(all.size());
      for (const auto& p : all) best.push_back(p.var.value());
    } else if (++since_improvement >= config.patience) {
      report.early_stopped = true;
      break;
    }
  }

  for (std::size_t i = 0; i < all.size(); ++i) {
    ag::Var v = all[i].var;
    v.mutable_value() = best[i];
  }
  report.best_val_loss = best_loss;
  return report;
}

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
#include "ala/model.hpp"

#include "ala/errors.hpp"

#include <map>

namespace ala {

void ModelConfig::validate() {
  encoder.validate();
  adapter.validate(encoder);
  if (num_classes < 2) throw ConfigError("model.num_classes: must be at least 2");
  if (!(attention_norm_power >= 0.0 && attention_norm_power <= 1.0)) {
    throw ConfigError("model.attention_norm_power: must lie in [0, 1]");
  }
}

AlaModel::AlaModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.init_seed);
  encoder_ = std::make_unique<Encoder>(config_.encoder, rng);
  adapter_ = std::make_unique<LatticeAdapter>(config_.adapter, config_.encoder, config_.num_classes, rng);
  perception_ = std::make_unique<PerceptionBranch>(config_.encoder.embed_dim, config_.encoder.grid_height(),
                                                   config_.encoder.grid_width(), config_.num_classes, rng,
                                                   config_.attention_norm_power);
}

ForwardPass AlaModel::forward(const ag::Var& image, GateState gate) const {
  ForwardPass fp;
  fp.gate = gate;
  fp.taps = encoder_->encode_with_taps(image);
  const Eigen::Index cells = static_cast<Eigen::Index>(config_.encoder.num_patches());
  if (gate == GateState::PassAlpha) {
    fp.alpha = adapter_->attention_grid(adapter_->former(image, fp.taps));
    fp.h_ala = fp.alpha;
  } else {
    fp.h_ala = ag::constant(Matrix::Ones(cells, 1));
  }
  fp.ala_logits = adapter_->classify_logits(fp.h_ala);
  fp.pb = perception_->forward(fp.taps.final(), fp.h_ala);
  return fp;
}

Prediction AlaModel::predict(const ImageTensor& image) const {
  ag::NoGradGuard guard;
  return Prediction::from_logits(forward(ag::constant(image.pixels), GateState::PassAlpha).pb.logits.value());
}

AttentionMap AlaModel::explain(const ImageTensor& image) const {
  ag::NoGradGuard guard;
  const ag::Var img = ag::constant(image.pixels);
  const EncoderOutput taps = encoder_->encode_with_taps(img);
  return adapter_->attention(adapter_->former(img, taps), image.height, image.width);
}

double AlaModel::class_probability(const ImageTensor& image, int cls) const {
  return predict(image).probs.at(static_cast<std::size_t>(cls));
}

namespace {

// Detaches a parameter list from gradient recording for its lifetime.
class DetachScope {
 public:
  explicit DetachScope(ParameterList params) : params_(std::move(params)) {
    saved_.reserve(params_.size());
    for (auto& p : params_) {
      saved_.push_back(p.var.requires_grad());
      p.var.set_requires_grad(false);
    }
  }
  ~DetachScope() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].var.set_requires_grad(saved_[i]);
  }
  DetachScope(const DetachScope&) = delete;
  DetachScope& operator=(const DetachScope&) = delete;

 private:
  ParameterList params_;
  std::vector<bool> saved_;
};

}  // namespace

ImageTensor AlaModel::input_gradient(const ImageTensor& image, int cls) const {
  DetachScope detach(parameters());
  const ag::Var img = ag::leaf(image.pixels, true);
  const ForwardPass fp = forward(img, GateState::PassAlpha);
  ag::backward(ag::pick(ag::softmax_rows(fp.pb.logits), 0, cls));
  ImageTensor grad(image.channels(), image.height, image.width);
  if (img.has_grad()) grad.pixels = img.grad();
  return grad;
}

std::pair<Matrix, Matrix> AlaModel::activation_and_gradient(const ImageTensor& image, int cls) const {
  DetachScope detach(parameters());
  const ForwardPass fp = [&] {
    ag::NoGradGuard guard;
    return forward(ag::constant(image.pixels), GateState::PassAlpha);
  }();
  // Re-run the pooling and FC tail from a differentiable activation leaf.
  const ag::Var activation = ag::leaf(fp.pb.activation.value(), true);
  const ag::Var logits = perception_->fc().forward(ag::mean_rows(
      ag::avg_pool2x2(activation, config_.encoder.grid_height(), config_.encoder.grid_width())));
  ag::backward(ag::pick(logits, 0, cls));
  Matrix grad = activation.has_grad() ? activation.grad() : Matrix::Zero(activation.rows(), activation.cols());
  return {activation.value(), grad};
}

ParameterList AlaModel::encoder_base_parameters() const { return encoder_->base_parameters(); }
ParameterList AlaModel::lora_parameters() const { return encoder_->trainable_parameters(); }
ParameterList AlaModel::ala_parameters() const { return adapter_->parameters(); }
ParameterList AlaModel::perception_parameters() const { return perception_->parameters(); }

ParameterList AlaModel::parameters() const {
  ParameterList out = encoder_->all_parameters();
  for (auto& p : adapter_->parameters()) out.push_back(std::move(p));
  for (auto& p : perception_->parameters()) out.push_back(std::move(p));
  return out;
}

void AlaModel::set_ala_trainable(bool on) {
  for (auto& p : adapter_->parameters()) p.var.set_requires_grad(on);
}

void copy_parameters(const ParameterList& from, const ParameterList& to) {
  std::map<std::string, const ag::Var*> index;
  for (const auto& p : from) index[p.name] = &p.var;
  for (const auto& p : to) {
    auto it = index.find(p.name);
    if (it == index.end()) throw ConfigError("copy_parameters: missing " + p.name);
    if (it->second->rows() != p.var.rows() || it->second->cols() != p.var.cols()) {
      throw ConfigError("copy_parameters: shape mismatch for " + p.name);
    }
    ag::Var target = p.var;
    target.mutable_value() = it->second->value();
  }
}

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
#include "ala/adapter.hpp"

#include "ala/errors.hpp"

#include <string>

namespace ala {

std::vector<int> AdapterConfig::even_taps(int num_taps, int num_blocks) {
  std::vector<int> taps;
  taps.reserve(num_taps);
  for (int j = 0; j < num_taps; ++j) taps.push_back(j * (num_blocks + 1) / num_taps);
  return taps;
}

void AdapterConfig::validate(const EncoderConfig& encoder) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("adapter." + field + ": " + why);
  };
  if (num_layers < 1) fail("num_layers", "must be positive");
  if (num_heads < 1) fail("num_heads", "must be positive");
  if (dim < 2 || dim % 2 != 0) fail("dim", "must be a positive even number");
  if (dim % num_heads != 0) fail("num_heads", "must divide dim");
  if (mlp_ratio < 1) fail("mlp_ratio", "must be positive");
  if (classifier_channels < 1) fail("classifier_channels", "must be positive");
  if (num_taps < 1) fail("num_taps", "must be positive");
  if (num_taps > num_layers) fail("num_taps", "must not exceed num_layers");
  if (num_taps > encoder.num_blocks + 1) fail("num_taps", "must not exceed encoder blocks + 1");
  if (patch_size != encoder.patch_size) {
    fail("patch_size", "adapter and encoder patch grids must align (" + std::to_string(patch_size) +
                           " vs " + std::to_string(encoder.patch_size) + ")");
  }
  if (encoder.grid_height() % 2 != 0 || encoder.grid_width() % 2 != 0) {
    fail("patch_size", "token grid sides must be even for 2x2 pooling");
  }
  if (tap_blocks.empty()) tap_blocks = even_taps(num_taps, encoder.num_blocks);
  if (static_cast<int>(tap_blocks.size()) != num_taps) fail("tap_blocks", "length must equal num_taps");
  for (std::size_t j = 0; j < tap_blocks.size(); ++j) {
    if (tap_blocks[j] < 0 || tap_blocks[j] > encoder.num_blocks) fail("tap_blocks", "entries must lie in 0..k");
    if (j > 0 && tap_blocks[j] <= tap_blocks[j - 1]) fail("tap_blocks", "must be strictly increasing");
  }
}

GatedAttention aea_gate(const AttentionMap& alpha, int epoch) {
  if (epoch < 1) throw ConfigError("aea_gate: epochs are 1-indexed");
  GatedAttention g;
  g.grid_height = alpha.grid_height;
  g.grid_width = alpha.grid_width;
  if (epoch % 2 == 1) {
    g.h_ala = alpha.token_grid;
    g.gate_state = GateState::PassAlpha;
  } else {
    g.h_ala.assign(alpha.token_grid.size(), 1.0);
    g.gate_state = GateState::AllOnes;
  }
  return g;
}

LatticeAdapter::LatticeAdapter(AdapterConfig config, const EncoderConfig& encoder, int num_classes, Rng& rng)
    : config_(std::move(config)) {
  config_.validate(encoder);
  if (num_classes < 2) throw ConfigError("adapter: num_classes must be at least 2");
  grid_h_ = encoder.grid_height();
  grid_w_ = encoder.grid_width();
  channels_ = encoder.channels;
  image_h_ = encoder.image_height;
  image_w_ = encoder.image_width;
  num_classes_ = num_classes;

  const int d = config_.dim;
  patch_proj_ = Linear(channels_ * config_.patch_size * config_.patch_size, d, true, rng);
  pos_embed_ = make_parameter(truncated_normal(static_cast<Eigen::Index>(grid_h_) * grid_w_, d, 0.02, rng));
  tap_proj_.reserve(config_.num_taps);
  for (int j = 0; j < config_.num_taps; ++j) tap_proj_.emplace_back(encoder.embed_dim, d, true, rng, 1e-3);
  layers_.reserve(config_.num_layers);
  for (int i = 0; i < config_.num_layers; ++i) layers_.emplace_back(d, config_.num_heads, config_.mlp_ratio, rng);
  att_conv1_ = Conv3x3(d, d / 2, rng);
  att_conv2_ = Conv3x3(d / 2, 1, rng);
  cls_conv_ = Conv3x3(1, config_.classifier_channels, rng);
  // zero-initialised head: uniform logits at start, so shrinking alpha
  // cannot lower the loss before the classifier has learned anything
  cls_fc_ = Linear(config_.classifier_channels, num_classes, true, rng, 0.0);
}

ag::Var LatticeAdapter::tap_project(const ag::Var& patch_tokens, int tap_index) const {
  return tap_proj_.at(static_cast<std::size_t>(tap_index)).forward(patch_tokens);
}

ag::Var LatticeAdapter::former(const ag::Var& image, const EncoderOutput& taps) const {
  const Eigen::Index num_patches = static_cast<Eigen::Index>(grid_h_) * grid_w_;
  if (config_.use_taps) {
    for (int j = 0; j < config_.num_taps; ++j) {
      const auto idx = static_cast<std::size_t>(config_.tap_blocks[static_cast<std::size_t>(j)]);
      if (idx >= taps.features.size()) throw ConfigError("adapter: encoder output has too few taps");
      if (taps.features[idx].rows() != num_patches + 1) {
        throw ConfigError("adapter: encoder token grid does not match adapter grid");
      }
    }
  }
  const ag::Var patches = ag::patchify(image, channels_, image_h_, image_w_, config_.patch_size);
  ag::Var x = ag::add(patch_proj_.forward(patches), pos_embed_);
  for (int i = 0; i < config_.num_layers; ++i) {
    if (config_.use_taps && i < config_.num_taps) {
      const auto& feature = taps.features[static_cast<std::size_t>(config_.tap_blocks[static_cast<std::size_t>(i)])];
      x = ag::add(x, tap_project(ag::slice_rows(feature, 1, num_patches), i));
    }
    x = layers_[static_cast<std::size_t>(i)].forward(x);
  }
  return x;
}

ag::Var LatticeAdapter::attention_grid(const ag::Var& h_l) const {
  if (h_l.rows() != static_cast<Eigen::Index>(grid_h_) * grid_w_) {
    throw InternalError("adapter: token count " + std::to_string(h_l.rows()) + " is not a full " +
                        std::to_string(grid_h_) + "x" + std::to_string(grid_w_) + " grid");
  }
  const ag::Var hidden = ag::relu(att_conv1_.forward(h_l, grid_h_, grid_w_));
  return ag::sigmoid(att_conv2_.forward(hidden, grid_h_, grid_w_));
}

ag::Var LatticeAdapter::classify_logits(const ag::Var& h_ala) const {
  if (h_ala.rows() != static_cast<Eigen::Index>(grid_h_) * grid_w_ || h_ala.cols() != 1) {
    throw InternalError("adapter: gated attention is not a single-channel grid");
  }
  const ag::Var features = ag::relu(cls_conv_.forward(h_ala, grid_h_, grid_w_));
  const ag::Var pooled = ag::mean_rows(ag::avg_pool2x2(features, grid_h_, grid_w_));
  return cls_fc_.forward(pooled);
}

AttentionMap LatticeAdapter::attention(const ag::Var& h_l, int image_height, int image_width) const {
  const ag::Var grid = attention_grid(h_l);
  std::vector<double> values(grid.value().data(), grid.value().data() + grid.value().size());
  return AttentionMap::from_grid(std::move(values), grid_h_, grid_w_, image_height, image_width);
}

Prediction LatticeAdapter::classify(const GatedAttention& gated) const {
  Matrix m(static_cast<Eigen::Index>(gated.h_ala.size()), 1);
  for (std::size_t i = 0; i < gated.h_ala.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = gated.h_ala[i];
  ag::NoGradGuard guard;
  return Prediction::from_logits(classify_logits(ag::constant(std::move(m))).value());
}

ParameterList LatticeAdapter::parameters() const {
  ParameterList out;
  patch_proj_.base_parameters("adapter.patch_proj", out);
  out.push_back({"adapter.pos_embed", pos_embed_});
  for (std::size_t j = 0; j < tap_proj_.size(); ++j) {
    tap_proj_[j].base_parameters("adapter.tap" + std::to_string(j), out);
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].base_parameters("adapter.layer" + std::to_string(i + 1), out);
  }
  att_conv1_.parameters("adapter.f1.conv1", out);
  att_conv2_.parameters("adapter.f1.conv2", out);
  cls_conv_.parameters("adapter.f2.conv", out);
  cls_fc_.base_parameters("adapter.f2.fc", out);
  return out;
}

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
#include "ala/encoder.hpp"

#include "ala/errors.hpp"

#include <string>

namespace ala {

LoraSpec LoraSpec::default_for(int num_blocks) {
  LoraSpec spec;
  const int count = (num_blocks + 3) / 4;
  for (int b = num_blocks - count + 1; b <= num_blocks; ++b) spec.target_blocks.insert(b);
  return spec;
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("encoder." + field + ": " + why);
  };
  if (num_blocks < 1) fail("num_blocks", "must be positive");
  if (embed_dim < 1) fail("embed_dim", "must be positive");
  if (num_heads < 1) fail("num_heads", "must be positive");
  if (embed_dim % num_heads != 0) fail("num_heads", "must divide embed_dim");
  if (mlp_ratio < 1) fail("mlp_ratio", "must be positive");
  if (patch_size < 1) fail("patch_size", "must be positive");
  if (channels < 1) fail("channels", "must be positive");
  if (image_height < 1 || image_height % patch_size != 0) {
    fail("image_height", "must be a positive multiple of patch_size");
  }
  if (image_width < 1 || image_width % patch_size != 0) {
    fail("image_width", "must be a positive multiple of patch_size");
  }
  if (lora) {
    if (lora->rank < 1) fail("lora.rank", "must be positive");
    if (lora->rank > embed_dim) fail("lora.rank", "must not exceed embed_dim");
    for (int b : lora->target_blocks) {
      if (b < 1 || b > num_blocks) fail("lora.target_blocks", "index " + std::to_string(b) + " outside 1..num_blocks");
    }
    if (lora->target_projections.empty()) fail("lora.target_projections", "must not be empty");
  }
}

Matrix lora_effective_weight(const LoraPair& pair) {
  const auto d1 = pair.base.rows();
  const auto d2 = pair.base.cols();
  const auto r = pair.a.rows();
  if (pair.a.cols() != d2 || pair.b.rows() != d1 || pair.b.cols() != r) {
    throw ConfigError("lora_effective_weight: expected B (d1 x r) and A (r x d2) for a d1 x d2 base");
  }
  Matrix w = pair.base;
  w.noalias() += pair.scaling * (pair.b * pair.a);
  return w;
}

Encoder::Encoder(EncoderConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const int dim = config_.embed_dim;
  const int patch_width = config_.channels * config_.patch_size * config_.patch_size;
  patch_proj_ = Linear(patch_width, dim, true, rng);
  class_token_ = make_parameter(truncated_normal(1, dim, 0.02, rng));
  pos_embed_ = make_parameter(truncated_normal(config_.num_tokens(), dim, 0.02, rng));
  blocks_.reserve(config_.num_blocks);
  for (int b = 0; b < config_.num_blocks; ++b) {
    blocks_.emplace_back(dim, config_.num_heads, config_.mlp_ratio, rng);
  }
  if (config_.lora) {
    const LoraSpec& spec = *config_.lora;
    for (int b : spec.target_blocks) {
      auto& layer = blocks_[static_cast<std::size_t>(b - 1)];
      if (spec.target_projections.count(Projection::Query)) layer.query().attach_lora(spec.rank, spec.scaling, rng);
      if (spec.target_projections.count(Projection::Value)) layer.value().attach_lora(spec.rank, spec.scaling, rng);
    }
  }
  apply_freeze();
}

void Encoder::check_image(const ag::Var& image) const {
  if (image.rows() != config_.channels ||
      image.cols() != static_cast<Eigen::Index>(config_.image_height) * config_.image_width) {
    throw ConfigError("encoder: image shape (" + std::to_string(image.rows()) + " x " +
                      std::to_string(image.cols()) + ") does not match configured " +
                      std::to_string(config_.channels) + " x " + std::to_string(config_.image_height) +
                      "x" + std::to_string(config_.image_width));
  }
}

ag::Var Encoder::patch_embed(const ag::Var& image) const {
  check_image(image);
  const ag::Var patches = ag::patchify(image, config_.channels, config_.image_height,
                                       config_.image_width, config_.patch_size);
  const ag::Var tokens = ag::concat_rows(class_token_, patch_proj_.forward(patches));
  return ag::add(tokens, pos_embed_);
}

ag::Var Encoder::patch_embed(const ImageTensor& image) const {
  return patch_embed(ag::constant(image.pixels));
}

EncoderOutput Encoder::encode_with_taps(const ag::Var& image) const {
  EncoderOutput out;
  out.features.reserve(blocks_.size() + 1);
  out.features.push_back(patch_embed(image));
  for (const auto& block : blocks_) out.features.push_back(block.forward(out.features.back()));
  return out;
}

EncoderOutput Encoder::encode_with_taps(const ImageTensor& image) const {
  return encode_with_taps(ag::constant(image.pixels));
}

ParameterList Encoder::base_parameters() const {
  ParameterList out;
  patch_proj_.base_parameters("encoder.patch_proj", out);
  out.push_back({"encoder.class_token", class_token_});
  out.push_back({"encoder.pos_embed", pos_embed_});
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].base_parameters("encoder.block" + std::to_string(b + 1), out);
  }
  return out;
}

ParameterList Encoder::trainable_parameters() const {
  ParameterList out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].lora_parameters("encoder.block" + std::to_string(b + 1), out);
  }
  return out;
}

ParameterList Encoder::all_parameters() const {
  ParameterList out = base_parameters();
  for (auto& p : trainable_parameters()) out.push_back(std::move(p));
  return out;
}

std::optional<LoraPair> Encoder::lora_pair(int block, Projection proj) const {
  if (block < 1 || block > config_.num_blocks) return std::nullopt;
  const auto& layer = blocks_[static_cast<std::size_t>(block - 1)];
  const Linear& lin = proj == Projection::Query ? layer.query() : layer.value();
  if (!lin.has_lora()) return std::nullopt;
  return LoraPair{lin.weight().value(), lin.lora()->a.value(), lin.lora()->b.value(), lin.lora()->scaling};
}

void Encoder::apply_freeze() {
  for (auto& p : base_parameters()) p.var.set_requires_grad(false);
  for (auto& p : trainable_parameters()) p.var.set_requires_grad(true);
}

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
//
// ViT-style image encoder that exposes every block output and carries
// optional LoRA factors over a frozen base.
#pragma once

#include "ala/nn.hpp"
#include "ala/types.hpp"

#include <optional>
#include <set>
#include <vector>

namespace ala {

enum class Projection { Query, Value };

struct LoraSpec {
  int rank = 4;
  std::set<int> target_blocks;  // 1-based block indices
  std::set<Projection> target_projections{Projection::Query, Projection::Value};
  double scaling = 1.0;

  /// Last ceil(k/4) blocks, query and value, rank 4.
  static LoraSpec default_for(int num_blocks);
};

struct EncoderConfig {
  int num_blocks = 4;
  int embed_dim = 32;
  int num_heads = 2;
  int mlp_ratio = 2;
  int patch_size = 4;
  int channels = 3;
  int image_height = 32;
  int image_width = 32;
  std::optional<LoraSpec> lora;

  int grid_height() const { return image_height / patch_size; }
  int grid_width() const { return image_width / patch_size; }
  int num_patches() const { return grid_height() * grid_width(); }
  int num_tokens() const { return num_patches() + 1; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Frozen base weight with its trainable low-rank factors.
struct LoraPair {
  Matrix base;  // d1 x d2
  Matrix a;     // r x d2
  Matrix b;     // d1 x r
  double scaling = 1.0;
};

/// base + scaling * b * a. Throws ConfigError on non-conforming shapes.
Matrix lora_effective_weight(const LoraPair& pair);

/// h_v^(0) .. h_v^(k); entry 0 is the embedded input to block 1.
struct EncoderOutput {
  std::vector<ag::Var> features;

  const ag::Var& final() const { return features.back(); }
};

class Encoder {
 public:
  Encoder(EncoderConfig config, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  /// Patch tokens with class token prepended and positional embeddings added.
  ag::Var patch_embed(const ag::Var& image) const;
  ag::Var patch_embed(const ImageTensor& image) const;

  EncoderOutput encode_with_taps(const ag::Var& image) const;
  EncoderOutput encode_with_taps(const ImageTensor& image) const;

  /// Every encoder parameter except LoRA factors.
  ParameterList base_parameters() const;
  /// Exactly the LoRA factors; empty without a LoRA spec.
  ParameterList trainable_parameters() const;
  ParameterList all_parameters() const;

  /// LoRA pair of a targeted projection in a 1-based block.
  std::optional<LoraPair> lora_pair(int block, Projection proj) const;

  /// Marks base weights frozen and LoRA factors trainable.
  void apply_freeze();

 private:
  void check_image(const ag::Var& image) const;

  EncoderConfig config_;
  Linear patch_proj_;
  ag::Var class_token_;  // 1 x dim
  ag::Var pos_embed_;    // tokens x dim
  std::vector<TransformerLayer> blocks_;
};

}  // namespace ala

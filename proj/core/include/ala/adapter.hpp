// SPDX-License-Identifier: Apache-2.0
//
// Attention lattice adapter: a side transformer over the raw image that
// receives projected encoder block outputs before its first layers, then
// emits a [0,1] attention grid (f1) and auxiliary class logits (f2).
#pragma once

#include "ala/encoder.hpp"
#include "ala/nn.hpp"
#include "ala/types.hpp"

#include <vector>

namespace ala {

struct AdapterConfig {
  int num_layers = 4;
  int num_heads = 2;
  int dim = 16;
  int mlp_ratio = 2;
  int patch_size = 4;
  int num_taps = 4;
  /// Encoder block indices in 0..k feeding adapter layers 1..num_taps.
  /// Empty means evenly spaced over 0..k.
  std::vector<int> tap_blocks;
  int classifier_channels = 8;
  /// When false, no encoder features are injected (tap-free ablation).
  bool use_taps = true;

  /// Fills tap_blocks with floor(j * (k + 1) / num_taps), j = 0..num_taps-1.
  static std::vector<int> even_taps(int num_taps, int num_blocks);
  /// Resolves default taps and checks compatibility with the encoder.
  void validate(const EncoderConfig& encoder);
};

/// (GateState, epoch) selection for the attention fed downstream:
/// odd epochs pass the attention grid, even epochs substitute all ones.
GatedAttention aea_gate(const AttentionMap& alpha, int epoch);

class LatticeAdapter {
 public:
  LatticeAdapter(AdapterConfig config, const EncoderConfig& encoder, int num_classes, Rng& rng);

  const AdapterConfig& config() const { return config_; }
  int grid_height() const { return grid_h_; }
  int grid_width() const { return grid_w_; }
  int num_classes() const { return num_classes_; }

  /// Former part: patch projection, then num_layers transformer layers with
  /// tap j added before layer j. Returns (num_patches x dim).
  ag::Var former(const ag::Var& image, const EncoderOutput& taps) const;
  /// Per-tap linear map embed_dim -> dim over patch tokens (no class token).
  ag::Var tap_project(const ag::Var& patch_tokens, int tap_index) const;
  /// f1 on the graph: (num_patches x 1) values in [0,1].
  ag::Var attention_grid(const ag::Var& h_l) const;
  /// f2 on the graph: (1 x C) logits from a (num_patches x 1) gated map.
  ag::Var classify_logits(const ag::Var& h_ala) const;

  /// Value-level f1 producing the token grid and its pixel upsampling.
  AttentionMap attention(const ag::Var& h_l, int image_height, int image_width) const;
  /// Value-level f2.
  Prediction classify(const GatedAttention& gated) const;

  ParameterList parameters() const;

  /// Mutable access for tests and checkpoint loading.
  Linear& tap_projection(int tap_index) { return tap_proj_.at(static_cast<std::size_t>(tap_index)); }

 private:
  AdapterConfig config_;
  int grid_h_ = 0;
  int grid_w_ = 0;
  int channels_ = 0;
  int image_h_ = 0;
  int image_w_ = 0;
  int num_classes_ = 0;

  Linear patch_proj_;
  ag::Var pos_embed_;
  std::vector<Linear> tap_proj_;
  std::vector<TransformerLayer> layers_;
  Conv3x3 att_conv1_, att_conv2_;
  Conv3x3 cls_conv_;
  Linear cls_fc_;
};

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ala/nn.hpp"
#include "ala/types.hpp"

namespace ala {

/// Classifier over the encoder's final tokens, modulated cell-wise by the
/// gated attention: conv3x3 -> ReLU -> 2x2 avg pool -> global avg pool -> FC.
/// The attention is divided by mean(h_ala)^norm_power before modulating, so
/// the branch rewards where attention sits more than how much there is. An
/// all-ones attention is left exactly unchanged; norm_power 0 disables it.
class PerceptionBranch {
 public:
  struct Output {
    ag::Var modulated;   // (cells x dim) input to f_PB
    ag::Var activation;  // (cells x dim) rectified conv output, pre-pooling
    ag::Var logits;      // (1 x C)
  };

  PerceptionBranch(int embed_dim, int grid_height, int grid_width, int num_classes, Rng& rng,
                   double norm_power = 0.5);

  double norm_power() const { return norm_power_; }

  /// h_k includes the class token, which is dropped here. h_ala is
  /// (cells x 1); pass an undefined Var to skip modulation entirely.
  Output forward(const ag::Var& h_k, const ag::Var& h_ala) const;
  /// f_PB alone on an already modulated (cells x dim) map.
  Output head(const ag::Var& modulated) const;

  /// Value-level forward with a gated attention.
  Prediction predict(const ag::Var& h_k, const GatedAttention& gated) const;
  Prediction predict_unmodulated(const ag::Var& h_k) const;

  ParameterList parameters() const;
  Conv3x3& conv() { return conv_; }
  Linear& fc() { return fc_; }

 private:
  int grid_h_;
  int grid_w_;
  double norm_power_;
  Conv3x3 conv_;
  Linear fc_;
};

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
//
// Parameterised building blocks shared by the encoder, the adapter and
// the perception branch.
#pragma once

#include "ala/autograd.hpp"
#include "ala/types.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ala {

struct NamedParameter {
  std::string name;
  ag::Var var;
};
using ParameterList = std::vector<NamedParameter>;

/// Truncated normal (cut at two standard deviations), mean zero. A zero
/// stddev returns an exact zero matrix without drawing.
Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

ag::Var make_parameter(Matrix init);

/// Low-rank update attached to a Linear: W_eff = W0 + scaling * B * A.
struct LoraFactors {
  ag::Var a;  // r x in
  ag::Var b;  // out x r
  double scaling = 1.0;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, bool bias, Rng& rng, double stddev = 0.02);

  ag::Var forward(const ag::Var& x) const;
  void attach_lora(int rank, double scaling, Rng& rng);
  bool has_lora() const { return lora_.has_value(); }
  const std::optional<LoraFactors>& lora() const { return lora_; }

  /// Base weight and bias only.
  void base_parameters(const std::string& prefix, ParameterList& out) const;
  /// LoRA factors only (empty when no LoRA is attached).
  void lora_parameters(const std::string& prefix, ParameterList& out) const;

  int in_features() const { return static_cast<int>(weight_.cols()); }
  int out_features() const { return static_cast<int>(weight_.rows()); }
  ag::Var& weight() { return weight_; }
  const ag::Var& weight() const { return weight_; }
  const ag::Var& bias() const { return bias_; }

 private:
  ag::Var weight_;  // out x in
  ag::Var bias_;    // 1 x out, undefined when bias is disabled
  std::optional<LoraFactors> lora_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int dim);
  ag::Var forward(const ag::Var& x) const;
  void parameters(const std::string& prefix, ParameterList& out) const;

 private:
  ag::Var gamma_;
  ag::Var beta_;
};

/// 3x3 same-padding convolution over a (h*w x c_in) token grid.
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(int in_channels, int out_channels, Rng& rng);
  ag::Var forward(const ag::Var& grid, int height, int width) const;
  void parameters(const std::string& prefix, ParameterList& out) const;
  Linear& kernel() { return kernel_; }

 private:
  Linear kernel_;  // out x 9*in
};

/// Pre-norm transformer layer: x + MHA(LN(x)), then x + MLP(LN(x)).
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(int dim, int heads, int mlp_ratio, Rng& rng);

  ag::Var forward(const ag::Var& x) const;
  void base_parameters(const std::string& prefix, ParameterList& out) const;
  void lora_parameters(const std::string& prefix, ParameterList& out) const;

  Linear& query() { return query_; }
  Linear& value() { return value_; }
  const Linear& query() const { return query_; }
  const Linear& value() const { return value_; }

 private:
  int heads_ = 1;
  LayerNorm ln1_, ln2_;
  Linear query_, key_, value_, proj_;
  Linear fc1_, fc2_;
};

}  // namespace ala

// SPDX-License-Identifier: Apache-2.0
#include "ala/nn.hpp"

#include "ala/errors.hpp"

#include <cmath>

namespace ala {

Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  if (stddev == 0.0) return Matrix::Zero(rows, cols);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    m.data()[i] = z * stddev;
  }
  return m;
}

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

ag::Var make_parameter(Matrix init) { return ag::leaf(std::move(init), true); }

Linear::Linear(int in, int out, bool bias, Rng& rng, double stddev)
    : weight_(make_parameter(truncated_normal(out, in, stddev, rng))) {
  if (bias) bias_ = make_parameter(Matrix::Zero(1, out));
}

ag::Var Linear::forward(const ag::Var& x) const {
  ag::Var y = bias_.defined() ? ag::linear(x, weight_, bias_) : ag::linear(x, weight_);
  if (lora_) {
    ag::Var low = ag::linear(ag::linear(x, lora_->a), lora_->b);
    y = ag::add(y, lora_->scaling == 1.0 ? low : ag::scale(low, lora_->scaling));
  }
  return y;
}

void Linear::attach_lora(int rank, double scaling, Rng& rng) {
  const int in = in_features();
  const int out = out_features();
  if (rank < 1 || rank > std::min(in, out)) {
    throw ConfigError("LoRA rank " + std::to_string(rank) + " must lie in [1, min(" +
                      std::to_string(out) + ", " + std::to_string(in) + ")]");
  }
  LoraFactors f;
  f.a = make_parameter(normal(rank, in, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  f.b = make_parameter(Matrix::Zero(out, rank));
  f.scaling = scaling;
  lora_ = std::move(f);
}

void Linear::base_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
}

void Linear::lora_parameters(const std::string& prefix, ParameterList& out) const {
  if (!lora_) return;
  out.push_back({prefix + ".lora_a", lora_->a});
  out.push_back({prefix + ".lora_b", lora_->b});
}

LayerNorm::LayerNorm(int dim)
    : gamma_(make_parameter(Matrix::Ones(1, dim))), beta_(make_parameter(Matrix::Zero(1, dim))) {}

ag::Var LayerNorm::forward(const ag::Var& x) const { return ag::layer_norm(x, gamma_, beta_); }

void LayerNorm::parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gamma", gamma_});
  out.push_back({prefix + ".beta", beta_});
}

Conv3x3::Conv3x3(int in_channels, int out_channels, Rng& rng)
    : kernel_(9 * in_channels, out_channels, true, rng,
              std::sqrt(2.0 / (9.0 * in_channels))) {}

ag::Var Conv3x3::forward(const ag::Var& grid, int height, int width) const {
  return kernel_.forward(ag::im2col3x3(grid, height, width));
}

void Conv3x3::parameters(const std::string& prefix, ParameterList& out) const {
  kernel_.base_parameters(prefix, out);
}

TransformerLayer::TransformerLayer(int dim, int heads, int mlp_ratio, Rng& rng)
    : heads_(heads),
      ln1_(dim),
      ln2_(dim),
      query_(dim, dim, true, rng),
      key_(dim, dim, true, rng),
      value_(dim, dim, true, rng),
      proj_(dim, dim, true, rng),
      fc1_(dim, dim * mlp_ratio, true, rng),
      fc2_(dim * mlp_ratio, dim, true, rng) {
  if (dim % heads != 0) throw ConfigError("embedding width must be divisible by head count");
}

ag::Var TransformerLayer::forward(const ag::Var& x) const {
  const ag::Var n1 = ln1_.forward(x);
  const ag::Var q = query_.forward(n1);
  const ag::Var k = key_.forward(n1);
  const ag::Var v = value_.forward(n1);
  const Eigen::Index head_dim = q.cols() / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ag::Var> heads;
  heads.reserve(heads_);
  for (int h = 0; h < heads_; ++h) {
    const ag::Var qh = ag::slice_cols(q, h * head_dim, head_dim);
    const ag::Var kh = ag::slice_cols(k, h * head_dim, head_dim);
    const ag::Var vh = ag::slice_cols(v, h * head_dim, head_dim);
    const ag::Var scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
    heads.push_back(ag::matmul(ag::softmax_rows(scores), vh));
  }
  const ag::Var attended = heads_ == 1 ? heads.front() : ag::concat_cols(heads);
  const ag::Var x1 = ag::add(x, proj_.forward(attended));
  const ag::Var mlp = fc2_.forward(ag::gelu(fc1_.forward(ln2_.forward(x1))));
  return ag::add(x1, mlp);
}

void TransformerLayer::base_parameters(const std::string& prefix, ParameterList& out) const {
  ln1_.parameters(prefix + ".ln1", out);
  query_.base_parameters(prefix + ".query", out);
  key_.base_parameters(prefix + ".key", out);
  value_.base_parameters(prefix + ".value", out);
  proj_.base_parameters(prefix + ".proj", out);
  ln2_.parameters(prefix + ".ln2", out);
  fc1_.base_parameters(prefix + ".fc1", out);
  fc2_.base_parameters(prefix + ".fc2", out);
}

void TransformerLayer::lora_parameters(const std::string& prefix, ParameterList& out) const {
  query_.lora_parameters(prefix + ".query", out);
  value_.lora_parameters(prefix + ".value", out);
}

}  // namespace ala

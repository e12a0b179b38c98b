// SPDX-License-Identifier: Apache-2.0
#include "ala/perception.hpp"

#include "ala/errors.hpp"

#include <cmath>
#include <string>

namespace ala {

PerceptionBranch::PerceptionBranch(int embed_dim, int grid_height, int grid_width, int num_classes, Rng& rng,
                                   double norm_power)
    : grid_h_(grid_height),
      grid_w_(grid_width),
      norm_power_(norm_power),
      conv_(embed_dim, embed_dim, rng),
      fc_(embed_dim, num_classes, true, rng, 0.0) {}

PerceptionBranch::Output PerceptionBranch::head(const ag::Var& modulated) const {
  Output out;
  out.modulated = modulated;
  out.activation = ag::relu(conv_.forward(modulated, grid_h_, grid_w_));
  out.logits = fc_.forward(ag::mean_rows(ag::avg_pool2x2(out.activation, grid_h_, grid_w_)));
  return out;
}

PerceptionBranch::Output PerceptionBranch::forward(const ag::Var& h_k, const ag::Var& h_ala) const {
  const Eigen::Index cells = static_cast<Eigen::Index>(grid_h_) * grid_w_;
  if (h_k.rows() != cells + 1) {
    throw InternalError("perception: " + std::to_string(h_k.rows() - 1) + " patch tokens for a " +
                        std::to_string(grid_h_) + "x" + std::to_string(grid_w_) + " grid");
  }
  ag::Var patches = ag::slice_rows(h_k, 1, cells);
  if (h_ala.defined()) {
    if (h_ala.rows() != cells || h_ala.cols() != 1) throw InternalError("perception: attention grid mismatch");
    const double mean = h_ala.value().mean();
    if (norm_power_ != 0.0 && !(mean > 0.0 && std::isfinite(mean))) {
      throw NumericError("perception: attention mean is not positive", "h_ala mean=" + std::to_string(mean));
    }
    patches = ag::mul_col(patches, norm_power_ == 0.0 ? h_ala : ag::normalize_mean(h_ala, norm_power_));
  }
  return head(patches);
}

namespace {
ag::Var to_column(const std::vector<double>& values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
  return ag::constant(std::move(m));
}
}  // namespace

Prediction PerceptionBranch::predict(const ag::Var& h_k, const GatedAttention& gated) const {
  ag::NoGradGuard guard;
  return Prediction::from_logits(forward(h_k, to_column(gated.h_ala)).logits.value());
}

Prediction PerceptionBranch::predict_unmodulated(const ag::Var& h_k) const {
  ag::NoGradGuard guard;
  return Prediction::from_logits(forward(h_k, ag::Var{}).logits.value());
}

ParameterList PerceptionBranch::parameters() const {
  ParameterList out;
  conv_.parameters("perception.conv", out);
  fc_.base_parameters("perception.fc", out);
  return out;
}

}  // namespace ala

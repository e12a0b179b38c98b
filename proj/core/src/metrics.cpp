// SPDX-License-Identifier: Apache-2.0
#include "ala/metrics.hpp"

#include "ala/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ala {

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw InputError("iou: mask shapes differ (" + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const bool x = a.cells[i] != 0;
    const bool y = b.cells[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask binarize(const AttentionMap& alpha, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("binarize: threshold must lie in (0, 1)");
  BinaryMask m(alpha.height, alpha.width);
  for (std::size_t i = 0; i < alpha.pixel_map.size(); ++i) m.cells[i] = alpha.pixel_map[i] >= threshold ? 1 : 0;
  return m;
}

std::vector<PixelIndex> pixel_order(const AttentionMap& alpha) {
  std::vector<std::size_t> idx(alpha.pixel_map.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return alpha.pixel_map[a] > alpha.pixel_map[b]; });
  std::vector<PixelIndex> order;
  order.reserve(idx.size());
  for (std::size_t i : idx) {
    order.push_back({static_cast<int>(i) / alpha.width, static_cast<int>(i) % alpha.width});
  }
  return order;
}

std::pair<ImageTensor, ImageTensor> masked_inputs(const ImageTensor& x, const std::vector<PixelIndex>& order, int n) {
  if (n < 0 || n > x.num_pixels() || static_cast<int>(order.size()) != x.num_pixels()) {
    throw InputError("masked_inputs: n must lie in 0..h*w and order must cover every pixel");
  }
  ImageTensor ins(x.channels(), x.height, x.width);
  ImageTensor del = x;
  for (int k = 0; k < n; ++k) {
    const int p = order[static_cast<std::size_t>(k)].row * x.width + order[static_cast<std::size_t>(k)].col;
    for (int c = 0; c < x.channels(); ++c) {
      ins.pixels(c, p) = x.pixels(c, p);
      del.pixels(c, p) = 0.0;
    }
  }
  return {std::move(ins), std::move(del)};
}

std::vector<int> curve_steps(int total_pixels, int num_steps) {
  if (num_steps <= 0 || num_steps >= total_pixels) num_steps = total_pixels;
  std::vector<int> steps;
  steps.reserve(static_cast<std::size_t>(num_steps) + 1);
  for (int s = 0; s <= num_steps; ++s) {
    const long long num = 2LL * s * total_pixels + num_steps;
    steps.push_back(static_cast<int>(num / (2LL * num_steps)));
  }
  return steps;
}

double trapezoid_auc(const std::vector<int>& steps, const std::vector<double>& values, int total_pixels) {
  double auc = 0.0;
  for (std::size_t i = 1; i < steps.size(); ++i) {
    const double dx = static_cast<double>(steps[i] - steps[i - 1]) / total_pixels;
    auc += dx * (values[i - 1] + values[i]) / 2.0;
  }
  return auc;
}

CurveResult insertion_deletion(const ClassScorer& model, const ImageTensor& x, const AttentionMap& alpha, int cls,
                               int num_steps) {
  if (alpha.height != x.height || alpha.width != x.width) throw InputError("insertion_deletion: map/image size mismatch");
  const int total = x.num_pixels();
  const std::vector<PixelIndex> order = pixel_order(alpha);
  CurveResult r;
  r.steps = curve_steps(total, num_steps);
  ImageTensor ins(x.channels(), x.height, x.width);
  ImageTensor del = x;
  int revealed = 0;
  for (int n : r.steps) {
    for (; revealed < n; ++revealed) {
      const auto& px = order[static_cast<std::size_t>(revealed)];
      const int p = px.row * x.width + px.col;
      for (int c = 0; c < x.channels(); ++c) {
        ins.pixels(c, p) = x.pixels(c, p);
        del.pixels(c, p) = 0.0;
      }
    }
    r.insertion_values.push_back(model.class_probability(ins, cls));
    r.deletion_values.push_back(model.class_probability(del, cls));
  }
  r.insertion_auc = trapezoid_auc(r.steps, r.insertion_values, total);
  r.deletion_auc = trapezoid_auc(r.steps, r.deletion_values, total);
  r.id_score = r.insertion_auc - r.deletion_auc;
  return r;
}

EvalReport evaluate(const ClassScorer& model, const Dataset& dataset, const Explainer& explainer,
                    const EvalOptions& options, std::string name) {
  if (dataset.empty()) throw InputError("evaluate: dataset is empty");
  EvalReport report;
  report.explainer = std::move(name);
  double iou_sum = 0.0;
  std::size_t iou_count = 0;
  for (const auto& s : dataset) {
    const AttentionMap alpha = explainer(s);
    SampleMetrics m;
    m.sample_id = s.sample_id;
    m.label = s.label;
    if (s.mask) {
      m.iou = iou(binarize(alpha, options.threshold), *s.mask);
      iou_sum += *m.iou;
      ++iou_count;
    }
    const CurveResult curve = insertion_deletion(model, s.image, alpha, s.label, options.num_steps);
    m.insertion = curve.insertion_auc;
    m.deletion = curve.deletion_auc;
    m.id_score = curve.id_score;
    m.endpoint_gap = curve.insertion_values.back() - curve.deletion_values.front();
    report.insertion += m.insertion;
    report.deletion += m.deletion;
    report.id_score += m.id_score;
    report.per_sample.push_back(std::move(m));
  }
  const double n = static_cast<double>(dataset.size());
  report.insertion /= n;
  report.deletion /= n;
  report.id_score /= n;
  if (iou_count > 0) report.mean_iou = iou_sum / static_cast<double>(iou_count);
  return report;
}

AttentionMap gradcam_from_activation(const Matrix& activation, const Matrix& gradient, int grid_h, int grid_w,
                                     int height, int width) {
  if (activation.rows() != static_cast<Eigen::Index>(grid_h) * grid_w || activation.rows() != gradient.rows() ||
      activation.cols() != gradient.cols()) {
    throw InternalError("grad_cam: activation/gradient shape mismatch");
  }
  const Eigen::RowVectorXd weights = gradient.colwise().mean();
  std::vector<double> cam(static_cast<std::size_t>(activation.rows()));
  double peak = 0.0;
  for (Eigen::Index i = 0; i < activation.rows(); ++i) {
    const double v = std::max(0.0, activation.row(i).dot(weights));
    cam[static_cast<std::size_t>(i)] = v;
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (double& v : cam) v /= peak;
  }
  return AttentionMap::from_grid(std::move(cam), grid_h, grid_w, height, width);
}

AttentionMap grad_cam(const AlaModel& model, const ImageTensor& x, int cls) {
  const auto [activation, gradient] = model.activation_and_gradient(x, cls);
  const auto& enc = model.config().encoder;
  return gradcam_from_activation(activation, gradient, enc.grid_height(), enc.grid_width(), x.height, x.width);
}

AttentionMap integrated_gradients(const DifferentiableScorer& model, const ImageTensor& x, int cls, int steps) {
  if (steps < 1) throw ConfigError("integrated_gradients: steps must be >= 1");
  Matrix total = Matrix::Zero(x.pixels.rows(), x.pixels.cols());
  for (int k = 1; k <= steps; ++k) {
    ImageTensor point = x;
    point.pixels *= static_cast<double>(k) / steps;
    total += model.input_gradient(point, cls).pixels;
  }
  total /= static_cast<double>(steps);
  const Matrix attribution = x.pixels.cwiseProduct(total);
  std::vector<double> map(static_cast<std::size_t>(x.num_pixels()), 0.0);
  double peak = 0.0;
  for (int p = 0; p < x.num_pixels(); ++p) {
    double v = 0.0;
    for (int c = 0; c < x.channels(); ++c) v += std::abs(attribution(c, p));
    map[static_cast<std::size_t>(p)] = v;
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (double& v : map) v /= peak;
  }
  return AttentionMap::from_pixels(std::move(map), x.height, x.width);
}

AttentionMap uniform_map(int height, int width, double value) {
  return AttentionMap::from_pixels(std::vector<double>(static_cast<std::size_t>(height) * width, value), height, width);
}

AttentionMap random_map(int height, int width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(height) * width);
  for (double& x : v) x = u(rng);
  return AttentionMap::from_pixels(std::move(v), height, width);
}

}  // namespace ala

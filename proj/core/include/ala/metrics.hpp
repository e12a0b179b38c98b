// SPDX-License-Identifier: Apache-2.0
//
// Saliency evaluation: IoU against ground-truth masks, insertion/deletion
// curves with trapezoidal AUC, and the Grad-CAM / Integrated Gradients
// comparison baselines.
#pragma once

#include "ala/data.hpp"
#include "ala/model.hpp"
#include "ala/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ala {

/// |a & b| / |a | b|; 1 when both masks are empty. Throws InputError on a
/// shape mismatch.
double iou(const BinaryMask& a, const BinaryMask& b);

/// pixel_map >= threshold. threshold must lie in (0, 1).
BinaryMask binarize(const AttentionMap& alpha, double threshold = 0.5);

struct PixelIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

/// Pixels by descending pixel_map value; ties resolved in row-major order.
std::vector<PixelIndex> pixel_order(const AttentionMap& alpha);

/// (i_n, d_n): i_n keeps the first n ordered pixels (all channels) and
/// zeroes the rest; d_n is the complement.
std::pair<ImageTensor, ImageTensor> masked_inputs(const ImageTensor& x, const std::vector<PixelIndex>& order, int n);

struct CurveResult {
  std::vector<int> steps;
  std::vector<double> insertion_values;
  std::vector<double> deletion_values;
  double insertion_auc = 0.0;
  double deletion_auc = 0.0;
  double id_score = 0.0;
};

/// num_steps + 1 evenly spaced pixel counts from 0 to total, endpoints included.
std::vector<int> curve_steps(int total_pixels, int num_steps);
/// Trapezoidal rule over steps normalised by total_pixels.
double trapezoid_auc(const std::vector<int>& steps, const std::vector<double>& values, int total_pixels);

/// Probability of class `cls` as pixels are inserted into a zero image
/// (insertion) or removed from x (deletion) in pixel_order(alpha).
/// num_steps <= 0 selects the exhaustive per-pixel schedule.
CurveResult insertion_deletion(const ClassScorer& model, const ImageTensor& x, const AttentionMap& alpha, int cls,
                               int num_steps);

using Explainer = std::function<AttentionMap(const ImageSample&)>;

struct EvalOptions {
  int num_steps = 100;  // <= 0: exhaustive
  double threshold = 0.5;
};

struct SampleMetrics {
  std::string sample_id;
  int label = 0;
  std::optional<double> iou;
  double insertion = 0.0;
  double deletion = 0.0;
  double id_score = 0.0;
  /// y(ins, N) - y(del, 0); zero whenever the scorer is deterministic.
  double endpoint_gap = 0.0;
};

struct EvalReport {
  std::string explainer;
  std::optional<double> mean_iou;  // absent when no sample carries a mask
  double insertion = 0.0;
  double deletion = 0.0;
  double id_score = 0.0;
  std::vector<SampleMetrics> per_sample;
};

/// Per-sample metrics and their arithmetic means. Samples without masks
/// are skipped for IoU only. Throws InputError on an empty dataset.
EvalReport evaluate(const ClassScorer& model, const Dataset& dataset, const Explainer& explainer,
                    const EvalOptions& options, std::string name = "explainer");

/// Grad-CAM from a (cells x K) activation and its gradient: channel weights
/// are spatial gradient means, the map is ReLU(sum_k w_k A_k) divided by its
/// maximum (all zero when nothing is positive), then upsampled.
AttentionMap gradcam_from_activation(const Matrix& activation, const Matrix& gradient, int grid_h, int grid_w,
                                     int height, int width);
/// Grad-CAM on the rectified pre-pooling activation of the perception branch.
AttentionMap grad_cam(const AlaModel& model, const ImageTensor& x, int cls);

/// Right Riemann sum of the path integral from the zero image; channel-summed
/// absolute attribution normalised by its maximum.
AttentionMap integrated_gradients(const DifferentiableScorer& model, const ImageTensor& x, int cls, int steps);

AttentionMap uniform_map(int height, int width, double value = 0.5);
/// i.i.d. U(0,1) per pixel.
AttentionMap random_map(int height, int width, Rng& rng);

}  // namespace ala

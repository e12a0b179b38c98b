// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ala/autograd.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ala {

using Rng = std::mt19937_64;

/// Image stored as (channels x height*width), row-major pixels, values in [0,1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  Matrix pixels;

  ImageTensor() = default;
  ImageTensor(int channels, int h, int w) : height(h), width(w), pixels(Matrix::Zero(channels, h * w)) {}

  int channels() const { return static_cast<int>(pixels.rows()); }
  int num_pixels() const { return height * width; }
  double& at(int c, int y, int x) { return pixels(c, y * width + x); }
  double at(int c, int y, int x) const { return pixels(c, y * width + x); }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels() == o.channels();
  }
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> cells;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), cells(static_cast<std::size_t>(h) * w, 0) {}

  bool at(int y, int x) const { return cells[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { cells[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
};

/// Importance map on the token grid plus its pixel-resolution upsampling.
struct AttentionMap {
  int grid_height = 0;
  int grid_width = 0;
  std::vector<double> token_grid;
  int height = 0;
  int width = 0;
  std::vector<double> pixel_map;

  double pixel(int y, int x) const { return pixel_map[static_cast<std::size_t>(y) * width + x]; }

  /// Builds the map by bilinearly upsampling grid values to (height x width).
  static AttentionMap from_grid(std::vector<double> grid, int grid_h, int grid_w, int height, int width);
  /// Pixel-resolution map with an identical token grid.
  static AttentionMap from_pixels(std::vector<double> pixels, int height, int width);
};

/// Half-pixel-centred bilinear resampling with edge clamping.
std::vector<double> bilinear_resize(const std::vector<double>& src, int src_h, int src_w, int dst_h, int dst_w);

enum class GateState { PassAlpha, AllOnes };

const char* to_string(GateState g);

struct GatedAttention {
  int grid_height = 0;
  int grid_width = 0;
  std::vector<double> h_ala;
  GateState gate_state = GateState::PassAlpha;
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;

  static Prediction from_logits(const Matrix& logits_row);
  int argmax() const;
};

}  // namespace ala

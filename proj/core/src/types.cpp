// SPDX-License-Identifier: Apache-2.0
#include "ala/types.hpp"

#include "ala/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ala {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

std::vector<double> bilinear_resize(const std::vector<double>& src, int src_h, int src_w, int dst_h, int dst_w) {
  if (static_cast<int>(src.size()) != src_h * src_w) throw InternalError("bilinear_resize: size mismatch");
  std::vector<double> dst(static_cast<std::size_t>(dst_h) * dst_w);
  const double sy = static_cast<double>(src_h) / dst_h;
  const double sx = static_cast<double>(src_w) / dst_w;
  for (int y = 0; y < dst_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * src[y0 * src_w + x0] + wx * src[y0 * src_w + x1];
      const double bottom = (1.0 - wx) * src[y1 * src_w + x0] + wx * src[y1 * src_w + x1];
      dst[static_cast<std::size_t>(y) * dst_w + x] = (1.0 - wy) * top + wy * bottom;
    }
  }
  return dst;
}

AttentionMap AttentionMap::from_grid(std::vector<double> grid, int grid_h, int grid_w, int height, int width) {
  AttentionMap m;
  m.grid_height = grid_h;
  m.grid_width = grid_w;
  m.height = height;
  m.width = width;
  m.pixel_map = bilinear_resize(grid, grid_h, grid_w, height, width);
  m.token_grid = std::move(grid);
  return m;
}

AttentionMap AttentionMap::from_pixels(std::vector<double> pixels, int height, int width) {
  if (static_cast<int>(pixels.size()) != height * width) throw InternalError("AttentionMap: size mismatch");
  AttentionMap m;
  m.grid_height = m.height = height;
  m.grid_width = m.width = width;
  m.token_grid = pixels;
  m.pixel_map = std::move(pixels);
  return m;
}

const char* to_string(GateState g) { return g == GateState::PassAlpha ? "PASS_ALPHA" : "ALL_ONES"; }

Prediction Prediction::from_logits(const Matrix& logits_row) {
  Prediction p;
  p.logits.assign(logits_row.data(), logits_row.data() + logits_row.size());
  const double m = *std::max_element(p.logits.begin(), p.logits.end());
  p.probs.resize(p.logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.logits.size(); ++i) {
    p.probs[i] = std::exp(p.logits[i] - m);
    total += p.probs[i];
  }
  for (double& v : p.probs) v /= total;
  return p;
}

int Prediction::argmax() const {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace ala

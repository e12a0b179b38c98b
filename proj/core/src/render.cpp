// SPDX-License-Identifier: Apache-2.0
#include "ala/render.hpp"

#include <algorithm>
#include <cmath>

namespace ala {

namespace {
// viridis sampled at 0, 1/8, ..., 1
constexpr double kStops[9][3] = {
    {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530}, {0.207, 0.372, 0.553},
    {0.164, 0.471, 0.558}, {0.128, 0.567, 0.551}, {0.135, 0.659, 0.518}, {0.267, 0.749, 0.441},
    {0.478, 0.821, 0.318}};
constexpr double kLast[3] = {0.993, 0.906, 0.144};

std::array<double, 3> colormap_unit(double v) {
  v = std::clamp(v, 0.0, 1.0);
  // nine stops cover [0, 8/9]; the final segment runs to yellow
  const double pos = v * 9.0;
  const int i = std::min(8, static_cast<int>(std::floor(pos)));
  const double t = pos - i;
  const double* a = kStops[i];
  const double* b = i + 1 < 9 ? kStops[i + 1] : kLast;
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }
}  // namespace

std::array<std::uint8_t, 3> colormap(double v) {
  const auto c = colormap_unit(v);
  return {to_byte(c[0]), to_byte(c[1]), to_byte(c[2])};
}

Raster render_heatmap(const AttentionMap& alpha) {
  Raster r;
  r.width = alpha.width;
  r.height = alpha.height;
  r.channels = 3;
  r.bytes.resize(static_cast<std::size_t>(r.width) * r.height * 3);
  for (std::size_t i = 0; i < alpha.pixel_map.size(); ++i) {
    const auto c = colormap(alpha.pixel_map[i]);
    std::copy(c.begin(), c.end(), r.bytes.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return r;
}

Raster render_overlay(const ImageTensor& image, const AttentionMap& alpha, double blend) {
  Raster r;
  r.width = image.width;
  r.height = image.height;
  r.channels = 3;
  r.bytes.resize(static_cast<std::size_t>(r.width) * r.height * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      // nearest sample of the map when the sizes differ
      const int my = std::min(alpha.height - 1, y * alpha.height / image.height);
      const int mx = std::min(alpha.width - 1, x * alpha.width / image.width);
      const auto c = colormap_unit(alpha.pixel(my, mx));
      for (int ch = 0; ch < 3; ++ch) {
        const double base = image.at(std::min(ch, image.channels() - 1), y, x);
        r.bytes[(static_cast<std::size_t>(y) * r.width + x) * 3 + ch] = to_byte(blend * c[ch] + (1.0 - blend) * base);
      }
    }
  }
  return r;
}

}  // namespace ala

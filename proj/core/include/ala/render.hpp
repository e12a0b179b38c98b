// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ala/image_io.hpp"
#include "ala/types.hpp"

#include <array>
#include <cstdint>

namespace ala {

/// Viridis-style perceptually uniform colormap, v clamped to [0,1].
std::array<std::uint8_t, 3> colormap(double v);

Raster render_heatmap(const AttentionMap& alpha);
/// colormap(alpha) blended over the image with weight `blend` (default 0.6).
Raster render_overlay(const ImageTensor& image, const AttentionMap& alpha, double blend = 0.6);

}  // namespace ala

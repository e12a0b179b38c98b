// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ala/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ala {

/// 8-bit raster, interleaved channels.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> bytes;
};

/// PNG via libpng; binary PPM (P6) and PGM (P5) are also accepted.
Raster read_raster(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);

/// Raster -> [0,1] image with the requested channel count (grey is
/// replicated, colour averaged to grey).
ImageTensor raster_to_image(const Raster& raster, int channels);
Raster image_to_raster(const ImageTensor& image);
/// Non-zero pixels (first channel) become foreground.
BinaryMask raster_to_mask(const Raster& raster);
Raster mask_to_raster(const BinaryMask& mask);

/// NumPy .npy (format 1.0, little-endian float32, C order).
void write_npy(const std::filesystem::path& path, const std::vector<float>& values, std::vector<std::size_t> shape);
std::vector<float> read_npy(const std::filesystem::path& path, std::vector<std::size_t>* shape = nullptr);

}  // namespace ala

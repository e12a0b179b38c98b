// SPDX-License-Identifier: Apache-2.0
//
// Synthetic shapes dataset, external manifest ingestion and seeded splits.
#pragma once

#include "ala/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ala {

struct ImageSample {
  ImageTensor image;
  int label = 0;
  std::optional<BinaryMask> mask;
  std::string sample_id;
};

using Dataset = std::vector<ImageSample>;

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
  std::uint64_t seed = 0;
};

/// One foreground shape per image on a textured background. The class
/// selects the shape family and the hue band; the mask is the exact
/// foreground.
Dataset synth_shapes(int num_samples, int num_classes, int image_size, std::uint64_t seed);

/// Shape family drawn for a class id (cycles after six families).
const char* shape_family_name(int label);

struct ManifestEntry {
  std::string image_path;
  int label = 0;
  std::optional<std::string> mask_path;
};

/// Tab-delimited, UTF-8, header row "image<TAB>label<TAB>mask"; the mask
/// column may be empty.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries);

struct LoadReport {
  std::size_t requested = 0;
  std::vector<std::string> failures;  // "path: reason"
};

/// Decodes images (PNG/PPM/PGM), resizes to (image_size x image_size) with
/// bilinear filtering, masks with nearest-neighbour, pixels to [0,1].
/// Throws InputError when more than 10% of entries fail.
Dataset load_external(const std::filesystem::path& root, const std::vector<ManifestEntry>& manifest,
                      int image_size, int channels, LoadReport* report = nullptr);

/// Nearest-neighbour resize of a mask; source index floor((i + 0.5) * src / dst).
BinaryMask resize_mask_nearest(const BinaryMask& mask, int height, int width);
ImageTensor resize_image_bilinear(const ImageTensor& image, int height, int width);

/// Seeded shuffle, then contiguous train/val/test partition sized by
/// rounding fractions (test takes the remainder).
DatasetSplit split(const Dataset& dataset, double train_fraction, double val_fraction, double test_fraction,
                   std::uint64_t seed);
/// The permutation split() applies for a dataset of size n.
std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed);

/// Exact float64 dataset cache in the tensor archive format.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset, int num_classes);
Dataset load_dataset(const std::filesystem::path& path, int* num_classes = nullptr);

/// Writes PNG images, PNG masks and a manifest.tsv under dir.
void export_dataset_png(const std::filesystem::path& dir, const Dataset& dataset);

/// FNV-1a over images, labels and masks.
std::uint64_t dataset_checksum(const Dataset& dataset);

}  // namespace ala

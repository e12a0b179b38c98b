// SPDX-License-Identifier: Apache-2.0
//
// Tensor archive: one file holding named little-endian float arrays plus a
// structured-text (JSON) metadata block. Layout is documented in
// docs/checkpoint_format.md.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ala {

enum class DType : std::uint8_t { Float32 = 1, Float64 = 2 };

struct TensorEntry {
  std::string name;
  std::vector<std::uint64_t> shape;
  DType dtype = DType::Float64;
  std::vector<double> values;  // decoded values, row-major
};

struct TensorArchive {
  std::string metadata;
  std::vector<TensorEntry> tensors;

  const TensorEntry* find(const std::string& name) const;
};

inline constexpr char kArchiveMagic[8] = {'A', 'L', 'A', 'T', 'N', 'S', 'R', '1'};
inline constexpr std::uint32_t kArchiveVersion = 1;

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
/// Throws InputError on a missing file, bad magic or truncated payload.
TensorArchive read_archive(const std::filesystem::path& path);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);
std::string string_hash(const std::string& text);

}  // namespace ala

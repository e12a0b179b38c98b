// SPDX-License-Identifier: Apache-2.0
#include "ala/archive.hpp"

#include "ala/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ala {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError(path.string() + ": truncated archive");
  return v;
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

const TensorEntry* TensorArchive::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write(kArchiveMagic, sizeof(kArchiveMagic));
  put<std::uint32_t>(os, kArchiveVersion);
  put<std::uint64_t>(os, archive.metadata.size());
  os.write(archive.metadata.data(), static_cast<std::streamsize>(archive.metadata.size()));
  put<std::uint64_t>(os, archive.tensors.size());
  for (const auto& t : archive.tensors) {
    std::uint64_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.values.size()) throw InternalError("archive: tensor " + t.name + " shape/value mismatch");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(os, d);
    if (t.dtype == DType::Float64) {
      os.write(reinterpret_cast<const char*>(t.values.data()),
               static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    } else {
      std::vector<float> narrow(t.values.begin(), t.values.end());
      os.write(reinterpret_cast<const char*>(narrow.data()),
               static_cast<std::streamsize>(narrow.size() * sizeof(float)));
    }
  }
  if (!os) throw InputError("write failed: " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0) {
    throw InputError(path.string() + ": not a tensor archive");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kArchiveVersion) throw InputError(path.string() + ": unsupported archive version");
  TensorArchive archive;
  const auto meta_len = get<std::uint64_t>(is, path);
  archive.metadata.resize(meta_len);
  is.read(archive.metadata.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw InputError(path.string() + ": truncated metadata");
  const auto count = get<std::uint64_t>(is, path);
  archive.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    TensorEntry t;
    const auto name_len = get<std::uint32_t>(is, path);
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    const auto dtype = get<std::uint8_t>(is, path);
    if (dtype != 1 && dtype != 2) throw InputError(path.string() + ": unknown dtype for " + t.name);
    t.dtype = static_cast<DType>(dtype);
    const auto ndim = get<std::uint8_t>(is, path);
    std::uint64_t n = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      t.shape.push_back(get<std::uint64_t>(is, path));
      n *= t.shape.back();
    }
    t.values.resize(n);
    if (t.dtype == DType::Float64) {
      is.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
      std::vector<float> narrow(n);
      is.read(reinterpret_cast<char*>(narrow.data()), static_cast<std::streamsize>(n * sizeof(float)));
      t.values.assign(narrow.begin(), narrow.end());
    }
    if (!is) throw InputError(path.string() + ": truncated tensor " + t.name);
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::uint64_t h = kFnvOffset;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= kFnvPrime;
    }
  }
  return hex64(h);
}

std::string string_hash(const std::string& text) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : text) {
    h ^= c;
    h *= kFnvPrime;
  }
  return hex64(h);
}

}  // namespace ala

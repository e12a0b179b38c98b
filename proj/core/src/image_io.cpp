// SPDX-License-Identifier: Apache-2.0
#include "ala/image_io.hpp"

#include "ala/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ala {

namespace {

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P6") throw InputError(path.string() + ": unsupported PNM variant");
  auto next_int = [&]() {
    int v = 0;
    while (is >> std::ws && is.peek() == '#') {
      std::string skip;
      std::getline(is, skip);
    }
    if (!(is >> v)) throw InputError(path.string() + ": bad PNM header");
    return v;
  };
  Raster r;
  r.width = next_int();
  r.height = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw InputError(path.string() + ": only 8-bit PNM supported");
  is.get();
  r.channels = magic == "P6" ? 3 : 1;
  r.bytes.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  is.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  if (!is) throw InputError(path.string() + ": truncated PNM data");
  return r;
}

}  // namespace

Raster read_raster(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ppm" || ext == ".pgm") return read_pnm(path);

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw InputError(path.string() + ": " + image.message);
  }
  const bool grey = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = grey ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r;
  r.width = static_cast<int>(image.width);
  r.height = static_cast<int>(image.height);
  r.channels = grey ? 1 : 3;
  r.bytes.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw InputError(path.string() + ": " + msg);
  }
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = raster.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, raster.bytes.data(), 0, nullptr)) {
    throw InputError(path.string() + ": " + image.message);
  }
}

ImageTensor raster_to_image(const Raster& raster, int channels) {
  ImageTensor img(channels, raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * raster.width + x) * raster.channels;
      for (int c = 0; c < channels; ++c) {
        double v;
        if (raster.channels == channels) {
          v = raster.bytes[base + c];
        } else if (raster.channels == 1) {
          v = raster.bytes[base];
        } else {
          v = (raster.bytes[base] + raster.bytes[base + 1] + raster.bytes[base + 2]) / 3.0;
        }
        img.at(c, y, x) = v / 255.0;
      }
    }
  }
  return img;
}

Raster image_to_raster(const ImageTensor& image) {
  Raster r;
  r.width = image.width;
  r.height = image.height;
  r.channels = image.channels() >= 3 ? 3 : 1;
  r.bytes.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < r.channels; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        r.bytes[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return r;
}

BinaryMask raster_to_mask(const Raster& raster) {
  BinaryMask m(raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      m.set(y, x, raster.bytes[(static_cast<std::size_t>(y) * raster.width + x) * raster.channels] != 0);
    }
  }
  return m;
}

Raster mask_to_raster(const BinaryMask& mask) {
  Raster r;
  r.width = mask.width;
  r.height = mask.height;
  r.channels = 1;
  r.bytes.resize(mask.cells.size());
  for (std::size_t i = 0; i < mask.cells.size(); ++i) r.bytes[i] = mask.cells[i] ? 255 : 0;
  return r;
}

void write_npy(const std::filesystem::path& path, const std::vector<float>& values, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != values.size()) throw InternalError("write_npy: shape does not match value count");
  std::ostringstream dict;
  dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict << shape[i] << (shape.size() == 1 ? "," : (i + 1 < shape.size() ? ", " : ""));
  }
  dict << "), }";
  std::string header = dict.str();
  // magic(6) + version(2) + len(2) + header + '\n' padded to 64 bytes
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  os.write(reinterpret_cast<const char*>(&len), 2);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

std::vector<float> read_npy(const std::filesystem::path& path, std::vector<std::size_t>* shape) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "\x93NUMPY\x01\x00", 8) != 0) throw InputError(path.string() + ": not an npy v1 file");
  std::uint16_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 2);
  std::string header(len, '\0');
  is.read(header.data(), len);
  if (header.find("'<f4'") == std::string::npos) throw InputError(path.string() + ": expected little-endian float32");
  const auto open = header.find('(');
  const auto close = header.find(')');
  std::vector<std::size_t> dims;
  std::stringstream ss(header.substr(open + 1, close - open - 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(' ') == std::string::npos) continue;
    dims.push_back(static_cast<std::size_t>(std::stoull(tok)));
  }
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  std::vector<float> values(n);
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw InputError(path.string() + ": truncated npy payload");
  if (shape) *shape = dims;
  return values;
}

}  // namespace ala

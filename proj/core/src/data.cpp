// SPDX-License-Identifier: Apache-2.0
#include "ala/data.hpp"

#include "ala/archive.hpp"
#include "ala/errors.hpp"
#include "ala/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace ala {

namespace {

constexpr double kPi = 3.14159265358979323846;

enum class Family { Disk, Square, Triangle, Cross, Ring, Diamond };
constexpr int kNumFamilies = 6;

bool inside(Family f, double dx, double dy, double r) {
  switch (f) {
    case Family::Disk:
      return dx * dx + dy * dy <= r * r;
    case Family::Square:
      return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
    case Family::Triangle: {
      // apex at the top, base 0.8r below the centre
      if (dy < -r || dy > 0.8 * r) return false;
      const double half = (dy + r) / (1.8 * r) * r;
      return std::abs(dx) <= half;
    }
    case Family::Cross: {
      const double arm = r / 3.0;
      return (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
    }
    case Family::Ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
    case Family::Diamond:
      return std::abs(dx) + std::abs(dy) <= r;
  }
  return false;
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

ImageSample draw_shape(int label, int num_classes, int size, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  ImageSample s;
  s.label = label;
  s.image = ImageTensor(3, size, size);

  // background: grey base, oriented stripes, per-pixel noise, faint tint
  const double base = 0.15 + 0.2 * u01(rng);
  const double theta = kPi * u01(rng);
  const double freq = 2.0 * kPi * (1.5 + 3.0 * u01(rng)) / size;
  const double phase = 2.0 * kPi * u01(rng);
  double tint[3];
  for (double& t : tint) t = 0.04 * (u01(rng) - 0.5);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double stripe = 0.06 * std::sin(freq * (x * std::cos(theta) + y * std::sin(theta)) + phase);
      const double n = 0.04 * noise(rng);
      for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = std::clamp(base + stripe + n + tint[c], 0.0, 1.0);
    }
  }

  // clutter: small blobs coloured like other classes, later covered by the shape
  const double band = 1.0 / num_classes;
  const int num_blobs = 3;
  for (int b = 0; b < num_blobs; ++b) {
    const int other = (label + 1 + static_cast<int>(u01(rng) * (num_classes - 1))) % num_classes;
    double blob_rgb[3];
    hsv_to_rgb(other * band + 0.25 * band * (u01(rng) - 0.5), 0.75, 1.0, blob_rgb);
    const double br = 1.5 + 1.5 * u01(rng);
    const double bx = size * u01(rng);
    const double by = size * u01(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - bx;
        const double dy = y + 0.5 - by;
        if (dx * dx + dy * dy > br * br) continue;
        for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = 0.45 + 0.55 * blob_rgb[c];
      }
    }
  }

  const Family family = static_cast<Family>(label % kNumFamilies);
  const double hue = label * band + 0.25 * band * (u01(rng) - 0.5);
  const double sat = 0.6 + 0.3 * u01(rng);
  double rgb[3];
  hsv_to_rgb(hue, sat, 1.0, rgb);

  const double r = (0.18 + 0.12 * u01(rng)) * size;
  const double margin = r + 1.0;
  const double cx = margin + (size - 2.0 * margin) * u01(rng);
  const double cy = margin + (size - 2.0 * margin) * u01(rng);

  BinaryMask mask(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!inside(family, x + 0.5 - cx, y + 0.5 - cy, r)) continue;
      mask.set(y, x, true);
      for (int c = 0; c < 3; ++c) {
        s.image.at(c, y, x) = std::clamp(0.45 + 0.55 * rgb[c] + 0.03 * noise(rng), 0.0, 1.0);
      }
    }
  }
  s.mask = std::move(mask);
  return s;
}

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

const char* shape_family_name(int label) {
  static constexpr const char* kNames[kNumFamilies] = {"disk", "square", "triangle", "cross", "ring", "diamond"};
  return kNames[label % kNumFamilies];
}

Dataset synth_shapes(int num_samples, int num_classes, int image_size, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("synth_shapes: num_classes must be >= 2");
  if (image_size < 16) throw ConfigError("synth_shapes: image_size must be >= 16");
  if (num_samples < 0) throw ConfigError("synth_shapes: num_samples must be >= 0");
  Rng rng(seed);
  std::uniform_int_distribution<int> pick_label(0, num_classes - 1);
  Dataset out;
  out.reserve(static_cast<std::size_t>(num_samples));
  for (int i = 0; i < num_samples; ++i) {
    const int label = pick_label(rng);
    ImageSample s = draw_shape(label, num_classes, image_size, rng);
    // the geometry above keeps masks non-empty and partial; guard anyway
    while (s.mask->count() == 0 || s.mask->count() == s.mask->cells.size()) {
      s = draw_shape(label, num_classes, image_size, rng);
    }
    std::ostringstream id;
    id << "synth-" << seed << "-" << std::setw(5) << std::setfill('0') << i;
    s.sample_id = id.str();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw InputError("cannot open manifest " + manifest.string());
  std::string line;
  if (!std::getline(is, line)) throw InputError(manifest.string() + ": empty manifest");
  std::vector<ManifestEntry> entries;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 2) {
      throw InputError(manifest.string() + ":" + std::to_string(lineno) + ": expected image<TAB>label[<TAB>mask]");
    }
    ManifestEntry e;
    e.image_path = cols[0];
    try {
      e.label = std::stoi(cols[1]);
    } catch (const std::exception&) {
      throw InputError(manifest.string() + ":" + std::to_string(lineno) + ": bad label '" + cols[1] + "'");
    }
    if (cols.size() >= 3 && !cols[2].empty()) e.mask_path = cols[2];
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries) {
  if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
  std::ofstream os(manifest, std::ios::trunc);
  if (!os) throw InputError("cannot write manifest " + manifest.string());
  os << "image\tlabel\tmask\n";
  for (const auto& e : entries) os << e.image_path << '\t' << e.label << '\t' << e.mask_path.value_or("") << '\n';
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int height, int width) {
  BinaryMask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>(std::floor((y + 0.5) * mask.height / height)));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>(std::floor((x + 0.5) * mask.width / width)));
      out.set(y, x, mask.at(sy, sx));
    }
  }
  return out;
}

ImageTensor resize_image_bilinear(const ImageTensor& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  ImageTensor out(image.channels(), height, width);
  for (int c = 0; c < image.channels(); ++c) {
    std::vector<double> src(image.pixels.row(c).data(), image.pixels.row(c).data() + image.num_pixels());
    const auto dst = bilinear_resize(src, image.height, image.width, height, width);
    for (int i = 0; i < height * width; ++i) out.pixels(c, i) = dst[static_cast<std::size_t>(i)];
  }
  return out;
}

Dataset load_external(const std::filesystem::path& root, const std::vector<ManifestEntry>& manifest, int image_size,
                      int channels, LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep.requested = manifest.size();
  rep.failures.clear();
  Dataset out;
  for (const auto& e : manifest) {
    try {
      ImageSample s;
      s.sample_id = e.image_path;
      s.label = e.label;
      s.image = resize_image_bilinear(raster_to_image(read_raster(root / e.image_path), channels), image_size,
                                      image_size);
      if (e.mask_path) {
        s.mask = resize_mask_nearest(raster_to_mask(read_raster(root / *e.mask_path)), image_size, image_size);
      }
      out.push_back(std::move(s));
    } catch (const std::exception& ex) {
      rep.failures.push_back(e.image_path + ": " + ex.what());
    }
  }
  if (!manifest.empty() && rep.failures.size() * 10 > manifest.size()) {
    throw InputError("load_external: " + std::to_string(rep.failures.size()) + " of " +
                     std::to_string(manifest.size()) + " entries failed (first: " + rep.failures.front() + ")");
  }
  return out;
}

std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

DatasetSplit split(const Dataset& dataset, double train_fraction, double val_fraction, double test_fraction,
                   std::uint64_t seed) {
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw InputError("split: fractions must sum to 1");
  }
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0) throw InputError("split: negative fraction");
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (n_train + n_val >= n || n_train == 0 || n_val == 0) {
    throw InputError("split: fractions leave an empty partition for " + std::to_string(n) + " samples");
  }
  const auto perm = split_permutation(n, seed);
  DatasetSplit out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const ImageSample& s = dataset[perm[i]];
    if (i < n_train) {
      out.train.push_back(s);
    } else if (i < n_train + n_val) {
      out.val.push_back(s);
    } else {
      out.test.push_back(s);
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset, int num_classes) {
  nlohmann::json meta;
  meta["kind"] = "dataset";
  meta["num_classes"] = num_classes;
  meta["samples"] = nlohmann::json::array();
  TensorArchive archive;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    meta["samples"].push_back({{"id", s.sample_id}, {"label", s.label}, {"has_mask", s.mask.has_value()}});
    TensorEntry img;
    img.name = "image/" + std::to_string(i);
    img.shape = {static_cast<std::uint64_t>(s.image.channels()), static_cast<std::uint64_t>(s.image.height),
                 static_cast<std::uint64_t>(s.image.width)};
    img.values.assign(s.image.pixels.data(), s.image.pixels.data() + s.image.pixels.size());
    archive.tensors.push_back(std::move(img));
    if (s.mask) {
      TensorEntry m;
      m.name = "mask/" + std::to_string(i);
      m.shape = {static_cast<std::uint64_t>(s.mask->height), static_cast<std::uint64_t>(s.mask->width)};
      m.values.assign(s.mask->cells.begin(), s.mask->cells.end());
      archive.tensors.push_back(std::move(m));
    }
  }
  archive.metadata = meta.dump(2);
  write_archive(path, archive);
}

Dataset load_dataset(const std::filesystem::path& path, int* num_classes) {
  const TensorArchive archive = read_archive(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(archive.metadata);
  } catch (const std::exception& e) {
    throw InputError(path.string() + ": bad dataset metadata: " + e.what());
  }
  if (meta.value("kind", "") != "dataset") throw InputError(path.string() + ": not a dataset archive");
  if (num_classes) *num_classes = meta.at("num_classes").get<int>();
  Dataset out;
  const auto& samples = meta.at("samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ImageSample s;
    s.sample_id = samples[i].at("id").get<std::string>();
    s.label = samples[i].at("label").get<int>();
    const TensorEntry* img = archive.find("image/" + std::to_string(i));
    if (!img || img->shape.size() != 3) throw InputError(path.string() + ": missing image " + std::to_string(i));
    s.image = ImageTensor(static_cast<int>(img->shape[0]), static_cast<int>(img->shape[1]),
                          static_cast<int>(img->shape[2]));
    std::copy(img->values.begin(), img->values.end(), s.image.pixels.data());
    if (samples[i].at("has_mask").get<bool>()) {
      const TensorEntry* m = archive.find("mask/" + std::to_string(i));
      if (!m || m->shape.size() != 2) throw InputError(path.string() + ": missing mask " + std::to_string(i));
      BinaryMask mask(static_cast<int>(m->shape[0]), static_cast<int>(m->shape[1]));
      for (std::size_t k = 0; k < m->values.size(); ++k) mask.cells[k] = m->values[k] != 0.0 ? 1 : 0;
      s.mask = std::move(mask);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void export_dataset_png(const std::filesystem::path& dir, const Dataset& dataset) {
  std::vector<ManifestEntry> entries;
  for (const auto& s : dataset) {
    ManifestEntry e;
    e.image_path = "images/" + s.sample_id + ".png";
    e.label = s.label;
    write_png(dir / e.image_path, image_to_raster(s.image));
    if (s.mask) {
      e.mask_path = "masks/" + s.sample_id + ".png";
      write_png(dir / *e.mask_path, mask_to_raster(*s.mask));
    }
    entries.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.tsv", entries);
}

std::uint64_t dataset_checksum(const Dataset& dataset) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& s : dataset) {
    h = fnv(h, s.sample_id.data(), s.sample_id.size());
    h = fnv(h, &s.label, sizeof(s.label));
    h = fnv(h, s.image.pixels.data(), sizeof(double) * static_cast<std::size_t>(s.image.pixels.size()));
    if (s.mask) h = fnv(h, s.mask->cells.data(), s.mask->cells.size());
  }
  return h;
}

}  // namespace ala

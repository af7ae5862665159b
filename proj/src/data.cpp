// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mfs {
namespace {

using nlohmann::ordered_json;

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  throw std::runtime_error(path.string() + ": malformed header (truncated)");
}

std::size_t header_number(std::istream& in, const fs::path& path, const char* what) {
  const std::string tok = header_token(in, path);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit)) {
    throw std::runtime_error(path.string() + ": malformed header, bad " + what + " '" + tok + "'");
  }
  return std::stoull(tok);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(unit(rng) * (hi - lo + 1));
}

std::array<double, 3> hsv(double h, double s, double v) {
  const double i = std::floor(h * 6), f = h * 6 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image8 read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string magic = header_token(in, path);
  Image8 img;
  if (magic == "P6") img.channels = 3;
  else if (magic == "P5") img.channels = 1;
  else throw std::runtime_error(path.string() + ": malformed header, magic '" + magic + "'");
  img.width = header_number(in, path, "width");
  img.height = header_number(in, path, "height");
  const std::size_t maxval = header_number(in, path, "maxval");
  if (maxval != 255) {
    throw std::runtime_error(path.string() + ": malformed header, maxval " +
                             std::to_string(maxval) + " (only 8-bit supported)");
  }
  if (img.width == 0 || img.height == 0) {
    throw std::runtime_error(path.string() + ": malformed header, empty image");
  }
  img.pixels.resize(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  return img;
}

void write_pnm(const fs::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw std::invalid_argument("write_pnm: pixel buffer does not match extents");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

Image8 resize_bilinear(const Image8& image, std::size_t height, std::size_t width) {
  Image8 out{width, height, image.channels, {}};
  out.pixels.resize(width * height * image.channels);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (std::size_t c = 0; c < image.channels; ++c) {
        auto px = [&](std::size_t yy, std::size_t xx) {
          return static_cast<double>(image.pixels[(yy * image.width + xx) * image.channels + c]);
        };
        const double v = (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) +
                         wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
        out.pixels[(y * width + x) * image.channels + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Image8 resize_nearest(const Image8& image, std::size_t height, std::size_t width) {
  Image8 out{width, height, image.channels, {}};
  out.pixels.resize(width * height * image.channels);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(image.height - 1, (2 * y + 1) * image.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(image.width - 1, (2 * x + 1) * image.width / (2 * width));
      for (std::size_t c = 0; c < image.channels; ++c) {
        out.pixels[(y * width + x) * image.channels + c] =
            image.pixels[(sy * image.width + sx) * image.channels + c];
      }
    }
  }
  return out;
}

Sample load_sample(const fs::path& image_path, const fs::path& label_path) {
  const Image8 img = read_pnm(image_path);
  const Image8 lab = read_pnm(label_path);
  if (img.channels != 3) throw std::runtime_error(image_path.string() + ": expected a PPM image");
  if (lab.channels != 1) throw std::runtime_error(label_path.string() + ": expected a PGM label map");
  if (img.width != lab.width || img.height != lab.height) {
    throw std::runtime_error("shape mismatch: " + image_path.string() + " is " +
                             std::to_string(img.width) + "x" + std::to_string(img.height) +
                             " but " + label_path.string() + " is " + std::to_string(lab.width) +
                             "x" + std::to_string(lab.height));
  }
  Sample s;
  s.height = img.height;
  s.width = img.width;
  s.image = Tensor({3, img.height, img.width});
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) s.image[c * plane + i] = img.pixels[i * 3 + c] / 255.0;
  }
  s.labels.assign(lab.pixels.begin(), lab.pixels.end());
  return s;
}

void save_sample(const Sample& sample, const fs::path& image_path, const fs::path& label_path) {
  const std::size_t plane = sample.height * sample.width;
  Image8 img{sample.width, sample.height, 3, std::vector<std::uint8_t>(plane * 3)};
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = to_byte(sample.image[c * plane + i]);
  }
  Image8 lab{sample.width, sample.height, 1, std::vector<std::uint8_t>(plane)};
  for (std::size_t i = 0; i < plane; ++i) {
    const int v = sample.labels[i];
    if (v < 0 || v > 255) throw std::out_of_range("label " + std::to_string(v) + " does not fit a PGM");
    lab.pixels[i] = static_cast<std::uint8_t>(v);
  }
  write_pnm(image_path, img);
  write_pnm(label_path, lab);
}

ordered_json DatasetManifest::to_json() const {
  ordered_json j;
  j["split"] = split;
  j["num_classes"] = num_classes;
  j["ignore_index"] = ignore_index ? ordered_json(*ignore_index) : ordered_json(nullptr);
  j["height"] = height;
  j["width"] = width;
  ordered_json items = ordered_json::array();
  for (const auto& [img, lab] : samples) items.push_back({{"image", img}, {"label", lab}});
  j["samples"] = items;
  return j;
}

void DatasetManifest::save() const {
  fs::create_directories(dir);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << to_json().dump(2) << '\n';
}

DatasetManifest DatasetManifest::load(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const ordered_json j = ordered_json::parse(in);
  DatasetManifest m;
  m.dir = dir;
  m.split = j.at("split").get<std::string>();
  m.num_classes = j.at("num_classes").get<int>();
  if (!j.at("ignore_index").is_null()) m.ignore_index = j.at("ignore_index").get<int>();
  m.height = j.at("height").get<std::size_t>();
  m.width = j.at("width").get<std::size_t>();
  for (const auto& s : j.at("samples")) {
    m.samples.emplace_back(s.at("image").get<std::string>(), s.at("label").get<std::string>());
  }
  for (const auto& [img, lab] : m.samples) {
    for (const auto& rel : {img, lab}) {
      if (!fs::exists(dir / rel)) throw std::runtime_error(path.string() + ": missing " + rel);
    }
  }
  return m;
}

DatasetManifest generate_synthetic(const fs::path& root, const std::string& split,
                                   std::size_t count, std::size_t height, std::size_t width,
                                   int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (num_classes > 255) throw std::invalid_argument("num_classes must fit a PGM");
  if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
    throw std::invalid_argument("synthetic size " + std::to_string(height) + "x" +
                                std::to_string(width) + " is not a multiple of 32");
  }
  DatasetManifest m;
  m.split = split;
  m.dir = root / split;
  m.num_classes = num_classes;
  m.height = height;
  m.width = width;

  std::mt19937_64 rng(seed);
  const std::size_t plane = height * width;
  const double H = static_cast<double>(height), W = static_cast<double>(width);
  for (std::size_t n = 0; n < count; ++n) {
    Sample s;
    s.height = height;
    s.width = width;
    s.image = Tensor({3, height, width});
    s.labels.assign(plane, 0);

    // Background: muted base colour with two low-frequency waves and grain.
    const auto base = hsv(unit(rng), uniform(rng, 0.05, 0.25), uniform(rng, 0.35, 0.6));
    const double f1 = uniform(rng, 0.05, 0.2), f2 = uniform(rng, 0.05, 0.2);
    const double p1 = uniform(rng, 0, 6.3), p2 = uniform(rng, 0, 6.3);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double wave = 0.08 * std::sin(f1 * x + p1) * std::cos(f2 * y + p2);
        for (std::size_t c = 0; c < 3; ++c) {
          s.image[c * plane + y * width + x] = base[c] + wave + uniform(rng, -0.05, 0.05);
        }
      }
    }

    // Every foreground class appears at least once, then a few extra shapes.
    std::vector<int> classes;
    for (int c = 1; c < num_classes; ++c) classes.push_back(c);
    const int extra = uniform_int(rng, 0, 2);
    for (int e = 0; e < extra; ++e) classes.push_back(uniform_int(rng, 1, num_classes - 1));
    for (std::size_t i = classes.size(); i > 1; --i) {
      std::swap(classes[i - 1], classes[static_cast<std::size_t>(uniform_int(rng, 0, int(i) - 1))]);
    }

    for (int cls : classes) {
      const double hue = static_cast<double>(cls - 1) / (num_classes - 1);
      auto color = hsv(std::fmod(hue + uniform(rng, -0.04, 0.04) + 1.0, 1.0),
                       uniform(rng, 0.55, 0.9), uniform(rng, 0.6, 0.95));
      const int kind = (cls - 1) % 3;
      const double cy = uniform(rng, 0.1, 0.9) * H, cx = uniform(rng, 0.1, 0.9) * W;
      const double ry = uniform(rng, 0.12, 0.3) * H, rx = uniform(rng, 0.08, 0.2) * W;
      const double period = uniform(rng, 4.0, 7.0);
      const bool vertical = unit(rng) < 0.5;
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
          bool inside = false;
          switch (kind) {
            case 0: inside = std::abs(dy) <= 1 && std::abs(dx) <= 1; break;
            case 1: inside = dy * dy + dx * dx <= 1; break;
            default: {
              const double t = vertical ? x + 0.5 - cx : y + 0.5 - cy;
              inside = std::abs(dy) <= 1 && std::abs(dx) <= 1 &&
                       std::fmod(std::abs(t), period) < period / 2;
            }
          }
          if (!inside) continue;
          const std::size_t i = y * width + x;
          s.labels[i] = cls;
          for (std::size_t c = 0; c < 3; ++c) {
            s.image[c * plane + i] = color[c] + uniform(rng, -0.06, 0.06);
          }
        }
      }
    }
    for (std::size_t i = 0; i < s.image.size(); ++i) s.image[i] = to_byte(s.image[i]) / 255.0;

    const std::string name = sample_name(n);
    const std::string img_rel = "img/" + name + ".ppm", lab_rel = "lab/" + name + ".pgm";
    save_sample(s, m.dir / img_rel, m.dir / lab_rel);
    m.samples.emplace_back(img_rel, lab_rel);
  }
  m.save();
  return m;
}

int cityscapes_train_id(int label_id) {
  static constexpr std::array<std::pair<int, int>, 19> kMap = {{
      {7, 0}, {8, 1}, {11, 2}, {12, 3}, {13, 4}, {17, 5}, {19, 6}, {20, 7}, {21, 8}, {22, 9},
      {23, 10}, {24, 11}, {25, 12}, {26, 13}, {27, 14}, {28, 15}, {31, 16}, {32, 17}, {33, 18},
  }};
  for (const auto& [id, train] : kMap) {
    if (id == label_id) return train;
  }
  return kCityscapesIgnore;
}

DatasetManifest load_cityscapes_dir(const fs::path& root, const std::string& split,
                                    std::size_t height, const fs::path& out) {
  if (height == 0 || height % 32 != 0) {
    throw std::invalid_argument("target height " + std::to_string(height) +
                                " is not a multiple of 32");
  }
  const fs::path img_root = root / "leftImg8bit" / split;
  const fs::path lab_root = root / "gtFine" / split;
  const std::string img_suffix = "_leftImg8bit.ppm", lab_suffix = "_gtFine_labelIds.pgm";
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  auto collect = [&](const fs::path& dir, const std::string& suffix) {
    std::set<std::string> stems;  // "<city>/<stem>", lexicographic
    if (!fs::exists(dir)) return stems;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (!e.is_regular_file() || !ends_with(name, suffix)) continue;
      const std::string city = e.path().parent_path().filename().string();
      stems.insert(city + "/" + name.substr(0, name.size() - suffix.size()));
    }
    return stems;
  };
  const auto images = collect(img_root, img_suffix);
  const auto labels = collect(lab_root, lab_suffix);
  std::vector<std::string> unpaired;
  for (const auto& s : images)
    if (!labels.count(s)) unpaired.push_back((img_root / (s + img_suffix)).string());
  for (const auto& s : labels)
    if (!images.count(s)) unpaired.push_back((lab_root / (s + lab_suffix)).string());
  if (!unpaired.empty()) {
    std::string msg = "unpaired files:";
    for (const auto& u : unpaired) msg += " " + u;
    throw std::runtime_error(msg);
  }
  if (images.empty()) {
    throw std::runtime_error("no samples for split '" + split + "' under " + root.string());
  }

  DatasetManifest m;
  m.split = split;
  m.dir = out / split;
  m.num_classes = kCityscapesIgnore + 1;
  m.ignore_index = kCityscapesIgnore;
  std::size_t n = 0;
  for (const auto& stem : images) {
    const Image8 img = read_pnm(img_root / (stem + img_suffix));
    Image8 lab = read_pnm(lab_root / (stem + lab_suffix));
    if (img.channels != 3 || lab.channels != 1) {
      throw std::runtime_error(stem + ": expected a PPM image and a PGM label map");
    }
    if (img.width != lab.width || img.height != lab.height) {
      throw std::runtime_error(stem + ": image and label sizes differ");
    }
    const std::size_t width = height * img.width / img.height;
    if (width == 0 || width % 32 != 0 || width * img.height != height * img.width) {
      throw std::runtime_error(stem + ": target width for height " + std::to_string(height) +
                               " is not a multiple of 32");
    }
    if (m.width == 0) {
      m.height = height;
      m.width = width;
    } else if (m.width != width) {
      throw std::runtime_error(stem + ": aspect ratio differs from earlier samples");
    }
    for (auto& v : lab.pixels) v = static_cast<std::uint8_t>(cityscapes_train_id(v));
    const std::string name = sample_name(n++);
    const std::string img_rel = "img/" + name + ".ppm", lab_rel = "lab/" + name + ".pgm";
    write_pnm(m.dir / img_rel, resize_bilinear(img, height, width));
    write_pnm(m.dir / lab_rel, resize_nearest(lab, height, width));
    m.samples.emplace_back(img_rel, lab_rel);
  }
  m.save();
  return m;
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset d;
  d.num_classes = manifest.num_classes;
  d.ignore_index = manifest.ignore_index;
  for (const auto& [img, lab] : manifest.samples) {
    Sample s = load_sample(manifest.dir / img, manifest.dir / lab);
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      const int v = s.labels[i];
      if (v >= manifest.num_classes) {
        throw std::runtime_error((manifest.dir / lab).string() + ": label " + std::to_string(v) +
                                 " out of range at pixel (" + std::to_string(i / s.width) + ", " +
                                 std::to_string(i % s.width) + ")");
      }
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const Sample& first = data.samples.at(indices[0]);
  const std::size_t plane = first.height * first.width;
  Batch b;
  b.images = Tensor({indices.size(), 3, first.height, first.width});
  b.labels.reserve(indices.size() * plane);
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const Sample& s = data.samples.at(indices[n]);
    if (s.height != first.height || s.width != first.width) {
      throw std::invalid_argument("batch mixes image sizes");
    }
    std::copy(s.image.data().begin(), s.image.data().end(), b.images.ptr() + n * 3 * plane);
    b.labels.insert(b.labels.end(), s.labels.begin(), s.labels.end());
  }
  return b;
}

}  // namespace mfs

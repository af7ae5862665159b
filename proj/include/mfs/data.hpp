// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfs/tensor.hpp"

namespace mfs {

namespace fs = std::filesystem;

// 8-bit interleaved raster: 3 channels for PPM, 1 for PGM.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Binary P6 / P5 with maxval 255.
Image8 read_pnm(const fs::path& path);
void write_pnm(const fs::path& path, const Image8& image);

Image8 resize_bilinear(const Image8& image, std::size_t height, std::size_t width);
Image8 resize_nearest(const Image8& image, std::size_t height, std::size_t width);

struct Sample {
  Tensor image;             // [3,H,W] in [0,1]
  std::vector<int> labels;  // H·W class ids, row-major
  std::size_t height = 0;
  std::size_t width = 0;
};

Sample load_sample(const fs::path& image_path, const fs::path& label_path);
void save_sample(const Sample& sample, const fs::path& image_path, const fs::path& label_path);

// One split on disk: <dir>/img/NNNN.ppm, <dir>/lab/NNNN.pgm, <dir>/manifest.json.
// Sample paths are relative to `dir`.
struct DatasetManifest {
  std::string split;
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> samples;
  int num_classes = 0;  // total class ids, including an unlabeled id if any
  std::optional<int> ignore_index;
  std::size_t height = 0;
  std::size_t width = 0;

  nlohmann::ordered_json to_json() const;
  void save() const;
  static DatasetManifest load(const fs::path& dir);
};

// Scenes of rectangles, ellipses and stripes on textured backgrounds, with
// exact label maps. Writes into <root>/<split>/.
DatasetManifest generate_synthetic(const fs::path& root, const std::string& split,
                                   std::size_t count, std::size_t height, std::size_t width,
                                   int num_classes, std::uint64_t seed);

// Cityscapes labelId → trainId (0..18), everything else → 19.
inline constexpr int kCityscapesIgnore = 19;
int cityscapes_train_id(int label_id);

// Pairs leftImg8bit/<split>/<city>/*_leftImg8bit.ppm with
// gtFine/<split>/<city>/*_gtFine_labelIds.pgm, resizes to `height` rows
// (width keeps the aspect ratio) and writes the result under <out>/<split>/.
DatasetManifest load_cityscapes_dir(const fs::path& root, const std::string& split,
                                    std::size_t height, const fs::path& out);

struct Dataset {
  std::vector<Sample> samples;
  int num_classes = 0;
  std::optional<int> ignore_index;

  std::size_t size() const { return samples.size(); }
};

Dataset load_dataset(const DatasetManifest& manifest);

struct Batch {
  Tensor images;  // [N,3,H,W]
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace mfs

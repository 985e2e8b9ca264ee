#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ukd/backbone/image.hpp"
#include "ukd/io/feature_store.hpp"

namespace ukd::data {

/// Labelled images. Labels are latent classes, unused by pretraining.
struct ImageDataset {
  std::vector<vit::Image> images;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return images.size(); }
};

struct TextureParams {
  std::size_t count = 1000;
  std::size_t size = 16;
  int classes = 3;
  double noise = 0.08;
};

/// Oriented-stripe textures: class 0 varies along rows, class 1 along
/// columns, class 2 is a product pattern. Frequency, phase and colour are
/// random per image, so classes survive horizontal flips and resized crops.
/// Pixels are zero-centred (as after per-channel normalisation) and rounded
/// to float32.
ImageDataset generate_textures(const TextureParams& params, std::uint64_t seed);

/// One row per image (CHW pixels) plus a manifest carrying id and label.
void write_image_dataset(const ImageDataset& ds, const std::string& store_path);
/// Inverse of write_image_dataset; images must be square with 3 channels.
ImageDataset read_image_dataset(const std::string& store_path);

}  // namespace ukd::data

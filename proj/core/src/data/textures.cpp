#include "ukd/data/textures.hpp"

#include <cmath>
#include <numbers>

#include "ukd/errors.hpp"
#include "ukd/numerics/rng.hpp"

namespace ukd::data {

ImageDataset generate_textures(const TextureParams& p, std::uint64_t seed) {
  if (p.count == 0 || p.size == 0 || p.classes < 1 || p.classes > 3) {
    throw ParameterError("texture generator needs count > 0, size > 0 and 1..3 classes");
  }
  num::Rng root(seed);
  ImageDataset ds;
  ds.images.reserve(p.count);
  for (std::size_t i = 0; i < p.count; ++i) {
    num::Rng rng = root.substream(i);
    const int label = static_cast<int>(i % static_cast<std::size_t>(p.classes));
    const double freq = rng.uniform(0.6, 1.4);
    const double phase_a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase_b = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double color[3];
    for (double& c : color) c = rng.uniform(0.3, 1.0);
    vit::Image img(3, p.size, p.size);
    for (std::size_t y = 0; y < p.size; ++y) {
      for (std::size_t x = 0; x < p.size; ++x) {
        const double sy = std::sin(freq * static_cast<double>(y) + phase_a);
        const double sx = std::sin(freq * static_cast<double>(x) + phase_b);
        const double v = label == 0 ? sy : label == 1 ? sx : sy * sx;
        for (std::size_t c = 0; c < 3; ++c) {
          const double px = color[c] * v + p.noise * rng.normal();
          img.at(c, y, x) = static_cast<double>(static_cast<float>(px));
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
    ds.ids.push_back("tex" + std::to_string(i));
  }
  return ds;
}

void write_image_dataset(const ImageDataset& ds, const std::string& store_path) {
  io::FeatureStore store;
  std::vector<io::ManifestRecord> manifest;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    store.append(std::span<const double>(ds.images[i].pixels));
    io::ManifestRecord r;
    r.id = ds.ids[i];
    r.row_index = i;
    r.label = ds.labels[i];
    manifest.push_back(std::move(r));
  }
  store.write(store_path);
  io::write_manifest(io::manifest_path_for(store_path), manifest);
}

ImageDataset read_image_dataset(const std::string& store_path) {
  const auto store = io::FeatureStore::read(store_path);
  const auto manifest = io::read_manifest(io::manifest_path_for(store_path));
  io::validate_manifest(manifest, store.count());
  const std::size_t dim = store.dim();
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(dim / 3.0)));
  if (dim == 0 || 3 * side * side != dim) {
    throw DimensionError("image store rows of width " + std::to_string(dim) +
                         " are not 3 x s x s pixels");
  }
  ImageDataset ds;
  for (const auto& r : manifest) {
    vit::Image img(3, side, side);
    const auto row = store.row(r.row_index);
    for (std::size_t j = 0; j < dim; ++j) img.pixels[j] = row[j];
    ds.images.push_back(std::move(img));
    ds.labels.push_back(r.label ? static_cast<int>(*r.label) : -1);
    ds.ids.push_back(r.id);
  }
  return ds;
}

}  // namespace ukd::data

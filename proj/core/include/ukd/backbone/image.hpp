#pragma once

#include <cstddef>
#include <vector>

namespace ukd::vit {

/// Planar CHW image with real-valued pixels.
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), pixels(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace ukd::vit

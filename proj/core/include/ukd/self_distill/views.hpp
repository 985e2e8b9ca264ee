#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ukd/backbone/image.hpp"
#include "ukd/backbone/vit.hpp"
#include "ukd/numerics/rng.hpp"

namespace ukd::ssl {

struct ScaleRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct CropConfig {
  ScaleRange global_scale{0.32, 1.0};
  std::size_t global_size = 16;
  ScaleRange local_scale{0.05, 0.32};
  std::size_t local_count = 8;
  std::size_t local_size = 8;

  void validate() const;
  /// Toy-scale sizes (16px globals, 8px locals) with the reference scales.
  static CropConfig toy();
  /// 224px globals, 98px locals, 8 locals.
  static CropConfig paper_fullscale();
};

struct MaskConfig {
  std::size_t patch_size = 4;
  vit::RatioRange ratio{0.1, 0.5};
};

/// Source rectangle and flip that produced a view.
struct CropParams {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  bool flip = false;
  std::size_t out_size = 0;

  friend bool operator==(const CropParams&, const CropParams&) = default;
};

struct View {
  vit::Image image;
  CropParams crop;
  /// "<image id>#<transform hash>", stable across runs for the same crop.
  std::string key;
};

/// Two global views u, v, their masked twins (same pixels plus a mask), and
/// n local views.
struct ViewSet {
  View u;
  View v;
  vit::MaskSpec u_mask;
  vit::MaskSpec v_mask;
  std::vector<View> locals;
};

/// Bilinear resize with half-pixel centres.
vit::Image resize_bilinear(const vit::Image& src, std::size_t out_h, std::size_t out_w);

/// Crop covering a random area fraction from `scale` with log-uniform aspect
/// ratio in [3/4, 4/3], resized to `out_size` and flipped with probability 1/2.
View random_resized_crop(const vit::Image& image, const std::string& image_id,
                         ScaleRange scale, std::size_t out_size, num::Rng& rng);

View crop_view(const vit::Image& image, const std::string& image_id, const CropParams& crop);

std::string view_key(const std::string& image_id, const CropParams& crop);

ViewSet make_views(const vit::Image& image, const std::string& image_id,
                   const CropConfig& crop_cfg, const MaskConfig& mask_cfg, num::Rng& rng);

}  // namespace ukd::ssl

#include "ukd/self_distill/views.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "ukd/errors.hpp"

namespace ukd::ssl {

void CropConfig::validate() const {
  auto check = [](ScaleRange r, const char* name) {
    if (!(r.lo > 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) {
      throw ParameterError(std::string(name) + " must lie within (0, 1]");
    }
  };
  check(global_scale, "global crop scale");
  check(local_scale, "local crop scale");
  if (global_size == 0 || (local_count > 0 && local_size == 0)) {
    throw ParameterError("crop sizes must be positive");
  }
}

CropConfig CropConfig::toy() { return CropConfig{}; }

CropConfig CropConfig::paper_fullscale() {
  CropConfig c;
  c.global_size = 224;
  c.local_size = 98;
  return c;
}

vit::Image resize_bilinear(const vit::Image& src, std::size_t out_h, std::size_t out_w) {
  vit::Image out(src.channels, out_h, out_w);
  auto coord = [](std::size_t o, std::size_t in_n, std::size_t out_n) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in_n) /
                   static_cast<double>(out_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    return std::tuple{i0, std::min(i0 + 1, in_n - 1), s - static_cast<double>(i0)};
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = coord(y, src.height, out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = coord(x, src.width, out_w);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = (1 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1);
        const double bot = (1 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1);
        out.at(c, y, x) = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

std::string view_key(const std::string& image_id, const CropParams& crop) {
  std::uint64_t h = num::mix64(crop.top + 1);
  for (std::uint64_t v : {std::uint64_t{crop.left}, std::uint64_t{crop.height},
                          std::uint64_t{crop.width}, std::uint64_t{crop.flip},
                          std::uint64_t{crop.out_size}}) {
    h = num::mix64(h ^ (v + 0x9E3779B97F4A7C15ULL));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return image_id + "#" + buf;
}

View crop_view(const vit::Image& image, const std::string& image_id, const CropParams& crop) {
  if (crop.height == 0 || crop.width == 0 || crop.top + crop.height > image.height ||
      crop.left + crop.width > image.width) {
    throw ParameterError("crop rectangle exceeds the image");
  }
  vit::Image region(image.channels, crop.height, crop.width);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < crop.height; ++y)
      for (std::size_t x = 0; x < crop.width; ++x) {
        const std::size_t sx = crop.flip ? crop.width - 1 - x : x;
        region.at(c, y, x) = image.at(c, crop.top + y, crop.left + sx);
      }
  View v;
  v.image = (crop.height == crop.out_size && crop.width == crop.out_size)
                ? std::move(region)
                : resize_bilinear(region, crop.out_size, crop.out_size);
  v.crop = crop;
  v.key = view_key(image_id, crop);
  return v;
}

View random_resized_crop(const vit::Image& image, const std::string& image_id,
                         ScaleRange scale, std::size_t out_size, num::Rng& rng) {
  const double area = static_cast<double>(image.height * image.width);
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  CropParams crop;
  crop.out_size = out_size;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double target = area * rng.uniform(scale.lo, scale.hi);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<std::size_t>(std::llround(std::sqrt(target * aspect)));
    const auto h = static_cast<std::size_t>(std::llround(std::sqrt(target / aspect)));
    if (w > 0 && h > 0 && w <= image.width && h <= image.height) {
      crop.height = h;
      crop.width = w;
      crop.top = rng.uniform_index(image.height - h + 1);
      crop.left = rng.uniform_index(image.width - w + 1);
      found = true;
    }
  }
  if (!found) {
    const std::size_t side = std::min(image.height, image.width);
    crop.height = crop.width = side;
    crop.top = (image.height - side) / 2;
    crop.left = (image.width - side) / 2;
  }
  crop.flip = rng.uniform() < 0.5;
  return crop_view(image, image_id, crop);
}

ViewSet make_views(const vit::Image& image, const std::string& image_id,
                   const CropConfig& crop_cfg, const MaskConfig& mask_cfg, num::Rng& rng) {
  crop_cfg.validate();
  if (image.height < crop_cfg.global_size || image.width < crop_cfg.global_size) {
    throw ParameterError("image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " is smaller than the global crop " +
                         std::to_string(crop_cfg.global_size));
  }
  if (mask_cfg.patch_size == 0 || crop_cfg.global_size % mask_cfg.patch_size != 0) {
    throw ParameterError("global crop size must be a multiple of the patch size");
  }
  ViewSet vs;
  vs.u = random_resized_crop(image, image_id, crop_cfg.global_scale, crop_cfg.global_size, rng);
  vs.v = random_resized_crop(image, image_id, crop_cfg.global_scale, crop_cfg.global_size, rng);
  const std::size_t g = crop_cfg.global_size / mask_cfg.patch_size;
  vs.u_mask = vit::sample_mask(g, mask_cfg.ratio, rng);
  vs.v_mask = vit::sample_mask(g, mask_cfg.ratio, rng);
  vs.locals.reserve(crop_cfg.local_count);
  for (std::size_t i = 0; i < crop_cfg.local_count; ++i) {
    vs.locals.push_back(
        random_resized_crop(image, image_id, crop_cfg.local_scale, crop_cfg.local_size, rng));
  }
  return vs;
}

}  // namespace ukd::ssl

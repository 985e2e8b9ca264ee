#include "ukd/backbone/vit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"

namespace ukd::vit {

using num::Tensor;

std::size_t ViTConfig::hidden_dim() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(dim) * ffn_hidden_ratio));
}

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ParameterError("image_size " + std::to_string(image_size) +
                         " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw ParameterError("dim " + std::to_string(dim) + " is not divisible by heads " +
                         std::to_string(heads));
  }
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) {
    throw ParameterError("drop_path_rate must lie in [0, 1)");
  }
  if (!(ffn_hidden_ratio > 0.0)) throw ParameterError("ffn_hidden_ratio must be positive");
  if (in_channels == 0) throw ParameterError("in_channels must be positive");
}

ViTConfig ViTConfig::toy() { return ViTConfig{}; }

ViTConfig ViTConfig::paper_fullscale() {
  ViTConfig c;
  c.image_size = 224;
  c.patch_size = 14;
  c.depth = 24;
  c.dim = 1024;
  c.heads = 16;
  c.ffn_hidden_ratio = 4.0;
  c.drop_path_rate = 0.4;
  c.layer_scale_init = 1e-5;
  return c;
}

std::size_t MaskSpec::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

MaskSpec MaskSpec::none(std::size_t grid_side) {
  MaskSpec m;
  m.grid_side = grid_side;
  m.mask.assign(grid_side * grid_side, 0);
  return m;
}

MaskSpec sample_mask(std::size_t grid_side, RatioRange range, num::Rng& rng) {
  if (grid_side == 0) throw ParameterError("sample_mask: empty grid");
  if (!(range.lo >= 0.0 && range.hi <= 1.0 && range.lo <= range.hi)) {
    throw ParameterError("sample_mask: ratio range must be a sub-interval of [0, 1]");
  }
  const std::size_t n = grid_side * grid_side;
  MaskSpec m = MaskSpec::none(grid_side);
  m.ratio = range.lo == range.hi ? range.lo : rng.uniform(range.lo, range.hi);
  const auto count = static_cast<std::size_t>(std::llround(m.ratio * static_cast<double>(n)));
  // Partial Fisher-Yates: the first `count` entries are a uniform subset.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(order[i], order[j]);
    m.mask[order[i]] = 1;
  }
  return m;
}

TokenOutput TokenOutput::detached() const {
  return TokenOutput{cls.detach(), patches.detach(), batch, grid_side};
}

Tensor patchify(std::span<const Image> images, std::size_t patch_size) {
  if (images.empty()) throw DimensionError("patchify: empty image batch");
  const Image& first = images.front();
  if (patch_size == 0 || first.height != first.width || first.height % patch_size != 0) {
    throw DimensionError("patchify: image " + std::to_string(first.height) + "x" +
                         std::to_string(first.width) + " is not a square multiple of patch " +
                         std::to_string(patch_size));
  }
  const std::size_t g = first.height / patch_size;
  const std::size_t c = first.channels;
  const std::size_t width = c * patch_size * patch_size;
  std::vector<double> rows(images.size() * g * g * width);
  std::size_t r = 0;
  for (const Image& img : images) {
    if (img.height != first.height || img.width != first.width || img.channels != c ||
        img.pixels.size() != c * img.height * img.width) {
      throw DimensionError("patchify: images in a batch must share one size");
    }
    for (std::size_t py = 0; py < g; ++py) {
      for (std::size_t px = 0; px < g; ++px, ++r) {
        double* out = rows.data() + r * width;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t dy = 0; dy < patch_size; ++dy)
            for (std::size_t dx = 0; dx < patch_size; ++dx)
              *out++ = img.at(ch, py * patch_size + dy, px * patch_size + dx);
      }
    }
  }
  return Tensor::from({images.size() * g * g, width}, std::move(rows));
}

VisionTransformer VisionTransformer::create(const ViTConfig& cfg, num::Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.dim, h = cfg.hidden_dim();
  const std::size_t patch_in = cfg.in_channels * cfg.patch_size * cfg.patch_size;
  num::ParamSet ps;
  ps.add("patch_embed.w", num::init_xavier(patch_in, d, rng));
  ps.add("patch_embed.b", Tensor::zeros({d}, true));
  ps.add("cls_token", num::init_normal({1, d}, 0.02, rng));
  ps.add("mask_token", num::init_normal({1, d}, 0.02, rng));
  ps.add("pos_cls", num::init_normal({1, d}, 0.02, rng));
  ps.add("pos_patch", num::init_normal({cfg.patch_count(), d}, 0.02, rng));
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    ps.add(p + "ln1.g", Tensor::full({d}, 1.0, true));
    ps.add(p + "ln1.b", Tensor::zeros({d}, true));
    ps.add(p + "qkv.w", num::init_xavier(d, 3 * d, rng));
    ps.add(p + "qkv.b", Tensor::zeros({3 * d}, true));
    ps.add(p + "proj.w", num::init_xavier(d, d, rng));
    ps.add(p + "proj.b", Tensor::zeros({d}, true));
    ps.add(p + "ls1", Tensor::full({d}, static_cast<double>(static_cast<float>(cfg.layer_scale_init)), true));
    ps.add(p + "ln2.g", Tensor::full({d}, 1.0, true));
    ps.add(p + "ln2.b", Tensor::zeros({d}, true));
    ps.add(p + "fc1.w", num::init_xavier(d, h, rng));
    ps.add(p + "fc1.b", Tensor::zeros({h}, true));
    ps.add(p + "fc2.w", num::init_xavier(h, d, rng));
    ps.add(p + "fc2.b", Tensor::zeros({d}, true));
    ps.add(p + "ls2", Tensor::full({d}, static_cast<double>(static_cast<float>(cfg.layer_scale_init)), true));
  }
  ps.add("norm.g", Tensor::full({d}, 1.0, true));
  ps.add("norm.b", Tensor::zeros({d}, true));
  return VisionTransformer(cfg, std::move(ps));
}

VisionTransformer::VisionTransformer(ViTConfig cfg, num::ParamSet params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  bind();
}

void VisionTransformer::bind() {
  patch_w_ = params_.get("patch_embed.w");
  patch_b_ = params_.get("patch_embed.b");
  cls_token_ = params_.get("cls_token");
  mask_token_ = params_.get("mask_token");
  pos_cls_ = params_.get("pos_cls");
  pos_patch_ = params_.get("pos_patch");
  norm_g_ = params_.get("norm.g");
  norm_b_ = params_.get("norm.b");
  if (pos_patch_.dim(0) != cfg_.patch_count() || patch_w_.dim(1) != cfg_.dim) {
    throw DimensionError("VisionTransformer: parameters do not match the configuration");
  }
  blocks_.clear();
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    blocks_.push_back(Block{
        params_.get(p + "ln1.g"), params_.get(p + "ln1.b"), params_.get(p + "qkv.w"),
        params_.get(p + "qkv.b"), params_.get(p + "proj.w"), params_.get(p + "proj.b"),
        params_.get(p + "ls1"), params_.get(p + "ln2.g"), params_.get(p + "ln2.b"),
        params_.get(p + "fc1.w"), params_.get(p + "fc1.b"), params_.get(p + "fc2.w"),
        params_.get(p + "fc2.b"), params_.get(p + "ls2")});
  }
}

VisionTransformer VisionTransformer::frozen_copy() const {
  return VisionTransformer(cfg_, params_.clone(false));
}

Tensor VisionTransformer::embed_patches(std::span<const Image> images,
                                        std::span<const MaskSpec> masks) const {
  for (const Image& img : images) {
    if (img.channels != cfg_.in_channels) {
      throw DimensionError("VisionTransformer: expected " + std::to_string(cfg_.in_channels) +
                           " channels, got " + std::to_string(img.channels));
    }
  }
  Tensor x = num::linear(patchify(images, cfg_.patch_size), patch_w_, patch_b_);
  if (masks.empty()) return x;
  if (masks.size() != images.size()) {
    throw DimensionError("VisionTransformer: " + std::to_string(masks.size()) +
                         " masks for " + std::to_string(images.size()) + " images");
  }
  const std::size_t g = images.front().height / cfg_.patch_size;
  std::vector<std::uint8_t> flat;
  flat.reserve(images.size() * g * g);
  bool any = false;
  for (const MaskSpec& m : masks) {
    if (m.grid_side != g || m.mask.size() != g * g) {
      throw DimensionError("VisionTransformer: mask grid " + std::to_string(m.grid_side) +
                           " does not match token grid " + std::to_string(g));
    }
    flat.insert(flat.end(), m.mask.begin(), m.mask.end());
    any = any || !m.empty();
  }
  return any ? num::mask_replace(x, flat, mask_token_) : x;
}

TokenOutput VisionTransformer::forward(std::span<const Image> images,
                                       std::span<const MaskSpec> masks,
                                       num::Rng* drop_rng) const {
  if (images.empty()) throw DimensionError("VisionTransformer: empty batch");
  const std::size_t b = images.size();
  const std::size_t g = images.front().height / cfg_.patch_size;
  const std::size_t tokens = 1 + g * g;
  Tensor patches = embed_patches(images, masks);

  // Interleave one CLS row in front of each image's patch rows.
  Tensor stacked = num::concat_rows(std::vector<Tensor>{num::tile_rows(cls_token_, b), patches});
  std::vector<std::size_t> order(b * tokens);
  for (std::size_t i = 0; i < b; ++i) {
    order[i * tokens] = i;
    for (std::size_t j = 0; j < g * g; ++j) order[i * tokens + 1 + j] = b + i * g * g + j;
  }
  Tensor x = num::gather_rows(stacked, order);

  Tensor pos = num::concat_rows(
      std::vector<Tensor>{pos_cls_, num::resample_grid(pos_patch_, cfg_.grid_side(), g)});
  x = num::add(x, num::tile_rows(pos, b));

  const bool stochastic = drop_rng != nullptr && cfg_.drop_path_rate > 0.0;
  auto drop_path = [&](const Tensor& branch, std::size_t layer) {
    if (!stochastic) return branch;
    const double rate = cfg_.depth > 1 ? cfg_.drop_path_rate * static_cast<double>(layer) /
                                             static_cast<double>(cfg_.depth - 1)
                                       : cfg_.drop_path_rate;
    const double keep = 1.0 - rate;
    std::vector<double> factors(b * tokens);
    for (std::size_t i = 0; i < b; ++i) {
      const double f = drop_rng->uniform() < keep ? 1.0 / keep : 0.0;
      std::fill_n(factors.begin() + i * tokens, tokens, f);
    }
    return num::scale_rows(branch, factors);
  };

  for (std::size_t layer = 0; layer < blocks_.size(); ++layer) {
    const Block& blk = blocks_[layer];
    Tensor h = num::layernorm(x, blk.ln1_g, blk.ln1_b);
    Tensor qkv = num::linear(h, blk.qkv_w, blk.qkv_b);
    Tensor attn = num::multi_head_attention(qkv, b, tokens, cfg_.heads);
    Tensor branch = num::mul_row(num::linear(attn, blk.proj_w, blk.proj_b), blk.ls1);
    x = num::add(x, drop_path(branch, layer));

    h = num::layernorm(x, blk.ln2_g, blk.ln2_b);
    h = num::gelu(num::linear(h, blk.fc1_w, blk.fc1_b));
    branch = num::mul_row(num::linear(h, blk.fc2_w, blk.fc2_b), blk.ls2);
    x = num::add(x, drop_path(branch, layer));
  }
  x = num::layernorm(x, norm_g_, norm_b_);

  std::vector<std::size_t> cls_rows(b), patch_rows;
  patch_rows.reserve(b * g * g);
  for (std::size_t i = 0; i < b; ++i) {
    cls_rows[i] = i * tokens;
    for (std::size_t j = 0; j < g * g; ++j) patch_rows.push_back(i * tokens + 1 + j);
  }
  TokenOutput out;
  out.cls = num::gather_rows(x, cls_rows);
  out.patches = num::gather_rows(x, patch_rows);
  out.batch = b;
  out.grid_side = g;
  return out;
}

}  // namespace ukd::vit

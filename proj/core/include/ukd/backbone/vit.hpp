#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ukd/backbone/image.hpp"
#include "ukd/numerics/param_set.hpp"
#include "ukd/numerics/rng.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::vit {

struct ViTConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t depth = 2;
  std::size_t dim = 32;
  std::size_t heads = 4;
  double ffn_hidden_ratio = 4.0;
  double drop_path_rate = 0.0;
  double layer_scale_init = 0.1;
  std::size_t in_channels = 3;

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t patch_count() const { return grid_side() * grid_side(); }
  std::size_t hidden_dim() const;
  /// Throws ParameterError on a violated invariant.
  void validate() const;

  /// depth 2, dim 32, 16px images with 4px patches.
  static ViTConfig toy();
  /// ViT-L/14 at 224px as used for full-scale pretraining.
  static ViTConfig paper_fullscale();
};

/// Per-image boolean patch mask, row-major over the g x g grid.
struct MaskSpec {
  std::size_t grid_side = 0;
  std::vector<std::uint8_t> mask;
  double ratio = 0.0;

  std::size_t masked_count() const;
  bool empty() const { return masked_count() == 0; }
  static MaskSpec none(std::size_t grid_side);
};

struct RatioRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Draws a ratio uniformly from `range` and masks round(ratio * g^2) distinct
/// positions.
MaskSpec sample_mask(std::size_t grid_side, RatioRange range, num::Rng& rng);

/// CLS and patch tokens for a batch of B views.
struct TokenOutput {
  num::Tensor cls;      // [B, D]
  num::Tensor patches;  // [B * g * g, D], image-major, row-major grid
  std::size_t batch = 0;
  std::size_t grid_side = 0;

  std::size_t dim() const { return cls.cols(); }
  /// Copy of the tokens detached from any graph.
  TokenOutput detached() const;
};

class VisionTransformer {
 public:
  /// Fresh randomly initialised network.
  static VisionTransformer create(const ViTConfig& cfg, num::Rng& rng);
  /// Binds a network to existing parameters (names must match `create`).
  VisionTransformer(ViTConfig cfg, num::ParamSet params);

  /// Encodes a batch of same-size images. Masked positions have their patch
  /// embedding replaced by the learned mask token before the first block.
  /// `masks` is empty or holds one spec per image. Drop path is active only
  /// when `drop_rng` is given and the configured rate is positive.
  TokenOutput forward(std::span<const Image> images, std::span<const MaskSpec> masks = {},
                      num::Rng* drop_rng = nullptr) const;

  /// Patch embeddings after mask replacement, [B * g * g, D].
  num::Tensor embed_patches(std::span<const Image> images,
                            std::span<const MaskSpec> masks = {}) const;

  const ViTConfig& config() const { return cfg_; }
  num::ParamSet& params() { return params_; }
  const num::ParamSet& params() const { return params_; }

  /// Same weights copied into leaves that never require gradients.
  VisionTransformer frozen_copy() const;

 private:
  struct Block {
    num::Tensor ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ls1;
    num::Tensor ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b, ls2;
  };

  void bind();

  ViTConfig cfg_;
  num::ParamSet params_;
  num::Tensor patch_w_, patch_b_, cls_token_, mask_token_, pos_cls_, pos_patch_;
  num::Tensor norm_g_, norm_b_;
  std::vector<Block> blocks_;
};

/// Flattens each p x p patch (channel-major) of every image into a row.
num::Tensor patchify(std::span<const Image> images, std::size_t patch_size);

}  // namespace ukd::vit

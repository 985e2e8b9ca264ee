#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "support/gradcheck.hpp"
#include "ukd/backbone/vit.hpp"
#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"

namespace {

using ukd::num::Rng;
using ukd::num::Tensor;
using ukd::vit::Image;
using ukd::vit::MaskSpec;
using ukd::vit::ViTConfig;
using ukd::vit::VisionTransformer;

Image random_image(std::size_t side, Rng& rng) {
  Image img(3, side, side);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

TEST(ViTConfig, Validation) {
  ViTConfig c;
  c.image_size = 15;
  EXPECT_THROW(c.validate(), ukd::ParameterError);
  c = ViTConfig{};
  c.heads = 5;
  EXPECT_THROW(c.validate(), ukd::ParameterError);
  c = ViTConfig{};
  c.drop_path_rate = 1.0;
  EXPECT_THROW(c.validate(), ukd::ParameterError);
  EXPECT_NO_THROW(ViTConfig::toy().validate());
  EXPECT_NO_THROW(ViTConfig::paper_fullscale().validate());
}

TEST(ViTConfig, FullScaleReference) {
  const ViTConfig c = ViTConfig::paper_fullscale();
  EXPECT_EQ(c.depth, 24u);
  EXPECT_EQ(c.dim, 1024u);
  EXPECT_EQ(c.patch_size, 14u);
  EXPECT_EQ(c.heads, 16u);
  EXPECT_DOUBLE_EQ(c.drop_path_rate, 0.4);
  EXPECT_DOUBLE_EQ(c.layer_scale_init, 1e-5);
  EXPECT_EQ(c.grid_side(), 16u);
  EXPECT_EQ(c.patch_count(), 256u);
}

TEST(ViTConfig, TokenCountLaw) {
  for (std::size_t p : {1u, 2u, 4u, 7u, 14u}) {
    for (std::size_t g : {1u, 3u, 16u}) {
      ViTConfig c;
      c.patch_size = p;
      c.image_size = p * g;
      EXPECT_EQ(c.patch_count(), (c.image_size / c.patch_size) * (c.image_size / c.patch_size));
    }
  }
}

TEST(VisionTransformer, ToyShapes) {
  Rng rng(1);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  std::vector<Image> imgs{random_image(16, rng), random_image(16, rng)};
  const auto out = net.forward(imgs);
  EXPECT_EQ(out.batch, 2u);
  EXPECT_EQ(out.grid_side, 4u);
  EXPECT_EQ(out.cls.shape(), (ukd::num::Shape{2, 32}));
  EXPECT_EQ(out.patches.shape(), (ukd::num::Shape{32, 32}));
  for (double v : out.patches.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(VisionTransformer, SizeMismatchIsDimensionError) {
  Rng rng(2);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  std::vector<Image> bad{random_image(15, rng)};
  EXPECT_THROW(net.forward(bad), ukd::DimensionError);
  std::vector<Image> mixed{random_image(16, rng), random_image(8, rng)};
  EXPECT_THROW(net.forward(mixed), ukd::DimensionError);
  Image gray(1, 16, 16);
  std::vector<Image> one_channel{gray};
  EXPECT_THROW(net.forward(one_channel), ukd::DimensionError);
}

TEST(VisionTransformer, SmallerViewsUseInterpolatedPositions) {
  Rng rng(3);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  std::vector<Image> local{random_image(8, rng)};
  const auto out = net.forward(local);
  EXPECT_EQ(out.grid_side, 2u);
  EXPECT_EQ(out.patches.rows(), 4u);
}

TEST(VisionTransformer, AllFalseMaskMatchesNoMask) {
  Rng rng(4);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  std::vector<Image> imgs{random_image(16, rng), random_image(16, rng)};
  std::vector<MaskSpec> masks{MaskSpec::none(4), MaskSpec::none(4)};
  const auto a = net.forward(imgs);
  const auto b = net.forward(imgs, masks);
  EXPECT_EQ(max_abs_diff(a.cls, b.cls), 0.0);
  EXPECT_EQ(max_abs_diff(a.patches, b.patches), 0.0);
}

TEST(VisionTransformer, MaskLocality) {
  Rng rng(5);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  Image img = random_image(16, rng);
  MaskSpec m = MaskSpec::none(4);
  m.mask[5] = 1;  // patch row 1, column 1 -> pixels [4, 8) x [4, 8)
  Image edited = img;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 4; y < 8; ++y)
      for (std::size_t x = 4; x < 8; ++x) edited.at(c, y, x) = 100.0 + rng.normal();
  std::vector<MaskSpec> masks{m};
  const Tensor a = net.embed_patches(std::vector<Image>{img}, masks);
  const Tensor b = net.embed_patches(std::vector<Image>{edited}, masks);
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
  const auto fa = net.forward(std::vector<Image>{img}, masks);
  const auto fb = net.forward(std::vector<Image>{edited}, masks);
  EXPECT_EQ(max_abs_diff(fa.patches, fb.patches), 0.0);
  // Unmasked, the same edit must change the embedding at that slot.
  const Tensor c = net.embed_patches(std::vector<Image>{img});
  const Tensor d = net.embed_patches(std::vector<Image>{edited});
  EXPECT_GT(max_abs_diff(c, d), 1e-3);
}

TEST(VisionTransformer, MaskedSlotHoldsMaskToken) {
  Rng rng(6);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  MaskSpec m = MaskSpec::none(4);
  m.mask[0] = 1;
  const Tensor e = net.embed_patches(std::vector<Image>{random_image(16, rng)},
                                     std::vector<MaskSpec>{m});
  const Tensor& token = net.params().get("mask_token");
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(e.at(j), token.values()[j]);
}

TEST(VisionTransformer, MaskGridMismatch) {
  Rng rng(7);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  std::vector<MaskSpec> masks{MaskSpec::none(3)};
  EXPECT_THROW(net.forward(std::vector<Image>{random_image(16, rng)}, masks),
               ukd::DimensionError);
}

TEST(VisionTransformer, DeterministicForward) {
  Rng a(8), b(8);
  const auto n1 = VisionTransformer::create(ViTConfig::toy(), a);
  const auto n2 = VisionTransformer::create(ViTConfig::toy(), b);
  Rng img_rng(9);
  std::vector<Image> imgs{random_image(16, img_rng)};
  const auto o1 = n1.forward(imgs);
  const auto o2 = n2.forward(imgs);
  EXPECT_EQ(max_abs_diff(o1.cls, o2.cls), 0.0);
  EXPECT_EQ(max_abs_diff(o1.patches, o2.patches), 0.0);
  const auto o3 = n1.forward(imgs);
  EXPECT_EQ(max_abs_diff(o1.patches, o3.patches), 0.0);
}

TEST(VisionTransformer, DropPathOnlyWithRng) {
  ViTConfig cfg = ViTConfig::toy();
  cfg.drop_path_rate = 0.5;
  Rng rng(10);
  const auto net = VisionTransformer::create(cfg, rng);
  std::vector<Image> imgs{random_image(16, rng), random_image(16, rng)};
  const auto a = net.forward(imgs);
  const auto b = net.forward(imgs);
  EXPECT_EQ(max_abs_diff(a.cls, b.cls), 0.0);
  Rng d1(11), d2(11);
  const auto c = net.forward(imgs, {}, &d1);
  const auto d = net.forward(imgs, {}, &d2);
  EXPECT_EQ(max_abs_diff(c.cls, d.cls), 0.0);
}

TEST(VisionTransformer, FrozenCopyHasNoGradients) {
  Rng rng(12);
  const auto net = VisionTransformer::create(ViTConfig::toy(), rng);
  const auto frozen = net.frozen_copy();
  for (const auto& [name, t] : frozen.params()) EXPECT_FALSE(t.requires_grad()) << name;
  const auto out = frozen.forward(std::vector<Image>{random_image(16, rng)});
  EXPECT_FALSE(out.cls.requires_grad());
}

TEST(VisionTransformer, GradientMatchesFiniteDifferences) {
  ViTConfig cfg = ViTConfig::toy();
  cfg.depth = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.image_size = 8;
  Rng rng(13);
  const auto net = VisionTransformer::create(cfg, rng);
  std::vector<Image> imgs{random_image(8, rng)};
  MaskSpec m = MaskSpec::none(2);
  m.mask[1] = 1;
  std::vector<MaskSpec> masks{m};

  const std::vector<std::string> names{"patch_embed.w", "mask_token", "pos_patch",
                                       "blocks.0.qkv.w", "blocks.0.ls2", "norm.g"};
  std::vector<Tensor> inputs;
  for (const auto& n : names) inputs.push_back(net.params().get(n).detach());
  auto f = [&](const std::vector<Tensor>& leaves) {
    ukd::num::ParamSet ps = net.params().clone(false);
    for (std::size_t i = 0; i < names.size(); ++i) ps.get(names[i]) = leaves[i];
    VisionTransformer probe(cfg, ps);
    const auto out = probe.forward(imgs, masks);
    return ukd::num::add(ukd::num::sum(ukd::num::tanh(out.patches)),
                         ukd::num::sum(ukd::num::mul(out.cls, out.cls)));
  };
  EXPECT_LT(ukd::testing::grad_check(f, inputs), 1e-5);
}

TEST(SampleMask, EmptyRange) {
  Rng rng(14);
  const auto m = ukd::vit::sample_mask(4, {0.0, 0.0}, rng);
  EXPECT_EQ(m.masked_count(), 0u);
  EXPECT_TRUE(m.empty());
}

TEST(SampleMask, HalfOfFourByFour) {
  Rng rng(15);
  const auto m = ukd::vit::sample_mask(4, {0.5, 0.5}, rng);
  EXPECT_EQ(m.masked_count(), 8u);
}

TEST(SampleMask, RatioInvariant) {
  Rng rng(16);
  for (int i = 0; i < 200; ++i) {
    const std::size_t g = 1 + rng.uniform_index(12);
    const auto m = ukd::vit::sample_mask(g, {0.1, 0.5}, rng);
    EXPECT_GE(m.ratio, 0.1);
    EXPECT_LE(m.ratio, 0.5);
    const double frac = static_cast<double>(m.masked_count()) / static_cast<double>(g * g);
    EXPECT_LE(std::abs(frac - m.ratio), 1.0 / static_cast<double>(g * g) + 1e-12);
  }
}

TEST(SampleMask, Deterministic) {
  Rng a(17), b(17);
  const auto m1 = ukd::vit::sample_mask(8, {0.1, 0.5}, a);
  const auto m2 = ukd::vit::sample_mask(8, {0.1, 0.5}, b);
  EXPECT_EQ(m1.mask, m2.mask);
  EXPECT_EQ(m1.ratio, m2.ratio);
}

TEST(SampleMask, Errors) {
  Rng rng(18);
  EXPECT_THROW(ukd::vit::sample_mask(0, {0.1, 0.2}, rng), ukd::ParameterError);
  EXPECT_THROW(ukd::vit::sample_mask(4, {-0.1, 0.2}, rng), ukd::ParameterError);
  EXPECT_THROW(ukd::vit::sample_mask(4, {0.3, 1.2}, rng), ukd::ParameterError);
}

TEST(Patchify, LayoutIsChannelMajorWithinPatch) {
  Image img(3, 4, 4);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i);
  const Tensor rows = ukd::vit::patchify(std::vector<Image>{img}, 2);
  EXPECT_EQ(rows.shape(), (ukd::num::Shape{4, 12}));
  // Patch (0, 1), channel 1, pixel (1, 0) -> image (1, 1, 2).
  EXPECT_EQ(rows.at(1 * 12 + 4 + 2), img.at(1, 1, 2));
}

}  // namespace

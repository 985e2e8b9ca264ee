#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ukd/backbone/vit.hpp"
#include "ukd/io/feature_store.hpp"

namespace ukd::kd {

/// Three expert slots. Reference roles: a = classification expert (UNI),
/// b = report-generation expert (Phikon), c = VQA expert (CONCH).
enum class TeacherId { kA, kB, kC };

inline constexpr std::array<TeacherId, 3> kAllTeachers{TeacherId::kA, TeacherId::kB,
                                                       TeacherId::kC};

std::string to_string(TeacherId id);
/// Accepts "a", "teacher_a", "uni" and the like; ConfigurationError otherwise.
TeacherId parse_teacher_id(const std::string& name);

/// Frozen source of expert tokens for a batch of views. Outputs never carry
/// gradients and depend only on the inputs.
class TeacherProvider {
 public:
  virtual ~TeacherProvider() = default;

  virtual std::size_t dim() const = 0;
  /// `images` and `view_keys` describe the same views in the same order.
  virtual vit::TokenOutput encode(std::span<const vit::Image> images,
                                  std::span<const std::string> view_keys) const = 0;
};

/// Randomly initialised, never-updated ViT standing in for a pretrained
/// expert. Different dims and patch sizes exercise the adapters and grid
/// alignment.
class FrozenNetworkTeacher final : public TeacherProvider {
 public:
  FrozenNetworkTeacher(const vit::ViTConfig& cfg, std::uint64_t seed);
  explicit FrozenNetworkTeacher(vit::VisionTransformer net);

  std::size_t dim() const override { return net_.config().dim; }
  vit::TokenOutput encode(std::span<const vit::Image> images,
                          std::span<const std::string> view_keys) const override;

  const vit::VisionTransformer& network() const { return net_; }

  /// Default stand-in configurations at toy scale.
  static vit::ViTConfig toy_config(TeacherId id);

 private:
  vit::VisionTransformer net_;
};

/// Serves precomputed tokens from a FeatureStore. Each row holds one view as
/// [CLS | patch 0 | ... | patch g^2-1], each of width `token_dim`; rows are
/// located through the manifest's view_key field.
class FeatureFileTeacher final : public TeacherProvider {
 public:
  FeatureFileTeacher(io::FeatureStore store, std::span<const io::ManifestRecord> manifest,
                     std::size_t token_dim);
  static FeatureFileTeacher open(const std::filesystem::path& store_path,
                                 std::size_t token_dim);

  std::size_t dim() const override { return token_dim_; }
  std::size_t grid_side() const { return grid_side_; }
  vit::TokenOutput encode(std::span<const vit::Image> images,
                          std::span<const std::string> view_keys) const override;

 private:
  io::FeatureStore store_;
  std::unordered_map<std::string, std::uint64_t> rows_;
  std::size_t token_dim_;
  std::size_t grid_side_;
};

/// Flattens TokenOutput rows for one view into the FeatureFileTeacher layout.
std::vector<double> pack_view_tokens(const vit::TokenOutput& out, std::size_t index);

using TeacherSet = std::unordered_map<TeacherId, std::shared_ptr<const TeacherProvider>>;

/// Frozen random-network teachers for all three slots.
TeacherSet make_random_teachers(std::uint64_t seed);

}  // namespace ukd::kd

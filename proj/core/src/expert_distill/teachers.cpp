#include "ukd/expert_distill/teachers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ukd/errors.hpp"

namespace ukd::kd {

std::string to_string(TeacherId id) {
  switch (id) {
    case TeacherId::kA: return "teacher_a";
    case TeacherId::kB: return "teacher_b";
    case TeacherId::kC: return "teacher_c";
  }
  return "teacher_?";
}

TeacherId parse_teacher_id(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "a" || s == "teacher_a" || s == "uni") return TeacherId::kA;
  if (s == "b" || s == "teacher_b" || s == "phikon") return TeacherId::kB;
  if (s == "c" || s == "teacher_c" || s == "conch") return TeacherId::kC;
  throw ConfigurationError("unknown teacher \"" + name + "\"");
}

FrozenNetworkTeacher::FrozenNetworkTeacher(const vit::ViTConfig& cfg, std::uint64_t seed)
    : net_([&] {
        num::Rng rng(seed);
        return vit::VisionTransformer::create(cfg, rng).frozen_copy();
      }()) {}

FrozenNetworkTeacher::FrozenNetworkTeacher(vit::VisionTransformer net)
    : net_(net.frozen_copy()) {}

vit::TokenOutput FrozenNetworkTeacher::encode(std::span<const vit::Image> images,
                                              std::span<const std::string>) const {
  return net_.forward(images).detached();
}

vit::ViTConfig FrozenNetworkTeacher::toy_config(TeacherId id) {
  vit::ViTConfig c = vit::ViTConfig::toy();
  c.depth = 1;
  c.layer_scale_init = 1.0;
  switch (id) {
    case TeacherId::kA:
      c.dim = 32;
      c.heads = 4;
      c.patch_size = 2;
      break;
    case TeacherId::kB:
      c.dim = 24;
      c.heads = 4;
      c.patch_size = 4;
      break;
    case TeacherId::kC:
      c.dim = 16;
      c.heads = 2;
      c.patch_size = 8;
      break;
  }
  return c;
}

FeatureFileTeacher::FeatureFileTeacher(io::FeatureStore store,
                                       std::span<const io::ManifestRecord> manifest,
                                       std::size_t token_dim)
    : store_(std::move(store)), token_dim_(token_dim) {
  if (token_dim_ == 0 || store_.dim() % token_dim_ != 0) {
    throw DimensionError("feature teacher: row width " + std::to_string(store_.dim()) +
                         " is not a multiple of token dim " + std::to_string(token_dim_));
  }
  const std::size_t tokens = store_.dim() / token_dim_;
  const auto g = tokens < 2 ? std::size_t{0}
                            : static_cast<std::size_t>(
                                  std::llround(std::sqrt(static_cast<double>(tokens - 1))));
  if (g == 0 || g * g != tokens - 1) {
    throw DimensionError("feature teacher: " + std::to_string(tokens) +
                         " tokens per row are not one CLS plus a square grid");
  }
  grid_side_ = g;
  io::validate_manifest(manifest, store_.count());
  for (const auto& r : manifest) {
    if (!r.view_key) continue;
    if (!rows_.emplace(*r.view_key, r.row_index).second) {
      throw CorruptionError("feature teacher: duplicate view key " + *r.view_key);
    }
  }
}

FeatureFileTeacher FeatureFileTeacher::open(const std::filesystem::path& store_path,
                                            std::size_t token_dim) {
  auto store = io::FeatureStore::read(store_path);
  const auto manifest = io::read_manifest(io::manifest_path_for(store_path));
  return FeatureFileTeacher(std::move(store), manifest, token_dim);
}

vit::TokenOutput FeatureFileTeacher::encode(std::span<const vit::Image>,
                                            std::span<const std::string> view_keys) const {
  const std::size_t b = view_keys.size(), d = token_dim_, gg = grid_side_ * grid_side_;
  std::vector<double> cls(b * d), patches(b * gg * d);
  for (std::size_t i = 0; i < b; ++i) {
    const auto it = rows_.find(view_keys[i]);
    if (it == rows_.end()) {
      throw ConfigurationError("feature teacher: no features for view " + view_keys[i]);
    }
    const auto row = store_.row(it->second);
    std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d), cls.begin() + i * d);
    std::copy(row.begin() + static_cast<std::ptrdiff_t>(d), row.end(),
              patches.begin() + i * gg * d);
  }
  vit::TokenOutput out;
  out.cls = num::Tensor::from({b, d}, std::move(cls));
  out.patches = num::Tensor::from({b * gg, d}, std::move(patches));
  out.batch = b;
  out.grid_side = grid_side_;
  return out;
}

std::vector<double> pack_view_tokens(const vit::TokenOutput& out, std::size_t index) {
  const std::size_t d = out.dim(), gg = out.grid_side * out.grid_side;
  if (index >= out.batch) throw DimensionError("pack_view_tokens: index out of range");
  std::vector<double> row;
  row.reserve((1 + gg) * d);
  const auto c = out.cls.values().subspan(index * d, d);
  row.insert(row.end(), c.begin(), c.end());
  const auto p = out.patches.values().subspan(index * gg * d, gg * d);
  row.insert(row.end(), p.begin(), p.end());
  return row;
}

TeacherSet make_random_teachers(std::uint64_t seed) {
  TeacherSet set;
  num::Rng root(seed);
  for (TeacherId id : kAllTeachers) {
    const std::uint64_t s = root.substream(static_cast<std::uint64_t>(id) + 1).seed();
    set[id] = std::make_shared<FrozenNetworkTeacher>(FrozenNetworkTeacher::toy_config(id), s);
  }
  return set;
}

}  // namespace ukd::kd

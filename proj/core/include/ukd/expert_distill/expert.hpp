#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ukd/backbone/vit.hpp"
#include "ukd/expert_distill/teachers.hpp"
#include "ukd/numerics/param_set.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::kd {

struct DistillWeights {
  double alpha = 1.0;    // CLS, teacher a
  double beta = 0.5;     // CLS, teacher b
  double gamma = 1.0;    // CLS, teacher c
  double mu = 0.25;      // patch, teacher a
  double lambda = 0.125; // patch, teacher b
  double phi = 0.0;      // patch, teacher c
  double eta = 1.0;      // patch cosine coefficient
  double theta = 1.0;    // patch smooth-L1 coefficient

  void validate() const;
  double cls_weight(TeacherId id) const;
  double patch_weight(TeacherId id) const;
  /// A teacher contributes only if one of its weights is nonzero.
  bool uses(TeacherId id) const { return cls_weight(id) != 0.0 || patch_weight(id) != 0.0; }

  static DistillWeights reference() { return DistillWeights{}; }
  static DistillWeights disabled();
};

/// Student-side linear maps into each teacher's embedding space, separate for
/// CLS and patch tokens.
class ProjectionAdapters {
 public:
  ProjectionAdapters() = default;
  static ProjectionAdapters create(std::size_t student_dim,
                                   const std::map<TeacherId, std::size_t>& teacher_dims,
                                   num::Rng& rng);
  /// Rebinds to existing parameters named "<teacher>.cls.w" and so on.
  ProjectionAdapters(std::size_t student_dim, num::ParamSet params);

  bool has(TeacherId id) const;
  std::size_t teacher_dim(TeacherId id) const;
  num::Tensor project_cls(TeacherId id, const num::Tensor& cls) const;
  num::Tensor project_patches(TeacherId id, const num::Tensor& patches) const;

  num::ParamSet& params() { return params_; }
  const num::ParamSet& params() const { return params_; }
  std::size_t student_dim() const { return student_dim_; }

 private:
  const num::Tensor& param(TeacherId id, const char* which) const;

  std::size_t student_dim_ = 0;
  num::ParamSet params_;
};

/// Bilinear resampling of one g_t x g_t grid of rows onto g_s x g_s.
num::Tensor align_grid(const num::Tensor& tokens, std::size_t g_t, std::size_t g_s);
/// align_grid applied image by image to a batch of token outputs.
num::Tensor align_patches(const vit::TokenOutput& teacher, std::size_t g_s);

/// Teacher outputs on the global views, one TokenOutput per view.
using TeacherTokens = std::map<TeacherId, std::vector<vit::TokenOutput>>;

/// Per-teacher distances on one view, for logging.
struct ExpertTerms {
  std::map<TeacherId, double> cls_distance;
  std::map<TeacherId, double> patch_distance;
};

/// Weighted CLS and patch distances between adapter-projected student tokens
/// and each teacher, averaged over the global views. Terms with zero weight
/// are not evaluated at all.
num::Tensor expert_loss(std::span<const vit::TokenOutput> student, const TeacherTokens& teachers,
                        const DistillWeights& w, const ProjectionAdapters& adapters,
                        ExpertTerms* terms = nullptr);

struct LossWeights {
  double dino = 1.0;
  double ibot = 1.0;
  double expert = 1.0;
};

struct LossComponents {
  num::Tensor dino;
  num::Tensor ibot;
  num::Tensor expert;
};

struct LossBreakdown {
  num::Tensor total;
  double dino = 0.0;
  double ibot = 0.0;
  double expert = 0.0;
  double total_value = 0.0;
};

/// Weighted sum of the objective components. A non-finite component raises
/// TrainingAbort naming it; `step` is reported as the last good step.
LossBreakdown total_pretrain_loss(const LossComponents& c, const LossWeights& w,
                                  long long last_good_step = -1);

}  // namespace ukd::kd

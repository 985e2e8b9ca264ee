#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ukd/backbone/vit.hpp"
#include "ukd/data/textures.hpp"
#include "ukd/expert_distill/expert.hpp"
#include "ukd/expert_distill/teachers.hpp"
#include "ukd/pretrain/checkpoint.hpp"
#include "ukd/pretrain/optim.hpp"
#include "ukd/self_distill/dino.hpp"
#include "ukd/self_distill/views.hpp"

namespace ukd::train {

struct PretrainConfig {
  TrainConfig train;
  vit::ViTConfig vit;
  ssl::DinoHeadConfig head;
  ssl::CropConfig crops;
  vit::RatioRange mask_ratio{0.1, 0.5};
  kd::DistillWeights distill;
  kd::LossWeights loss;
  /// Seed of the frozen random-network teachers.
  std::uint64_t teacher_seed = 7;

  void validate() const;
  static PretrainConfig toy();
  static PretrainConfig paper_fullscale();
};

nlohmann::ordered_json to_json(const PretrainConfig& cfg);
/// Strict: unknown or missing keys raise ConfigurationError.
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

struct StepReport {
  std::size_t step = 0;
  double lr = 0.0;
  double dino = 0.0;
  double ibot = 0.0;
  double expert = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  /// Mean cosine between adapter-projected student CLS and teacher-a CLS on
  /// this batch, when teacher a is active.
  std::optional<double> teacher_a_cls_cosine;
};

nlohmann::ordered_json to_json(const StepReport& r);

/// Student, heads, EMA teacher, adapters, optimizer and centering state for
/// one pretraining run. All state is rounded to float32 after every update.
class Pretrainer {
 public:
  Pretrainer(PretrainConfig cfg, kd::TeacherSet teachers);
  /// Rebuilds a run from a checkpoint written by `checkpoint()`.
  static Pretrainer from_checkpoint(const Checkpoint& ck, kd::TeacherSet teachers);

  /// One optimizer step on the next batch from `data`. Raises TrainingAbort
  /// (with the last completed step) on a non-finite loss or gradient.
  StepReport train_step(const data::ImageDataset& data);

  /// Batch indices drawn for a given step.
  std::vector<std::size_t> batch_indices(std::size_t step, std::size_t dataset_size) const;

  std::size_t step() const { return step_; }
  const PretrainConfig& config() const { return cfg_; }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ck);

  /// CLS features of whole images from the student or the EMA teacher.
  std::vector<std::vector<double>> embed(std::span<const vit::Image> images, bool teacher) const;
  /// Full token output of whole images (constant tensors).
  vit::TokenOutput encode(std::span<const vit::Image> images, bool teacher) const;
  /// Mean cosine between projected student CLS and a teacher's CLS on whole
  /// images.
  double teacher_cls_cosine(std::span<const vit::Image> images, kd::TeacherId id) const;

  const vit::VisionTransformer& student() const { return student_; }
  const vit::VisionTransformer& teacher() const { return teacher_; }
  const num::ParamSet& trainable() const { return trainable_; }
  const num::ParamSet& ema_params() const { return teacher_params_; }

 private:
  void build_param_views();

  PretrainConfig cfg_;
  kd::TeacherSet teachers_;
  vit::VisionTransformer student_, teacher_;
  ssl::DinoHead cls_head_, patch_head_, teacher_cls_head_, teacher_patch_head_;
  kd::ProjectionAdapters adapters_;
  ssl::CenterState cls_center_, patch_center_;
  AdamW optimizer_;
  num::Rng rng_;
  std::size_t step_ = 0;

  num::ParamSet trainable_;       // student, heads, adapters
  num::ParamSet ema_source_;      // student and heads, named like teacher_params_
  num::ParamSet teacher_params_;  // EMA copies
};

}  // namespace ukd::train

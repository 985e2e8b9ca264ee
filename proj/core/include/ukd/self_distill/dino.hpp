#pragma once

#include <span>
#include <vector>

#include "ukd/backbone/vit.hpp"
#include "ukd/numerics/param_set.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::ssl {

struct DinoHeadConfig {
  std::size_t in_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t bottleneck_dim = 32;
  std::size_t prototypes = 256;
  double student_temp = 0.1;
  double teacher_temp = 0.04;
  double center_momentum = 0.9;

  void validate() const;
};

/// MLP -> bottleneck -> L2 normalise -> weight-normalised prototype layer.
/// Logits are cosine similarities to the K prototypes.
class DinoHead {
 public:
  static DinoHead create(const DinoHeadConfig& cfg, num::Rng& rng);
  DinoHead(DinoHeadConfig cfg, num::ParamSet params);

  /// x[N, in_dim] -> logits[N, K].
  num::Tensor forward(const num::Tensor& x) const;

  const DinoHeadConfig& config() const { return cfg_; }
  num::ParamSet& params() { return params_; }
  const num::ParamSet& params() const { return params_; }
  DinoHead frozen_copy() const { return DinoHead(cfg_, params_.clone(false)); }

 private:
  DinoHeadConfig cfg_;
  num::ParamSet params_;
};

struct CenterState {
  std::vector<double> center;

  static CenterState zeros(std::size_t k) { return CenterState{std::vector<double>(k, 0.0)}; }
  friend bool operator==(const CenterState&, const CenterState&) = default;
};

/// center <- m * center + (1 - m) * mean over every row of every batch.
CenterState update_center(const CenterState& center, std::span<const num::Tensor> teacher_logits,
                          double momentum);

/// Softmax((t - center) / teacher_temp) per row, as a constant tensor.
num::Tensor teacher_probabilities(const num::Tensor& teacher_logits, const CenterState& center,
                                  double teacher_temp);

/// Cross-view [CLS] objective. `student_logits` lists one [B, K] tensor per
/// view with the two global views first, in the same order as
/// `teacher_logits`. Each teacher global is paired with every student view
/// except its own, and the per-pair cross-entropies are averaged.
num::Tensor dino_loss(std::span<const num::Tensor> student_logits,
                      std::span<const num::Tensor> teacher_logits, const DinoHeadConfig& cfg,
                      const CenterState& center);

/// Masked-token objective. For every global view i, student_patch_logits[i]
/// ([B * g^2, K]) comes from the masked view and teacher_patch_logits[i] from
/// the unmasked one; masks[i] holds B masks. Averages cross-entropy over all
/// masked positions; zero when nothing is masked.
num::Tensor ibot_loss(std::span<const num::Tensor> student_patch_logits,
                      std::span<const num::Tensor> teacher_patch_logits,
                      std::span<const std::vector<vit::MaskSpec>> masks,
                      const DinoHeadConfig& cfg, const CenterState& patch_center);

/// Number of positions ibot_loss averages over.
std::size_t masked_position_count(std::span<const std::vector<vit::MaskSpec>> masks);

}  // namespace ukd::ssl

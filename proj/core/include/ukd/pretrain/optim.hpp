#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ukd/numerics/param_set.hpp"

namespace ukd::train {

struct TrainConfig {
  double teacher_momentum = 0.992;
  std::size_t batch_size = 32;
  double base_lr = 2e-3;
  double min_lr = 1e-6;
  std::size_t warmup_iters = 100;
  std::size_t total_iters = 1000;
  double grad_clip = 3.0;
  double weight_decay = 0.04;
  std::uint64_t seed = 0;

  void validate() const;
  static TrainConfig toy();
  /// Reference schedule for the 1024-dim model (batch 1536, 500k iterations).
  static TrainConfig paper_fullscale();
};

/// Linear warmup from 0 to base_lr over warmup_iters, then cosine decay to
/// min_lr at total_iters.
double lr_at(std::size_t step, const TrainConfig& cfg);

/// theta_t <- m * theta_t + (1 - m) * theta_s for every entry.
/// Structure mismatch raises CorruptionError.
void ema_update(num::ParamSet& teacher, const num::ParamSet& student, double momentum);

/// Global L2 norm of all gradients (missing gradients count as zero).
double grad_norm(const num::ParamSet& params);
/// Scales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(num::ParamSet& params, double max_norm);

/// Adam with decoupled weight decay. Moments are kept per parameter name.
/// With `round_state`, parameters and moments are rounded to float32 after
/// each step so they survive float32 checkpoints exactly.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool round_state = false;
  };

  AdamW() = default;
  explicit AdamW(Options opt) : opt_(opt) {}

  /// Applies one update with learning rate `lr`. Parameters listed in
  /// `no_decay` skip weight decay.
  void step(num::ParamSet& params, double lr);
  void set_decay_filter(std::vector<std::string> no_decay) { no_decay_ = std::move(no_decay); }

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::map<std::string, std::vector<double>>& first_moments() { return m_; }
  std::map<std::string, std::vector<double>>& second_moments() { return v_; }
  const std::map<std::string, std::vector<double>>& first_moments() const { return m_; }
  const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }
  const Options& options() const { return opt_; }

 private:
  bool decays(const std::string& name) const;

  Options opt_;
  std::uint64_t t_ = 0;
  std::vector<std::string> no_decay_;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace ukd::train

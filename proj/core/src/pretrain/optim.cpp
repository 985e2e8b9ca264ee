#include "ukd/pretrain/optim.hpp"

#include <cmath>
#include <numbers>

#include "ukd/errors.hpp"

namespace ukd::train {

void TrainConfig::validate() const {
  if (!(teacher_momentum >= 0.0 && teacher_momentum <= 1.0)) {
    throw ParameterError("teacher momentum must lie in [0, 1]");
  }
  if (!(base_lr >= 0.0) || !(min_lr >= 0.0) || min_lr > base_lr) {
    throw ParameterError("learning rates must satisfy 0 <= min_lr <= base_lr");
  }
  if (total_iters == 0 || warmup_iters > total_iters) {
    throw ParameterError("need 0 < total_iters and warmup_iters <= total_iters");
  }
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  if (!(grad_clip > 0.0)) throw ParameterError("grad_clip must be positive");
  if (!(weight_decay >= 0.0)) throw ParameterError("weight decay must be non-negative");
}

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

TrainConfig TrainConfig::paper_fullscale() {
  TrainConfig c;
  c.teacher_momentum = 0.992;
  c.batch_size = 1536;
  c.base_lr = 4e-4;
  c.min_lr = 1e-6;
  c.warmup_iters = 50000;
  c.total_iters = 500000;
  c.grad_clip = 3.0;
  return c;
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_iters) {
    throw ParameterError("step " + std::to_string(step) + " outside schedule of " +
                         std::to_string(cfg.total_iters) + " iterations");
  }
  if (step < cfg.warmup_iters) {
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_iters);
  }
  if (step == cfg.warmup_iters) return cfg.base_lr;
  if (step == cfg.total_iters) return cfg.min_lr;
  const double progress = static_cast<double>(step - cfg.warmup_iters) /
                          static_cast<double>(cfg.total_iters - cfg.warmup_iters);
  return cfg.min_lr +
         0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void ema_update(num::ParamSet& teacher, const num::ParamSet& student, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw ParameterError("EMA momentum must lie in [0, 1]");
  }
  if (!teacher.same_structure(student)) {
    throw CorruptionError("EMA teacher and student parameter trees differ");
  }
  auto s = student.begin();
  for (auto t = teacher.begin(); t != teacher.end(); ++t, ++s) {
    auto tv = t->second.mutable_values();
    const auto sv = s->second.values();
    for (std::size_t i = 0; i < tv.size(); ++i) {
      tv[i] = momentum * tv[i] + (1.0 - momentum) * sv[i];
    }
  }
}

double grad_norm(const num::ParamSet& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(num::ParamSet& params, double max_norm) {
  const double norm = grad_norm(params);
  if (std::isfinite(max_norm) && norm > max_norm) {
    const double factor = max_norm / (norm + 1e-6);
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      for (double& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

bool AdamW::decays(const std::string& name) const {
  for (const auto& suffix : no_decay_) {
    if (name.ends_with(suffix)) return false;
  }
  return true;
}

void AdamW::step(num::ParamSet& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  auto round = [this](double x) {
    return opt_.round_state ? static_cast<double>(static_cast<float>(x)) : x;
  };
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    m.resize(p.numel(), 0.0);
    v.resize(p.numel(), 0.0);
    auto values = p.mutable_values();
    const bool has_grad = p.has_grad();
    const double wd = decays(name) ? opt_.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? p.grad()[i] : 0.0;
      m[i] = round(opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g);
      v[i] = round(opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g);
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt_.eps);
      values[i] = round(values[i] - lr * (update + wd * values[i]));
    }
  }
}

}  // namespace ukd::train

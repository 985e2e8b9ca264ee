#include "ukd/self_distill/dino.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"

namespace ukd::ssl {

using num::Tensor;

void DinoHeadConfig::validate() const {
  if (!(student_temp > 0.0) || !(teacher_temp > 0.0)) {
    throw ParameterError("DINO temperatures must be positive");
  }
  if (!(center_momentum >= 0.0 && center_momentum < 1.0)) {
    throw ParameterError("center momentum must lie in [0, 1)");
  }
  if (in_dim == 0 || hidden_dim == 0 || bottleneck_dim == 0 || prototypes == 0) {
    throw ParameterError("DINO head dimensions must be positive");
  }
}

DinoHead DinoHead::create(const DinoHeadConfig& cfg, num::Rng& rng) {
  cfg.validate();
  num::ParamSet ps;
  ps.add("mlp.0.w", num::init_xavier(cfg.in_dim, cfg.hidden_dim, rng));
  ps.add("mlp.0.b", Tensor::zeros({cfg.hidden_dim}, true));
  ps.add("mlp.1.w", num::init_xavier(cfg.hidden_dim, cfg.hidden_dim, rng));
  ps.add("mlp.1.b", Tensor::zeros({cfg.hidden_dim}, true));
  ps.add("mlp.2.w", num::init_xavier(cfg.hidden_dim, cfg.bottleneck_dim, rng));
  ps.add("mlp.2.b", Tensor::zeros({cfg.bottleneck_dim}, true));
  ps.add("prototypes", num::init_normal({cfg.prototypes, cfg.bottleneck_dim}, 1.0, rng));
  return DinoHead(cfg, std::move(ps));
}

DinoHead::DinoHead(DinoHeadConfig cfg, num::ParamSet params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

Tensor DinoHead::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != cfg_.in_dim) {
    throw DimensionError("DinoHead: expected [N, " + std::to_string(cfg_.in_dim) + "], got " +
                         num::shape_string(x.shape()));
  }
  Tensor h = num::gelu(num::linear(x, params_.get("mlp.0.w"), params_.get("mlp.0.b")));
  h = num::gelu(num::linear(h, params_.get("mlp.1.w"), params_.get("mlp.1.b")));
  h = num::linear(h, params_.get("mlp.2.w"), params_.get("mlp.2.b"));
  Tensor z = num::l2_normalize(h);
  Tensor protos = num::l2_normalize(params_.get("prototypes"));
  return num::matmul(z, num::transpose(protos));
}

CenterState update_center(const CenterState& center, std::span<const Tensor> teacher_logits,
                          double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ParameterError("center momentum must lie in [0, 1)");
  }
  const std::size_t k = center.center.size();
  std::vector<double> batch_mean(k, 0.0);
  std::size_t rows = 0;
  for (const Tensor& t : teacher_logits) {
    if (t.cols() != k) {
      throw DimensionError("update_center: logits width " + std::to_string(t.cols()) +
                           " vs center " + std::to_string(k));
    }
    const auto v = t.values();
    const std::size_t n = t.numel() / k;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < k; ++j) batch_mean[j] += v[r * k + j];
    rows += n;
  }
  if (rows == 0) return center;
  CenterState out;
  out.center.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    out.center[j] = momentum * center.center[j] +
                    (1.0 - momentum) * (batch_mean[j] / static_cast<double>(rows));
  }
  return out;
}

Tensor teacher_probabilities(const Tensor& teacher_logits, const CenterState& center,
                             double teacher_temp) {
  const std::size_t k = teacher_logits.cols();
  if (center.center.size() != k) {
    throw DimensionError("teacher logits width " + std::to_string(k) + " vs center " +
                         std::to_string(center.center.size()));
  }
  std::vector<double> v(teacher_logits.values().begin(), teacher_logits.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= center.center[i % k];
  return num::softmax(Tensor::from(teacher_logits.shape(), std::move(v)), -1, teacher_temp);
}

Tensor dino_loss(std::span<const Tensor> student_logits, std::span<const Tensor> teacher_logits,
                 const DinoHeadConfig& cfg, const CenterState& center) {
  cfg.validate();
  if (teacher_logits.empty() || student_logits.empty()) {
    throw ParameterError("dino_loss needs at least one teacher and one student view");
  }
  const std::size_t k = teacher_logits.front().cols();
  const num::Shape shape = teacher_logits.front().shape();
  for (const auto* group : {&student_logits, &teacher_logits}) {
    for (const Tensor& t : *group) {
      if (t.cols() != k) {
        throw DimensionError("dino_loss: prototype count mismatch " + std::to_string(t.cols()) +
                             " vs " + std::to_string(k));
      }
      if (t.shape() != shape) {
        throw DimensionError("dino_loss: view batch shape mismatch " +
                             num::shape_string(t.shape()) + " vs " + num::shape_string(shape));
      }
    }
  }
  std::vector<Tensor> targets;
  for (const Tensor& t : teacher_logits) {
    targets.push_back(teacher_probabilities(t.detach(), center, cfg.teacher_temp));
  }
  std::vector<Tensor> log_q;
  for (const Tensor& s : student_logits) log_q.push_back(num::log_softmax(s, -1, cfg.student_temp));

  Tensor total;
  std::size_t pairs = 0;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    for (std::size_t si = 0; si < log_q.size(); ++si) {
      if (si == ti) continue;
      Tensor ce = num::cross_entropy(targets[ti], log_q[si]);
      total = total.defined() ? num::add(total, ce) : ce;
      ++pairs;
    }
  }
  if (pairs == 0) throw ParameterError("dino_loss: no cross-view pairs");
  return num::scale(total, 1.0 / static_cast<double>(pairs));
}

std::size_t masked_position_count(std::span<const std::vector<vit::MaskSpec>> masks) {
  std::size_t n = 0;
  for (const auto& view : masks)
    for (const auto& m : view) n += m.masked_count();
  return n;
}

Tensor ibot_loss(std::span<const Tensor> student_patch_logits,
                 std::span<const Tensor> teacher_patch_logits,
                 std::span<const std::vector<vit::MaskSpec>> masks, const DinoHeadConfig& cfg,
                 const CenterState& patch_center) {
  cfg.validate();
  if (student_patch_logits.size() != teacher_patch_logits.size() ||
      student_patch_logits.size() != masks.size()) {
    throw DimensionError("ibot_loss: student, teacher and mask view counts differ");
  }
  std::vector<Tensor> student_rows, teacher_rows;
  for (std::size_t v = 0; v < masks.size(); ++v) {
    const Tensor& s = student_patch_logits[v];
    const Tensor& t = teacher_patch_logits[v];
    if (s.shape() != t.shape()) {
      throw DimensionError("ibot_loss: student " + num::shape_string(s.shape()) +
                           " vs teacher " + num::shape_string(t.shape()));
    }
    std::vector<std::size_t> rows;
    std::size_t offset = 0;
    for (const vit::MaskSpec& m : masks[v]) {
      if (m.mask.size() != m.grid_side * m.grid_side) {
        throw DimensionError("ibot_loss: malformed mask");
      }
      for (std::size_t j = 0; j < m.mask.size(); ++j) {
        if (m.mask[j]) rows.push_back(offset + j);
      }
      offset += m.mask.size();
    }
    if (offset != s.rows()) {
      throw DimensionError("ibot_loss: masks cover " + std::to_string(offset) +
                           " positions but logits hold " + std::to_string(s.rows()));
    }
    if (rows.empty()) continue;
    student_rows.push_back(num::gather_rows(s, rows));
    teacher_rows.push_back(num::gather_rows(t.detach(), rows));
  }
  if (student_rows.empty()) return Tensor::scalar(0.0);
  Tensor target =
      teacher_probabilities(num::concat_rows(teacher_rows), patch_center, cfg.teacher_temp);
  Tensor log_q = num::log_softmax(num::concat_rows(student_rows), -1, cfg.student_temp);
  return num::cross_entropy(target, log_q);
}

}  // namespace ukd::ssl

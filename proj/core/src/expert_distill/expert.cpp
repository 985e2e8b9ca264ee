#include "ukd/expert_distill/expert.hpp"

#include <cmath>

#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"

namespace ukd::kd {

using num::Tensor;

void DistillWeights::validate() const {
  for (double v : {alpha, beta, gamma, mu, lambda, phi, eta, theta}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ParameterError("distillation weights must be finite and non-negative");
    }
  }
}

double DistillWeights::cls_weight(TeacherId id) const {
  switch (id) {
    case TeacherId::kA: return alpha;
    case TeacherId::kB: return beta;
    case TeacherId::kC: return gamma;
  }
  return 0.0;
}

double DistillWeights::patch_weight(TeacherId id) const {
  switch (id) {
    case TeacherId::kA: return mu;
    case TeacherId::kB: return lambda;
    case TeacherId::kC: return phi;
  }
  return 0.0;
}

DistillWeights DistillWeights::disabled() {
  DistillWeights w;
  w.alpha = w.beta = w.gamma = w.mu = w.lambda = w.phi = 0.0;
  return w;
}

ProjectionAdapters ProjectionAdapters::create(std::size_t student_dim,
                                              const std::map<TeacherId, std::size_t>& teacher_dims,
                                              num::Rng& rng) {
  num::ParamSet ps;
  for (const auto& [id, dim] : teacher_dims) {
    const std::string p = to_string(id) + ".";
    ps.add(p + "cls.w", num::init_xavier(student_dim, dim, rng));
    ps.add(p + "cls.b", Tensor::zeros({dim}, true));
    ps.add(p + "patch.w", num::init_xavier(student_dim, dim, rng));
    ps.add(p + "patch.b", Tensor::zeros({dim}, true));
  }
  return ProjectionAdapters(student_dim, std::move(ps));
}

ProjectionAdapters::ProjectionAdapters(std::size_t student_dim, num::ParamSet params)
    : student_dim_(student_dim), params_(std::move(params)) {
  for (TeacherId id : kAllTeachers) {
    if (!has(id)) continue;
    for (const char* which : {"cls", "patch"}) {
      const Tensor& w = param(id, which);
      if (w.rank() != 2 || w.dim(0) != student_dim_) {
        throw DimensionError("adapter " + to_string(id) + "." + which + " expects input dim " +
                             std::to_string(student_dim_) + ", has " +
                             num::shape_string(w.shape()));
      }
    }
  }
}

bool ProjectionAdapters::has(TeacherId id) const {
  return params_.contains(to_string(id) + ".cls.w");
}

const Tensor& ProjectionAdapters::param(TeacherId id, const char* which) const {
  const std::string name = to_string(id) + "." + which + ".w";
  if (!params_.contains(name)) {
    throw ConfigurationError("no projection adapter for " + to_string(id));
  }
  return params_.get(name);
}

std::size_t ProjectionAdapters::teacher_dim(TeacherId id) const {
  return param(id, "cls").dim(1);
}

Tensor ProjectionAdapters::project_cls(TeacherId id, const Tensor& cls) const {
  return num::linear(cls, param(id, "cls"), params_.get(to_string(id) + ".cls.b"));
}

Tensor ProjectionAdapters::project_patches(TeacherId id, const Tensor& patches) const {
  return num::linear(patches, param(id, "patch"), params_.get(to_string(id) + ".patch.b"));
}

Tensor align_grid(const Tensor& tokens, std::size_t g_t, std::size_t g_s) {
  if (tokens.rank() != 2 || tokens.dim(0) != g_t * g_t) {
    throw DimensionError("align_grid: " + num::shape_string(tokens.shape()) +
                         " is not a square " + std::to_string(g_t) + "x" + std::to_string(g_t) +
                         " grid");
  }
  if (g_s == 0) throw DimensionError("align_grid: empty target grid");
  return num::resample_grid(tokens, g_t, g_s);
}

Tensor align_patches(const vit::TokenOutput& teacher, std::size_t g_s) {
  const std::size_t g_t = teacher.grid_side, b = teacher.batch;
  if (teacher.patches.rows() != b * g_t * g_t) {
    throw DimensionError("align_patches: teacher patches " +
                         num::shape_string(teacher.patches.shape()) + " do not form " +
                         std::to_string(b) + " grids of side " + std::to_string(g_t));
  }
  if (g_t == g_s) return teacher.patches;
  std::vector<Tensor> parts;
  parts.reserve(b);
  std::vector<std::size_t> rows(g_t * g_t);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = i * g_t * g_t + j;
    parts.push_back(align_grid(num::gather_rows(teacher.patches, rows), g_t, g_s));
  }
  return num::concat_rows(parts);
}

namespace {

Tensor one_minus_mean_cos(const Tensor& a, const Tensor& b) {
  return num::add_scalar(num::scale(num::mean(num::cosine_rows(a, b)), -1.0), 1.0);
}

}  // namespace

Tensor expert_loss(std::span<const vit::TokenOutput> student, const TeacherTokens& teachers,
                   const DistillWeights& w, const ProjectionAdapters& adapters,
                   ExpertTerms* terms) {
  w.validate();
  if (student.empty()) throw ParameterError("expert_loss: no student views");
  for (TeacherId id : kAllTeachers) {
    if (!w.uses(id)) continue;
    const auto it = teachers.find(id);
    if (it == teachers.end()) {
      throw ConfigurationError("expert_loss: " + to_string(id) +
                               " has nonzero weight but is not configured");
    }
    if (it->second.size() != student.size()) {
      throw DimensionError("expert_loss: " + to_string(id) + " covers " +
                           std::to_string(it->second.size()) + " views, student " +
                           std::to_string(student.size()));
    }
    if (!adapters.has(id)) {
      throw ConfigurationError("no projection adapter for " + to_string(id));
    }
  }
  if (terms) *terms = ExpertTerms{};

  Tensor total;
  auto accumulate = [&total](const Tensor& t) { total = total.defined() ? num::add(total, t) : t; };
  for (std::size_t v = 0; v < student.size(); ++v) {
    const vit::TokenOutput& s = student[v];
    for (TeacherId id : kAllTeachers) {
      const double wc = w.cls_weight(id), wp = w.patch_weight(id);
      if (wc == 0.0 && wp == 0.0) continue;
      const vit::TokenOutput& x = teachers.at(id)[v];
      if (x.batch != s.batch) {
        throw DimensionError("expert_loss: teacher batch " + std::to_string(x.batch) +
                             " vs student " + std::to_string(s.batch));
      }
      if (wc != 0.0) {
        const Tensor sc = adapters.project_cls(id, s.cls);
        const Tensor d = one_minus_mean_cos(sc, x.cls.detach());
        if (terms) terms->cls_distance[id] += d.item() / static_cast<double>(student.size());
        accumulate(num::scale(d, wc));
      }
      if (wp != 0.0) {
        const Tensor sp = adapters.project_patches(id, s.patches);
        const Tensor xp = align_patches(x.detached(), s.grid_side);
        if (xp.shape() != sp.shape()) {
          throw DimensionError("expert_loss: aligned " + to_string(id) + " patches " +
                               num::shape_string(xp.shape()) + " vs projected student " +
                               num::shape_string(sp.shape()));
        }
        Tensor d;
        if (w.eta != 0.0) d = num::scale(one_minus_mean_cos(sp, xp), w.eta);
        if (w.theta != 0.0) {
          const Tensor l1 = num::scale(num::smooth_l1(sp, xp), w.theta);
          d = d.defined() ? num::add(d, l1) : l1;
        }
        if (!d.defined()) continue;
        if (terms) terms->patch_distance[id] += d.item() / static_cast<double>(student.size());
        accumulate(num::scale(d, wp));
      }
    }
  }
  if (!total.defined()) return Tensor::scalar(0.0);
  return num::scale(total, 1.0 / static_cast<double>(student.size()));
}

LossBreakdown total_pretrain_loss(const LossComponents& c, const LossWeights& w,
                                  long long last_good_step) {
  LossBreakdown out;
  Tensor total;
  auto take = [&](const char* name, const Tensor& t, double weight, double& slot) {
    if (!t.defined()) return;
    const double v = t.item();
    if (!std::isfinite(v)) {
      throw TrainingAbort(name, last_good_step,
                          std::string("non-finite ") + name + " loss component");
    }
    slot = v;
    if (weight == 0.0) return;
    const Tensor term = num::scale(t, weight);
    total = total.defined() ? num::add(total, term) : term;
  };
  take("dino", c.dino, w.dino, out.dino);
  take("ibot", c.ibot, w.ibot, out.ibot);
  take("expert", c.expert, w.expert, out.expert);
  out.total = total.defined() ? total : Tensor::scalar(0.0);
  out.total_value = out.total.item();
  return out;
}

}  // namespace ukd::kd

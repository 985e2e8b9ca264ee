// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and
// thresholds are the constants below; they are not configurable.
//
//   ukd_acceptance [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "support/expert_oracle.hpp"
#include "support/gradcheck.hpp"
#include "support/stats_oracles.hpp"
#include "ukd/data/synthetic.hpp"
#include "ukd/data/textures.hpp"
#include "ukd/downstream/abmil.hpp"
#include "ukd/downstream/probe.hpp"
#include "ukd/downstream/retrieval.hpp"
#include "ukd/downstream/survival.hpp"
#include "ukd/errors.hpp"
#include "ukd/io/binary.hpp"
#include "ukd/numerics/ops.hpp"
#include "ukd/pretrain/engine.hpp"
#include "ukd/pretrain/optim.hpp"
#include "ukd/self_distill/dino.hpp"
#include "ukd/stats/bootstrap.hpp"
#include "ukd/stats/metrics.hpp"
#include "ukd/stats/ranking.hpp"
#include "ukd/stats/wilcoxon.hpp"

namespace fs = std::filesystem;
using namespace ukd;
using num::Rng;
using num::Tensor;
using testing::grad_check;
using testing::random_tensor;

namespace {

// ---- pinned tolerances -------------------------------------------------------

constexpr int kGradInstances = 50;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 60.0;
constexpr double kExpertOracleTol = 1e-10;
constexpr double kDisabledTeacherTol = 1e-12;
constexpr double kEmaTol = 1e-10;
constexpr double kEmaMomentum = 0.992;
constexpr std::size_t kToySteps = 500;
constexpr std::size_t kMovingWindow = 50;
constexpr double kLossRatioMax = 0.7;
constexpr double kCosineRiseMin = 0.2;
constexpr double kToyBudgetSec = 300.0;
constexpr double kProbeSlack = 0.02;
constexpr double kPermutationTol = 1e-6;
constexpr double kAttentionSumTol = 1e-6;
constexpr double kMilAucMin = 0.95;
constexpr double kMilBudgetSec = 120.0;
constexpr double kNllAnalyticTol = 1e-6;
constexpr double kCoverageLo = 0.92;
constexpr double kCoverageHi = 0.98;
constexpr double kNemenyiTol = 1e-9;
constexpr double kRetrievalAcc1Min = 0.99;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> grads_of(const Tensor& t) {
  if (!t.has_grad()) return std::vector<double>(t.numel(), 0.0);
  return {t.grad().begin(), t.grad().end()};
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

testing::ExpertInstance fresh_copy(const testing::ExpertInstance& inst) {
  testing::ExpertInstance c = inst;
  for (auto& s : c.student) {
    s.cls = s.cls.clone(true);
    s.patches = s.patches.clone(true);
  }
  c.adapters =
      kd::ProjectionAdapters(inst.adapters.student_dim(), inst.adapters.params().clone(true));
  return c;
}

eval::Features to_features(const std::vector<std::vector<double>>& rows) {
  eval::Features f;
  f.dim = rows.front().size();
  for (const auto& r : rows) f.values.insert(f.values.end(), r.begin(), r.end());
  return f;
}

std::vector<std::size_t> index_range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> v(hi - lo);
  std::iota(v.begin(), v.end(), lo);
  return v;
}

// ---- 1: gradient suite -------------------------------------------------------

struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;  // one random instance, returns max rel error
};

std::vector<GradCase> gradient_cases() {
  using namespace ukd::num;
  std::vector<GradCase> cases;
  const auto weighted = [](const Tensor& y, const Tensor& w) { return sum(mul(y, w)); };

  cases.push_back({"add/sub/mul/scale", [=](Rng& rng) {
    return grad_check([&](const std::vector<Tensor>& in) {
      return sum(mul(add_scalar(scale(sub(add(in[0], in[1]), in[1]), 1.7), 0.3), in[1]));
    }, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
  }});
  cases.push_back({"matmul/transpose", [=](Rng& rng) {
    const Tensor w = random_tensor({4, 3}, rng);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted(transpose(matmul(in[0], in[1])), w);
    }, {random_tensor({3, 5}, rng), random_tensor({5, 4}, rng)});
  }});
  cases.push_back({"linear", [=](Rng& rng) {
    const Tensor w = random_tensor({5, 4}, rng);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted(linear(in[0], in[1], in[2]), w);
    }, {random_tensor({5, 3}, rng), random_tensor({3, 4}, rng), random_tensor({4}, rng)});
  }});
  cases.push_back({"softmax/log_softmax", [=](Rng& rng) {
    const Tensor w = random_tensor({3, 5}, rng);
    const double t = rng.uniform(0.1, 2.0);
    return grad_check([&](const std::vector<Tensor>& in) {
      return add(weighted(softmax(in[0], -1, t), w), weighted(log_softmax(in[0], 0, t), w));
    }, {random_tensor({3, 5}, rng)});
  }});
  cases.push_back({"cross_entropy", [=](Rng& rng) {
    const Tensor p = testing::random_distribution_rows(3, 6, rng);
    return grad_check([&](const std::vector<Tensor>& in) {
      return cross_entropy(p, log_softmax(in[0], -1, 0.5));
    }, {random_tensor({3, 6}, rng)});
  }});
  cases.push_back({"cosine", [=](Rng& rng) {
    return grad_check([&](const std::vector<Tensor>& in) {
      return add(cosine_similarity(in[0], in[1]), sum(cosine_rows(in[0], in[1])));
    }, {random_tensor({4, 5}, rng), random_tensor({4, 5}, rng)});
  }});
  cases.push_back({"smooth_l1", [=](Rng& rng) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    // Keep every difference away from the quadratic/linear seam.
    for (std::size_t j = 0; j < a.numel(); ++j) {
      if (std::abs(std::abs(a.at(j) - b.at(j)) - 1.0) < 1e-3) a.mutable_values()[j] += 0.01;
    }
    return grad_check([&](const std::vector<Tensor>& in) { return smooth_l1(in[0], in[1]); },
                      {a, b});
  }});
  cases.push_back({"layernorm", [=](Rng& rng) {
    const Tensor w = random_tensor({5, 4}, rng);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted(layernorm(in[0], in[1], in[2]), w);
    }, {random_tensor({5, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng)});
  }});
  cases.push_back({"gelu/relu/tanh/sigmoid", [=](Rng& rng) {
    const Tensor w = random_tensor({5, 4}, rng);
    return grad_check([&](const std::vector<Tensor>& in) {
      return add(add(weighted(gelu(in[0]), w), weighted(relu(in[0]), w)),
                 add(weighted(tanh(in[0]), w), weighted(sigmoid(in[0]), w)));
    }, {random_tensor({5, 4}, rng)});
  }});
  cases.push_back({"log/l2_normalize", [=](Rng& rng) {
    const Tensor w = random_tensor({5, 4}, rng);
    return grad_check([&](const std::vector<Tensor>& in) {
      return add(weighted(log(add_scalar(mul(in[0], in[0]), 0.5), 1e-7), w),
                 weighted(l2_normalize(in[0]), w));
    }, {random_tensor({5, 4}, rng)});
  }});
  cases.push_back({"dropout", [=](Rng& rng) {
    const Tensor w = random_tensor({5, 4}, rng);
    const std::uint64_t seed = rng.next_u64();
    return grad_check([&](const std::vector<Tensor>& in) {
      Rng drop(seed);
      return weighted(dropout(in[0], 0.3, drop, true), w);
    }, {random_tensor({5, 4}, rng)});
  }});
  cases.push_back({"row and shape ops", [=](Rng& rng) {
    const Tensor w = random_tensor({9, 3}, rng);
    const Tensor w_tiled = random_tensor({6, 4}, rng);
    const Tensor w_cat = random_tensor({13, 3}, rng);
    const std::vector<double> f{0.5, 2.0, 0.0, 1.0, -1.0, 3.0, 1.5, 1.0, 0.25};
    const std::vector<std::size_t> rows{2, 0, 2, 1};
    return grad_check([&](const std::vector<Tensor>& in) {
      const Tensor a = weighted(add_row(mul_row(scale_rows(in[0], f), in[1]), in[2]), w);
      const Tensor b = sum(mul(mean_rows(in[0]), reshape(in[1], {1, 3})));
      const Tensor c = weighted(reshape(tile_rows(gather_rows(in[0], rows), 2), {6, 4}), w_tiled);
      const Tensor d =
          weighted(concat_rows(std::vector<Tensor>{in[0], gather_rows(in[0], rows)}), w_cat);
      return add(add(a, b), add(add(c, d), mean(in[0])));
    }, {random_tensor({9, 3}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
  }});
  cases.push_back({"mask_replace/resample_grid", [=](Rng& rng) {
    const Tensor w = random_tensor({16, 3}, rng);
    std::vector<std::uint8_t> mask(9);
    for (auto& m : mask) m = rng.uniform() < 0.4 ? 1 : 0;
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted(resample_grid(mask_replace(in[0], mask, in[1]), 3, 4), w);
    }, {random_tensor({9, 3}, rng), random_tensor({3}, rng)});
  }});
  cases.push_back({"multi_head_attention", [=](Rng& rng) {
    const std::size_t batch = 2, tokens = 3, heads = 2, dim = 4;
    const Tensor w = random_tensor({batch * tokens, dim}, rng);
    return grad_check([&](const std::vector<Tensor>& in) {
      return weighted(multi_head_attention(in[0], batch, tokens, heads), w);
    }, {random_tensor({batch * tokens, 3 * dim}, rng)});
  }});

  cases.push_back({"DINO loss", [](Rng& rng) {
    ssl::DinoHeadConfig cfg;
    cfg.student_temp = rng.uniform(0.1, 0.5);
    cfg.teacher_temp = rng.uniform(0.05, 0.3);
    const std::size_t k = 6;
    ssl::CenterState center = ssl::CenterState::zeros(k);
    for (double& c : center.center) c = 0.1 * rng.normal();
    const std::vector<Tensor> teacher{random_tensor({2, k}, rng), random_tensor({2, k}, rng)};
    std::vector<Tensor> student;
    for (int v = 0; v < 4; ++v) student.push_back(random_tensor({2, k}, rng));
    return grad_check([&](const std::vector<Tensor>& s) {
      return ssl::dino_loss(s, teacher, cfg, center);
    }, student);
  }});
  cases.push_back({"iBOT loss", [](Rng& rng) {
    ssl::DinoHeadConfig cfg;
    cfg.student_temp = rng.uniform(0.1, 0.5);
    cfg.teacher_temp = rng.uniform(0.05, 0.3);
    const std::size_t k = 5, batch = 2, grid = 2;
    ssl::CenterState center = ssl::CenterState::zeros(k);
    for (double& c : center.center) c = 0.1 * rng.normal();
    std::vector<std::vector<vit::MaskSpec>> masks(2);
    for (auto& view : masks) {
      for (std::size_t b = 0; b < batch; ++b) view.push_back(vit::sample_mask(grid, {0.25, 0.75}, rng));
    }
    const std::vector<Tensor> teacher{random_tensor({batch * grid * grid, k}, rng),
                                      random_tensor({batch * grid * grid, k}, rng)};
    return grad_check([&](const std::vector<Tensor>& s) {
      return ssl::ibot_loss(s, teacher, masks, cfg, center);
    }, {random_tensor({batch * grid * grid, k}, rng), random_tensor({batch * grid * grid, k}, rng)});
  }});
  cases.push_back({"expert loss", [](Rng& rng) {
    const auto inst = testing::random_expert_instance(rng);
    std::vector<Tensor> inputs;
    for (const auto& s : inst.student) {
      inputs.push_back(s.cls.detach());
      inputs.push_back(s.patches.detach());
    }
    inputs.push_back(inst.adapters.params().get("teacher_a.cls.w").detach());
    inputs.push_back(inst.adapters.params().get("teacher_b.patch.w").detach());
    return grad_check([&](const std::vector<Tensor>& x) {
      auto student = inst.student;
      for (std::size_t v = 0; v < 2; ++v) {
        student[v].cls = x[2 * v];
        student[v].patches = x[2 * v + 1];
      }
      auto ps = inst.adapters.params().clone(false);
      ps.get("teacher_a.cls.w") = x[4];
      ps.get("teacher_b.patch.w") = x[5];
      return kd::expert_loss(student, inst.teachers, inst.weights,
                             kd::ProjectionAdapters(inst.adapters.student_dim(), ps));
    }, inputs);
  }});
  cases.push_back({"survival NLL", [](Rng& rng) {
    const eval::SurvivalRecord r{1.0, rng.uniform() < 0.5, static_cast<int>(rng.uniform_index(4))};
    return grad_check([&](const std::vector<Tensor>& in) { return eval::nll_surv_loss(in[0], r); },
                      {random_tensor({4}, rng, 2.0)});
  }});
  cases.push_back({"ABMIL forward", [](Rng& rng) {
    eval::AbmilConfig cfg;
    cfg.embed_dim = 6;
    cfg.hidden_dim = 4;
    const eval::Abmil m = eval::Abmil::create(3, 2, cfg, rng);
    std::vector<std::string> names;
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : m.params()) {
      names.push_back(name);
      inputs.push_back(t);
    }
    inputs.push_back(random_tensor({4, 3}, rng));
    const Tensor w = Tensor::from({1, 2}, {rng.normal(), rng.normal()});
    return grad_check([&](const std::vector<Tensor>& in) {
      num::ParamSet ps;
      for (std::size_t i = 0; i < names.size(); ++i) ps.add(names[i], in[i]);
      const eval::Abmil probe(3, 2, m.config(), ps);
      return num::sum(num::mul(probe.forward(in.back()).logits, w));
    }, inputs);
  }});
  return cases;
}

Outcome criterion_gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  const auto cases = gradient_cases();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    Rng rng(1000 + c);
    double case_worst = 0.0;
    for (int i = 0; i < kGradInstances; ++i) case_worst = std::max(case_worst, cases[c].run(rng));
    o.require(case_worst < kGradTol, cases[c].name + " rel err " + fmt("%.2e", case_worst));
    if (case_worst >= worst) {
      worst = case_worst;
      worst_name = cases[c].name;
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < kGradBudgetSec, "runtime " + fmt("%.1f s", secs));
  if (o.pass) {
    o.detail = std::to_string(cases.size()) + " suites x " + std::to_string(kGradInstances) +
               " instances, max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " +
               fmt("%.1f s", secs);
  }
  return o;
}

// ---- 2: expert-distillation oracle ----------------------------------------------

Outcome criterion_expert_oracle() {
  Outcome o;
  Rng rng(2);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = testing::random_expert_instance(rng);
    const double got = kd::expert_loss(inst.student, inst.teachers, inst.weights, inst.adapters).item();
    worst = std::max(worst, std::abs(got - testing::oracle_expert_loss(inst)));
  }
  o.require(worst <= kExpertOracleTol, "oracle gap " + fmt("%.2e", worst));

  // Identity adapters and teacher tokens equal to the student's.
  double fixed_point = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.uniform_index(5);
    std::vector<vit::TokenOutput> student{testing::random_tokens(2, 2, d, rng, true),
                                          testing::random_tokens(2, 2, d, rng, true)};
    kd::TeacherTokens teachers;
    num::ParamSet ps;
    std::vector<double> eye(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
    for (kd::TeacherId id : kd::kAllTeachers) {
      for (const auto& s : student) teachers[id].push_back(s.detached());
      const std::string p = kd::to_string(id) + ".";
      ps.add(p + "cls.w", Tensor::from({d, d}, eye, true));
      ps.add(p + "cls.b", Tensor::zeros({d}, true));
      ps.add(p + "patch.w", Tensor::from({d, d}, eye, true));
      ps.add(p + "patch.b", Tensor::zeros({d}, true));
    }
    kd::DistillWeights w;
    w.phi = 0.7;
    fixed_point = std::max(
        fixed_point,
        std::abs(kd::expert_loss(student, teachers, w, kd::ProjectionAdapters(d, ps)).item()));
  }
  o.require(fixed_point == 0.0, "zero-distance loss " + fmt("%.3e", fixed_point));

  double disabled_gap = 0.0;
  for (kd::TeacherId off : kd::kAllTeachers) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto base = testing::random_expert_instance(rng);
      auto with_zero = fresh_copy(base);
      auto removed = fresh_copy(base);
      for (auto* inst : {&with_zero, &removed}) {
        auto& w = inst->weights;
        (off == kd::TeacherId::kA ? w.alpha : off == kd::TeacherId::kB ? w.beta : w.gamma) = 0.0;
        (off == kd::TeacherId::kA ? w.mu : off == kd::TeacherId::kB ? w.lambda : w.phi) = 0.0;
      }
      removed.teachers.erase(off);
      const Tensor l1 = kd::expert_loss(with_zero.student, with_zero.teachers, with_zero.weights,
                                        with_zero.adapters);
      const Tensor l2 =
          kd::expert_loss(removed.student, removed.teachers, removed.weights, removed.adapters);
      disabled_gap = std::max(disabled_gap, std::abs(l1.item() - l2.item()));
      l1.backward();
      l2.backward();
      for (std::size_t v = 0; v < 2; ++v) {
        disabled_gap = std::max(disabled_gap, max_abs_diff(grads_of(with_zero.student[v].cls),
                                                           grads_of(removed.student[v].cls)));
        disabled_gap = std::max(disabled_gap, max_abs_diff(grads_of(with_zero.student[v].patches),
                                                           grads_of(removed.student[v].patches)));
      }
      for (const auto& [name, t] : with_zero.adapters.params()) {
        disabled_gap = std::max(
            disabled_gap, max_abs_diff(grads_of(t), grads_of(removed.adapters.params().get(name))));
      }
    }
  }
  o.require(disabled_gap <= kDisabledTeacherTol, "disabled-teacher gap " + fmt("%.2e", disabled_gap));
  if (o.pass) {
    o.detail = "200 instances within " + fmt("%.1e", worst) + ", fixed point exactly 0, disabled gap " +
               fmt("%.1e", disabled_gap);
  }
  return o;
}

// ---- 3: reference weights ignore teacher-c patches --------------------------------

Outcome criterion_reference_weights() {
  Outcome o;
  const auto weights = train::PretrainConfig::paper_fullscale().distill;
  o.require(weights.phi == 0.0, "preset phi is " + fmt("%g", weights.phi));
  Rng rng(3);
  int differing = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    auto a = fresh_copy(testing::random_expert_instance(rng, false));
    a.weights = weights;
    auto b = fresh_copy(a);
    for (auto& view : b.teachers[kd::TeacherId::kC]) {
      view.patches = random_tensor(view.patches.shape(), rng, 5.0);
    }
    const Tensor la = kd::expert_loss(a.student, a.teachers, a.weights, a.adapters);
    const Tensor lb = kd::expert_loss(b.student, b.teachers, b.weights, b.adapters);
    bool same = la.item() == lb.item();
    la.backward();
    lb.backward();
    for (std::size_t v = 0; v < 2; ++v) {
      same = same && grads_of(a.student[v].cls) == grads_of(b.student[v].cls);
      same = same && grads_of(a.student[v].patches) == grads_of(b.student[v].patches);
    }
    for (const auto& [name, t] : a.adapters.params()) {
      same = same && grads_of(t) == grads_of(b.adapters.params().get(name));
    }
    if (!same) ++differing;
  }
  o.require(differing == 0, std::to_string(differing) + " of 50 perturbations changed the loss or a gradient");
  if (o.pass) o.detail = "50 perturbations of teacher-c patches: loss and every gradient bit-identical";
  return o;
}

// ---- 4: EMA closed form and schedule endpoints ------------------------------------

Outcome criterion_ema_schedule() {
  Outcome o;
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    num::ParamSet teacher, student;
    teacher.add("w", random_tensor({4, 3}, rng));
    teacher.add("b", random_tensor({3}, rng));
    student.add("w", random_tensor({4, 3}, rng));
    student.add("b", random_tensor({3}, rng));
    const num::ParamSet start = teacher.clone(false);
    for (int k = 0; k < 10; ++k) train::ema_update(teacher, student, kEmaMomentum);
    const double mk = std::pow(kEmaMomentum, 10);
    for (std::size_t e = 0; e < teacher.size(); ++e) {
      const auto t = teacher.entries()[e].second.values();
      const auto t0 = start.entries()[e].second.values();
      const auto s = student.entries()[e].second.values();
      for (std::size_t i = 0; i < t.size(); ++i) {
        worst = std::max(worst, std::abs(t[i] - (mk * t0[i] + (1.0 - mk) * s[i])));
      }
    }
  }
  o.require(worst <= kEmaTol, "EMA gap " + fmt("%.2e", worst));
  for (const auto& c : {train::TrainConfig::toy(), train::TrainConfig::paper_fullscale()}) {
    o.require(train::lr_at(0, c) == 0.0, "lr(0) != 0");
    o.require(train::lr_at(c.warmup_iters, c) == c.base_lr, "lr(warmup) != base");
    o.require(train::lr_at(c.total_iters, c) == c.min_lr, "lr(total) != min");
  }
  if (o.pass) o.detail = "10-step EMA within " + fmt("%.1e", worst) + ", lr endpoints exact for both presets";
  return o;
}

// ---- 5 and 6: toy pretraining --------------------------------------------------------

struct ToyRun {
  double seconds = 0.0;
  double ma_early = 0.0, ma_final = 0.0;
  double cosine_start = 0.0, cosine_end = 0.0;
  double probe_accuracy = 0.0;
};

const data::ImageDataset& toy_images() {
  static const data::ImageDataset images = data::generate_textures(data::TextureParams{}, 1);
  return images;
}

// Probe on student CLS features: 700 train, 100 validation, 200 test images.
double probe_accuracy(const train::Pretrainer& trainer, const data::ImageDataset& images) {
  const auto feats = to_features(trainer.embed(images.images, false));
  const auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    for (auto i : idx) y.push_back(images.labels[i]);
    return y;
  };
  const auto tr = index_range(0, 700), va = index_range(700, 800), te = index_range(800, 1000);
  const auto r = eval::train_linear_probe(feats.select(tr), labels_of(tr), feats.select(va),
                                          labels_of(va), 3, eval::LinearProbeConfig{}, 0);
  return stats::accuracy(labels_of(te), r.model.predict(feats.select(te)));
}

ToyRun run_toy(std::uint64_t seed, bool expert) {
  auto cfg = train::PretrainConfig::toy();
  cfg.train.total_iters = kToySteps;
  cfg.train.seed = seed;
  if (!expert) cfg.distill = kd::DistillWeights::disabled();
  const auto& images = toy_images();
  train::Pretrainer trainer(cfg, kd::make_random_teachers(cfg.teacher_seed));
  const std::vector<vit::Image> held(images.images.begin(), images.images.begin() + 200);
  ToyRun run;
  if (expert) run.cosine_start = trainer.teacher_cls_cosine(held, kd::TeacherId::kA);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> totals;
  for (std::size_t s = 0; s < kToySteps; ++s) totals.push_back(trainer.train_step(images).total);
  run.seconds = seconds_since(t0);
  const auto moving = [&](std::size_t end) {
    return std::accumulate(totals.begin() + static_cast<std::ptrdiff_t>(end - kMovingWindow),
                           totals.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
           static_cast<double>(kMovingWindow);
  };
  run.ma_early = moving(kMovingWindow);
  run.ma_final = moving(kToySteps);
  if (expert) run.cosine_end = trainer.teacher_cls_cosine(held, kd::TeacherId::kA);
  run.probe_accuracy = probe_accuracy(trainer, images);
  return run;
}

const ToyRun& toy_seed0() {
  static const ToyRun run = run_toy(0, true);
  return run;
}

Outcome criterion_toy_convergence() {
  Outcome o;
  const auto& r = toy_seed0();
  const double ratio = r.ma_final / r.ma_early;
  const double rise = r.cosine_end - r.cosine_start;
  o.require(ratio < kLossRatioMax, "loss MA ratio " + fmt("%.3f", ratio));
  o.require(rise >= kCosineRiseMin, "teacher-a cosine rise " + fmt("%.3f", rise));
  o.require(r.seconds < kToyBudgetSec, "runtime " + fmt("%.1f s", r.seconds));
  if (o.pass) {
    o.detail = "MA(500)/MA(50) = " + fmt("%.3f", ratio) + ", cosine " + fmt("%.3f", r.cosine_start) +
               " -> " + fmt("%.3f", r.cosine_end) + ", " + fmt("%.1f s", r.seconds);
  }
  return o;
}

Outcome criterion_ablation_direction() {
  Outcome o;
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const double with = seed == 0 ? toy_seed0().probe_accuracy : run_toy(seed, true).probe_accuracy;
    const double without = run_toy(seed, false).probe_accuracy;
    o.require(with >= without - kProbeSlack, "seed " + std::to_string(seed) + ": expert " +
                                                 fmt("%.3f", with) + " vs none " + fmt("%.3f", without));
    detail << (seed ? ", " : "") << "seed " << seed << " " << fmt("%.3f", with) << " vs "
           << fmt("%.3f", without);
  }
  if (o.pass) o.detail = "probe accuracy expert vs none: " + detail.str();
  return o;
}

// ---- 7: ABMIL ------------------------------------------------------------------------

Outcome criterion_abmil() {
  Outcome o;
  Rng rng(7);
  eval::AbmilConfig small;
  small.embed_dim = 16;
  small.hidden_dim = 8;
  double perm_gap = 0.0, sum_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const eval::Abmil m = eval::Abmil::create(8, 3, small, rng);
    const std::size_t n = 1 + rng.uniform_index(30);
    eval::Features f;
    f.dim = 8;
    f.values.resize(n * 8);
    for (double& v : f.values) v = rng.normal();
    std::vector<std::size_t> perm = index_range(0, n);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
    const auto a = m.forward(f.tensor());
    const auto b = m.forward(f.select(perm).tensor());
    for (std::size_t k = 0; k < 3; ++k) perm_gap = std::max(perm_gap, std::abs(a.logits.at(k) - b.logits.at(k)));
    double s = 0.0;
    for (double w : a.attention.values()) s += w;
    sum_gap = std::max(sum_gap, std::abs(s - 1.0));
  }
  o.require(perm_gap <= kPermutationTol, "permutation gap " + fmt("%.2e", perm_gap));
  o.require(sum_gap <= kAttentionSumTol, "attention sum gap " + fmt("%.2e", sum_gap));

  // 200 training bags (40 of them held out for early stopping) and 50 test
  // bags, all from one generated cohort.
  data::MilBagParams p;
  p.bags = 250;
  p.dim = 256;
  const auto bags = data::generate_mil_bags(p, 11);
  const std::vector<eval::FeatureBag> train(bags.begin(), bags.begin() + 160);
  const std::vector<eval::FeatureBag> val(bags.begin() + 160, bags.begin() + 200);
  const std::vector<eval::FeatureBag> test(bags.begin() + 200, bags.end());
  const auto cfg = eval::AbmilConfig::paper();
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = eval::train_abmil(train, val, 2, cfg, 3);
  const double secs = seconds_since(t0);
  std::vector<int> y;
  for (const auto& b : test) y.push_back(b.label);
  const double auc = stats::auc(y, eval::predict_proba(r.model, test), 2);
  o.require(auc >= kMilAucMin, "test AUC " + fmt("%.3f", auc));
  o.require(r.log.size() <= cfg.max_epochs, "ran " + std::to_string(r.log.size()) + " epochs");
  o.require(secs < kMilBudgetSec, "runtime " + fmt("%.1f s", secs));
  if (o.pass) {
    o.detail = "permutation gap " + fmt("%.1e", perm_gap) + ", attention sum gap " +
               fmt("%.1e", sum_gap) + ", planted bags test AUC " + fmt("%.3f", auc) + " after " +
               std::to_string(r.log.size()) + " epochs (best " + std::to_string(r.best_epoch) +
               "), " + fmt("%.1f s", secs);
  }
  return o;
}

// ---- 8: survival ---------------------------------------------------------------------

Outcome criterion_survival() {
  Outcome o;
  Rng rng(8);
  int cindex_mismatch = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> risk(200);
    std::vector<eval::SurvivalRecord> recs(200);
    for (std::size_t i = 0; i < 200; ++i) {
      recs[i].time = std::floor(rng.uniform(0.0, 40.0));
      recs[i].event = rng.uniform() < 0.6;
      risk[i] = std::floor(rng.uniform(0.0, 25.0));
    }
    if (eval::c_index(risk, recs) != testing::c_index_oracle(risk, recs)) ++cindex_mismatch;
  }
  o.require(cindex_mismatch == 0, std::to_string(cindex_mismatch) + " C-index mismatches");

  std::size_t worst_spread = 0;
  for (std::size_t n = 4; n <= 300; ++n) {
    std::vector<double> t(n);
    for (double& v : t) v = rng.uniform(0.0, 120.0);
    const auto b = eval::bin_survival_times(t);
    std::vector<std::size_t> sizes(4, 0);
    for (int v : b.bins) ++sizes[static_cast<std::size_t>(v)];
    worst_spread = std::max(worst_spread, *std::max_element(sizes.begin(), sizes.end()) -
                                              *std::min_element(sizes.begin(), sizes.end()));
  }
  o.require(worst_spread <= 1, "bin sizes differ by " + std::to_string(worst_spread));

  const std::vector<double> zero(4, 0.0);
  const double censored = eval::nll_surv_loss(zero, {10.0, false, 0});
  o.require(std::abs(censored - 0.693147) <= kNllAnalyticTol, "censored h=0.5 gives " + fmt("%.7f", censored));
  const double sure = eval::nll_surv_loss(std::vector<double>{20.0, 0, 0, 0}, {1.0, true, 0});
  o.require(sure < 1e-3, "event at bin 0 with logit 20 gives " + fmt("%.2e", sure));
  double nll_gap = 0.0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> logits(4);
    for (double& l : logits) l = 3.0 * rng.normal();
    const eval::SurvivalRecord r{1.0, rng.uniform() < 0.5, static_cast<int>(rng.uniform_index(4))};
    nll_gap = std::max(nll_gap, std::abs(eval::nll_surv_loss(logits, r) - testing::nll_oracle(logits, r)));
  }
  o.require(nll_gap <= 1e-12, "NLL oracle gap " + fmt("%.2e", nll_gap));
  if (o.pass) {
    o.detail = "C-index exact on 20 x 200 records, bin spread <= 1 for n = 4..300, censored NLL " +
               fmt("%.6f", censored);
  }
  return o;
}

// ---- 9: metric oracles ---------------------------------------------------------------

Outcome criterion_metrics() {
  Outcome o;
  Rng rng(9);
  int mismatches = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t k = 2 + rng.uniform_index(3);
    const std::size_t n = 6 + rng.uniform_index(40);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i < k ? i : rng.uniform_index(k));
    for (auto& v : p) v = static_cast<int>(rng.uniform_index(k));
    if (stats::balanced_accuracy(y, p) != testing::balanced_accuracy_oracle(y, p)) ++mismatches;
    if (stats::weighted_f1(y, p) != testing::weighted_f1_oracle(y, p)) ++mismatches;
    std::vector<int> yb(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      yb[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.uniform_index(2));
      s[i] = std::floor(rng.uniform(0.0, 8.0)) / 8.0;
    }
    if (stats::binary_auc(yb, s) != testing::auc_oracle(yb, s)) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
  double antisym = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<int> y(30);
    std::vector<double> s(30), neg(30);
    for (std::size_t i = 0; i < 30; ++i) {
      y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.uniform_index(2));
      s[i] = rng.normal();
      neg[i] = -s[i];
    }
    antisym = std::max(antisym, std::abs(stats::binary_auc(y, s) + stats::binary_auc(y, neg) - 1.0));
  }
  o.require(antisym <= 1e-15, "AUC antisymmetry gap " + fmt("%.2e", antisym));
  if (o.pass) o.detail = "balanced accuracy, weighted F1, AUC exact on 100 instances; antisymmetry holds";
  return o;
}

// ---- 10: statistics ------------------------------------------------------------------

Outcome criterion_statistics() {
  Outcome o;
  Rng rng(10);
  int wilcoxon_mismatch = 0, wilcoxon_cases = 0;
  for (std::size_t n = 1; n <= 12; ++n) {
    for (int trial = 0; trial < 8; ++trial) {
      std::vector<double> a(n), b(n, 0.0);
      for (double& v : a) v = std::floor(rng.uniform(-4.0, 5.0));
      if (std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; })) a[0] = 1.0;
      for (auto alt : {stats::Alternative::kTwoSided, stats::Alternative::kGreater,
                       stats::Alternative::kLess}) {
        const auto r = stats::wilcoxon_signed_rank(a, b, alt);
        ++wilcoxon_cases;
        if (!r.exact || r.p_value != testing::wilcoxon_oracle(a, alt)) ++wilcoxon_mismatch;
      }
    }
  }
  o.require(wilcoxon_mismatch == 0, std::to_string(wilcoxon_mismatch) + " Wilcoxon mismatches");

  std::vector<double> x(60);
  for (double& v : x) v = rng.normal();
  const auto mean_of = [](std::span<const double> values, std::span<const std::size_t> idx) {
    double s = 0.0;
    for (auto i : idx) s += values[i];
    return s / static_cast<double>(idx.size());
  };
  const auto f = [&](std::span<const std::size_t> idx) { return mean_of(x, idx); };
  o.require(stats::bootstrap("mean", x.size(), f, 1000, 77) ==
                stats::bootstrap("mean", x.size(), f, 1000, 77),
            "bootstrap not reproducible");

  int covered = 0;
  const int sims = 500;
  for (int sim = 0; sim < sims; ++sim) {
    std::vector<double> sample(100);
    for (double& v : sample) v = rng.normal(2.0, 1.0);
    const auto r = stats::bootstrap(
        "mean", sample.size(), [&](std::span<const std::size_t> idx) { return mean_of(sample, idx); },
        1000, static_cast<std::uint64_t>(sim));
    if (r.ci_low <= 2.0 && 2.0 <= r.ci_high) ++covered;
  }
  const double coverage = static_cast<double>(covered) / sims;
  o.require(coverage >= kCoverageLo && coverage <= kCoverageHi, "coverage " + fmt("%.3f", coverage));

  stats::RankMatrix m;
  m.models = {"a", "b", "c", "d"};
  m.tasks = {"t0", "t1"};
  m.values = {{0.9, 0.5}, {0.9, 0.5}, {0.5, 0.5}, {0.1, 0.5}};
  m.higher_is_better = {true, true};
  const auto ranks = stats::task_ranks(m);
  const bool ties_ok = ranks[0][0] == 1.5 && ranks[1][0] == 1.5 && ranks[2][0] == 3.0 &&
                       ranks[3][0] == 4.0 && ranks[0][1] == 2.5 && ranks[3][1] == 2.5;
  o.require(ties_ok, "tied ranks are not averaged");

  double cd_gap = 0.0;
  for (std::size_t n : {1u, 2u, 5u, 12u, 72u, 1000u}) {
    cd_gap = std::max(cd_gap, std::abs(stats::nemenyi_cd(2, n, 0.05) - 1.960 / std::sqrt(static_cast<double>(n))));
  }
  o.require(cd_gap <= kNemenyiTol, "k=2 CD gap " + fmt("%.2e", cd_gap));
  if (o.pass) {
    o.detail = std::to_string(wilcoxon_cases) + " exact Wilcoxon cases match, coverage " +
               fmt("%.3f", coverage) + ", ties averaged, k=2 CD gap " + fmt("%.1e", cd_gap);
  }
  return o;
}

// ---- 11: published WSI table -----------------------------------------------------------

Outcome criterion_rerank() {
  Outcome o;
  const auto m = stats::read_rank_matrix_csv(std::string(UKD_DATA_DIR) + "/wsi_avg_auc.csv");
  const auto report = stats::compare_models(m);
  std::vector<std::string> got;
  for (auto i : report.order) got.push_back(m.models[i]);
  const std::vector<std::string> expected{"GPFM", "UNI", "Phikon", "CHIEF", "Ctranspath",
                                          "Prov-Gigapath", "CONCH", "PLIP", "ResNet50"};
  o.require(got == expected, "order " + [&] {
    std::string s;
    for (const auto& g : got) s += g + " ";
    return s;
  }());
  o.require(report.average_metric[report.order[0]] == 0.891, "first place metric");
  o.require(report.average_metric[report.order[1]] == 0.875, "second place metric");
  if (o.pass) o.detail = "GPFM 1st (0.891), UNI 2nd (0.875), full order matches";
  return o;
}

// ---- 12: retrieval ---------------------------------------------------------------------

Outcome criterion_retrieval() {
  Outcome o;
  Rng rng(12);
  int affine_breaks = 0;
  for (int trial = 0; trial < 10; ++trial) {
    eval::Features train, queries;
    train.dim = queries.dim = 6;
    train.values.resize(80 * 6);
    queries.values.resize(20 * 6);
    for (double& v : train.values) v = rng.normal();
    for (double& v : queries.values) v = rng.normal();
    std::vector<double> a(6), b(6);
    for (std::size_t j = 0; j < 6; ++j) {
      a[j] = std::exp(rng.normal());
      b[j] = 5.0 * rng.normal();
    }
    const auto transform = [&](eval::Features f) {
      for (std::size_t i = 0; i < f.rows(); ++i)
        for (std::size_t j = 0; j < 6; ++j) f.values[i * 6 + j] = a[j] * f.values[i * 6 + j] + b[j];
      return f;
    };
    const std::vector<int> labels(80, 0);
    const auto plain = eval::build_index(train, labels);
    const auto moved = eval::build_index(transform(train), labels);
    const auto tq = transform(queries);
    for (std::size_t q = 0; q < 20; ++q) {
      const auto x = eval::retrieve(plain, queries.row(q), 80);
      const auto y = eval::retrieve(moved, tq.row(q), 80);
      for (std::size_t r = 0; r < 80; ++r)
        if (x[r].id != y[r].id) ++affine_breaks;
    }
  }
  o.require(affine_breaks == 0, std::to_string(affine_breaks) + " neighbour positions moved under affine maps");

  data::ClusterParams p;
  p.per_cluster = 120;
  const auto all = data::generate_clusters(p, 12);
  const std::size_t db_rows = 9 * 100, dim = p.dim;
  eval::Features db, q;
  db.dim = q.dim = dim;
  db.values.assign(all.x.values.begin(), all.x.values.begin() + static_cast<std::ptrdiff_t>(db_rows * dim));
  q.values.assign(all.x.values.begin() + static_cast<std::ptrdiff_t>(db_rows * dim), all.x.values.end());
  const std::vector<int> db_y(all.y.begin(), all.y.begin() + static_cast<std::ptrdiff_t>(db_rows));
  const std::vector<int> q_y(all.y.begin() + static_cast<std::ptrdiff_t>(db_rows), all.y.end());
  const auto idx = eval::build_index(db, db_y);
  const std::vector<std::size_t> ks{1, 3, 5};
  const auto acc = eval::accuracy_at_k(idx, q, q_y, ks);
  std::vector<double> brute(3, 0.0);
  int order_mismatch = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto qn = idx.normalize(q.row(i));
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = idx.features.values[r * dim + j] - qn[j];
        s += diff * diff;
      }
      d.emplace_back(s, r);
    }
    std::sort(d.begin(), d.end());
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t r = 0; r < ks[c]; ++r) {
        if (db_y[d[r].second] == q_y[i]) {
          brute[c] += 1.0;
          break;
        }
      }
    }
    const auto nn = eval::retrieve(idx, q.row(i), 5);
    for (std::size_t r = 0; r < 5; ++r)
      if (nn[r].id != d[r].second) ++order_mismatch;
  }
  for (double& h : brute) h /= static_cast<double>(q.rows());
  o.require(acc == brute && order_mismatch == 0, "differs from brute-force scan");
  o.require(acc[0] >= kRetrievalAcc1Min, "Acc@1 " + fmt("%.4f", acc[0]));

  int monotone_breaks = 0;
  for (int trial = 0; trial < 20; ++trial) {
    eval::Features tr, te;
    tr.dim = te.dim = 4;
    tr.values.resize(60 * 4);
    te.values.resize(15 * 4);
    for (double& v : tr.values) v = rng.normal();
    for (double& v : te.values) v = rng.normal();
    std::vector<int> ytr(60), yte(15);
    for (int& v : ytr) v = static_cast<int>(rng.uniform_index(3));
    for (int& v : yte) v = static_cast<int>(rng.uniform_index(3));
    const auto a = eval::accuracy_at_k(eval::build_index(tr, ytr), te, yte, ks);
    if (!(a[0] <= a[1] && a[1] <= a[2])) ++monotone_breaks;
  }
  o.require(monotone_breaks == 0, "Acc@K not monotone");
  if (o.pass) {
    o.detail = "affine ordering exact, 9 clusters Acc@1/3/5 = " + fmt("%.4f", acc[0]) + "/" +
               fmt("%.4f", acc[1]) + "/" + fmt("%.4f", acc[2]) + " identical to brute force";
  }
  return o;
}

// ---- 13: CLI reproducibility -----------------------------------------------------------

struct CliRun {
  int code = 0;
  std::string out;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  return r;
}

Outcome criterion_reproducibility() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "ukd_acceptance_cli";
  fs::remove_all(root);
  const fs::path a_dir = root / "a", b_dir = root / "b";
  std::size_t compared = 0;

  // Runs a pipeline in two sibling directories and compares stdout and files.
  const auto twice = [&](const std::string& name, const std::vector<std::string>& args,
                         const std::vector<std::string>& files) {
    std::string outs[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path dir = k == 0 ? a_dir : b_dir;
      std::vector<std::string> resolved;
      for (const auto& arg : args) {
        resolved.push_back(arg.rfind("@", 0) == 0 ? (dir / arg.substr(1)).string() : arg);
      }
      const auto r = cli(resolved);
      if (r.code != 0) {
        o.require(false, name + " exited " + std::to_string(r.code) + ": " + r.out);
        return;
      }
      // Paths echoed in the JSON differ between the directories.
      std::string text = r.out;
      for (std::size_t at; (at = text.find(dir.string())) != std::string::npos;)
        text.replace(at, dir.string().size(), "<dir>");
      outs[k] = text;
    }
    o.require(outs[0] == outs[1], name + " stdout differs");
    ++compared;
    for (const auto& f : files) {
      o.require(io::read_file(a_dir / f) == io::read_file(b_dir / f), name + " " + f + " differs");
      ++compared;
    }
  };

  fs::create_directories(a_dir);
  fs::create_directories(b_dir);
  twice("gen textures", {"gen", "pretrain_textures", "--out", "@img.bin", "--seed", "1", "--images", "64"},
        {"img.bin", "img.bin.jsonl"});
  twice("gen mil_bags", {"gen", "mil_bags", "--out", "@mil.bin", "--seed", "2", "--bags", "40", "--dim", "16"},
        {"mil.bin", "mil.bin.jsonl"});
  twice("gen survival", {"gen", "survival", "--out", "@surv.bin", "--seed", "3", "--bags", "40", "--dim", "16"},
        {"surv.bin", "surv.bin.jsonl"});
  twice("gen clusters db", {"gen", "clusters", "--out", "@db.bin", "--seed", "4", "--per-cluster", "20"},
        {"db.bin", "db.bin.jsonl"});
  twice("gen clusters query", {"gen", "clusters", "--out", "@q.bin", "--seed", "4", "--per-cluster", "5"},
        {"q.bin", "q.bin.jsonl"});
  const std::vector<std::string> schedule{"--total-iters", "20", "--warmup-iters", "5", "--batch-size", "8"};
  auto pretrain_args = [&](const std::string& out, const std::string& steps) {
    std::vector<std::string> a{"pretrain", "--data", "@img.bin", "--out", out, "--seed", "5", "--steps", steps};
    a.insert(a.end(), schedule.begin(), schedule.end());
    return a;
  };
  auto full = pretrain_args("@full.ck", "20");
  full.insert(full.end(), {"--log-jsonl", "@full.jsonl"});
  twice("pretrain", full, {"full.ck", "full.jsonl"});
  twice("extract", {"extract", "--checkpoint", "@full.ck", "--data", "@img.bin", "--out", "@feat.bin",
                    "--model", "ema", "--tokens", "all"},
        {"feat.bin", "feat.bin.jsonl"});
  twice("probe", {"probe", "--train", "@db.bin", "--test", "@q.bin", "--seed", "6", "--max-epochs", "50",
                  "--replicates", "200", "--predictions-out", "@probe.csv"},
        {"probe.csv"});
  twice("mil", {"mil", "--data", "@mil.bin", "--seed", "7", "--max-epochs", "5", "--replicates", "200",
                "--log-jsonl", "@mil.jsonl", "--predictions-out", "@mil.csv"},
        {"mil.jsonl", "mil.csv"});
  twice("survival", {"survival", "--data", "@surv.bin", "--seed", "8", "--max-epochs", "5",
                     "--replicates", "200", "--log-jsonl", "@surv.jsonl"},
        {"surv.jsonl"});
  twice("retrieve", {"retrieve", "--train", "@db.bin", "--test", "@q.bin", "--seed", "9", "--replicates", "200"}, {});
  twice("stats bootstrap", {"stats", "bootstrap", "--predictions", "@probe.csv", "--seed", "10",
                            "--replicates", "200"},
        {});
  io::write_text(a_dir / "pairs.csv", "a,b\n0.8,0.7\n0.6,0.65\n0.9,0.7\n0.75,0.6\n0.5,0.52\n0.7,0.6\n");
  io::write_text(b_dir / "pairs.csv", io::read_text(a_dir / "pairs.csv"));
  twice("stats wilcoxon", {"stats", "wilcoxon", "--pairs", "@pairs.csv"}, {});
  twice("rank", {"rank", "--matrix", std::string(UKD_DATA_DIR) + "/wsi_avg_auc.csv", "--csv-out", "@ranks.csv"},
        {"ranks.csv"});

  // Save at step 10, resume for the 10 remaining steps.
  std::vector<std::string> half = pretrain_args((a_dir / "half.ck").string(), "10");
  std::vector<std::string> resumed = pretrain_args((a_dir / "resumed.ck").string(), "20");
  for (auto* args : {&half, &resumed}) {
    for (auto& arg : *args)
      if (arg == "@img.bin") arg = (a_dir / "img.bin").string();
  }
  resumed.insert(resumed.end(), {"--resume", (a_dir / "half.ck").string(), "--log-jsonl",
                                 (a_dir / "resumed.jsonl").string()});
  const auto h = cli(half);
  const auto r = cli(resumed);
  o.require(h.code == 0 && r.code == 0, "resume run failed: " + h.out + r.out);
  if (h.code == 0 && r.code == 0) {
    o.require(io::read_file(a_dir / "resumed.ck") == io::read_file(a_dir / "full.ck"),
              "resumed checkpoint differs from the uninterrupted run");
    const std::string full_log = io::read_text(a_dir / "full.jsonl");
    const std::string tail_log = io::read_text(a_dir / "resumed.jsonl");
    std::size_t cut = 0;
    for (int line = 0; line < 10; ++line) cut = full_log.find('\n', cut) + 1;
    o.require(full_log.substr(cut) == tail_log, "per-step losses after resume differ");
  }
  fs::remove_all(root);
  if (o.pass) {
    o.detail = std::to_string(compared) + " outputs byte-identical across re-runs; resume at step 10 "
               "matches the uninterrupted run over steps 10..19";
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", criterion_gradients},
      {"expert-distillation oracle", criterion_expert_oracle},
      {"reference weights ignore teacher-c patches", criterion_reference_weights},
      {"EMA closed form and lr endpoints", criterion_ema_schedule},
      {"toy pretraining convergence", criterion_toy_convergence},
      {"expert ablation direction", criterion_ablation_direction},
      {"ABMIL suite", criterion_abmil},
      {"survival suite", criterion_survival},
      {"metric oracles", criterion_metrics},
      {"statistics suite", criterion_statistics},
      {"published WSI table re-rank", criterion_rerank},
      {"retrieval suite", criterion_retrieval},
      {"CLI reproducibility and resume", criterion_reproducibility},
  };
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const long n = std::strtol(argv[i], nullptr, 10);
    if (n < 1 || n > static_cast<long>(criteria.size())) {
      std::cerr << "usage: ukd_acceptance [1-" << criteria.size() << " ...]\n";
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(n - 1));
  }
  if (selected.empty()) selected = index_range(0, criteria.size());

  int failed = 0;
  for (auto c : selected) {
    Outcome outcome;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      outcome = criteria[c].second();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("threw: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (!outcome.pass) ++failed;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " " << (c + 1) << " " << criteria[c].first
              << ": " << outcome.detail << " [" << fmt("%.1f s", secs) << "]" << std::endl;
  }
  std::cout << (selected.size() - static_cast<std::size_t>(failed)) << "/" << selected.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

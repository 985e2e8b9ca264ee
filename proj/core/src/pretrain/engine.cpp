#include "ukd/pretrain/engine.hpp"

#include <cmath>
#include <initializer_list>
#include <numeric>
#include <set>

#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"

namespace ukd::train {

using num::Tensor;

namespace {

enum StreamKey : std::uint64_t {
  kStudentInit = 1,
  kHeadInit = 2,
  kPatchHeadInit = 3,
  kAdapterInit = 4,
  kBatch = 5,
  kViews = 6,
  kDropPath = 7,
};

num::Rng stream(std::uint64_t seed, std::uint64_t key) { return num::Rng(seed).substream(key); }

Tensor row_range(const Tensor& t, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return num::gather_rows(t, idx);
}

vit::TokenOutput slice(const vit::TokenOutput& o, std::size_t begin, std::size_t count) {
  const std::size_t gg = o.grid_side * o.grid_side;
  vit::TokenOutput out;
  out.cls = row_range(o.cls, begin, count);
  out.patches = row_range(o.patches, begin * gg, count * gg);
  out.batch = count;
  out.grid_side = o.grid_side;
  return out;
}

void round_params(num::ParamSet& ps) {
  for (auto& [name, t] : ps) num::round_to_f32(t.mutable_values());
}

ssl::DinoHeadConfig head_for(const PretrainConfig& cfg) {
  ssl::DinoHeadConfig h = cfg.head;
  h.in_dim = cfg.vit.dim;
  return h;
}

std::map<kd::TeacherId, std::size_t> teacher_dims(const kd::TeacherSet& teachers) {
  std::map<kd::TeacherId, std::size_t> dims;
  for (const auto& [id, t] : teachers) dims[id] = t->dim();
  return dims;
}

// Strict JSON object access: every key must be known and present.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where,
               std::initializer_list<const char*> keys)
      : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigurationError(where_ + ": expected an object");
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items()) {
      if (!known.contains(k)) throw ConfigurationError(where_ + ": unknown key \"" + k + "\"");
    }
    for (const auto& k : known) {
      if (!j.contains(k)) throw ConfigurationError(where_ + ": missing key \"" + k + "\"");
    }
  }

  template <typename T>
  T get(const char* key) const {
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError(where_ + "." + key + ": " + e.what());
    }
  }
  const nlohmann::json& at(const char* key) const { return j_.at(key); }

 private:
  const nlohmann::json& j_;
  std::string where_;
};

std::pair<double, double> read_range(const StrictObject& o, const char* key) {
  const auto v = o.get<std::vector<double>>(key);
  if (v.size() != 2) throw ConfigurationError(std::string(key) + ": expected [lo, hi]");
  return {v[0], v[1]};
}

}  // namespace

void PretrainConfig::validate() const {
  train.validate();
  vit.validate();
  head_for(*this).validate();
  crops.validate();
  distill.validate();
  if (crops.global_size % vit.patch_size != 0 ||
      (crops.local_count > 0 && crops.local_size % vit.patch_size != 0)) {
    throw ParameterError("crop sizes must be multiples of the patch size");
  }
  if (!(mask_ratio.lo >= 0.0 && mask_ratio.hi <= 1.0 && mask_ratio.lo <= mask_ratio.hi)) {
    throw ParameterError("mask ratio range must lie within [0, 1]");
  }
  for (double w : {loss.dino, loss.ibot, loss.expert}) {
    if (!std::isfinite(w) || w < 0.0) throw ParameterError("loss weights must be non-negative");
  }
}

PretrainConfig PretrainConfig::toy() {
  PretrainConfig c;
  c.head.in_dim = c.vit.dim;
  return c;
}

PretrainConfig PretrainConfig::paper_fullscale() {
  PretrainConfig c;
  c.train = TrainConfig::paper_fullscale();
  c.vit = vit::ViTConfig::paper_fullscale();
  c.crops = ssl::CropConfig::paper_fullscale();
  c.head.in_dim = c.vit.dim;
  c.head.hidden_dim = 2048;
  c.head.bottleneck_dim = 256;
  c.head.prototypes = 65536;
  return c;
}

nlohmann::ordered_json to_json(const PretrainConfig& c) {
  nlohmann::ordered_json j;
  j["train"] = {{"teacher_momentum", c.train.teacher_momentum},
                {"batch_size", c.train.batch_size},
                {"base_lr", c.train.base_lr},
                {"min_lr", c.train.min_lr},
                {"warmup_iters", c.train.warmup_iters},
                {"total_iters", c.train.total_iters},
                {"grad_clip", c.train.grad_clip},
                {"weight_decay", c.train.weight_decay},
                {"seed", c.train.seed}};
  j["vit"] = {{"image_size", c.vit.image_size},
              {"patch_size", c.vit.patch_size},
              {"depth", c.vit.depth},
              {"dim", c.vit.dim},
              {"heads", c.vit.heads},
              {"ffn_hidden_ratio", c.vit.ffn_hidden_ratio},
              {"drop_path_rate", c.vit.drop_path_rate},
              {"layer_scale_init", c.vit.layer_scale_init}};
  j["head"] = {{"hidden_dim", c.head.hidden_dim},
               {"bottleneck_dim", c.head.bottleneck_dim},
               {"prototypes", c.head.prototypes},
               {"student_temp", c.head.student_temp},
               {"teacher_temp", c.head.teacher_temp},
               {"center_momentum", c.head.center_momentum}};
  j["crops"] = {{"global_scale", {c.crops.global_scale.lo, c.crops.global_scale.hi}},
                {"global_size", c.crops.global_size},
                {"local_scale", {c.crops.local_scale.lo, c.crops.local_scale.hi}},
                {"local_count", c.crops.local_count},
                {"local_size", c.crops.local_size}};
  j["mask_ratio"] = {c.mask_ratio.lo, c.mask_ratio.hi};
  j["distill"] = {{"alpha", c.distill.alpha}, {"beta", c.distill.beta},
                  {"gamma", c.distill.gamma}, {"mu", c.distill.mu},
                  {"lambda", c.distill.lambda}, {"phi", c.distill.phi},
                  {"eta", c.distill.eta},     {"theta", c.distill.theta}};
  j["loss"] = {{"dino", c.loss.dino}, {"ibot", c.loss.ibot}, {"expert", c.loss.expert}};
  j["teacher_seed"] = c.teacher_seed;
  return j;
}

PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
  PretrainConfig c;
  StrictObject root(j, "config", {"train", "vit", "head", "crops", "mask_ratio", "distill",
                                  "loss", "teacher_seed"});
  {
    StrictObject o(root.at("train"), "train",
                   {"teacher_momentum", "batch_size", "base_lr", "min_lr", "warmup_iters",
                    "total_iters", "grad_clip", "weight_decay", "seed"});
    c.train.teacher_momentum = o.get<double>("teacher_momentum");
    c.train.batch_size = o.get<std::size_t>("batch_size");
    c.train.base_lr = o.get<double>("base_lr");
    c.train.min_lr = o.get<double>("min_lr");
    c.train.warmup_iters = o.get<std::size_t>("warmup_iters");
    c.train.total_iters = o.get<std::size_t>("total_iters");
    c.train.grad_clip = o.get<double>("grad_clip");
    c.train.weight_decay = o.get<double>("weight_decay");
    c.train.seed = o.get<std::uint64_t>("seed");
  }
  {
    StrictObject o(root.at("vit"), "vit",
                   {"image_size", "patch_size", "depth", "dim", "heads", "ffn_hidden_ratio",
                    "drop_path_rate", "layer_scale_init"});
    c.vit.image_size = o.get<std::size_t>("image_size");
    c.vit.patch_size = o.get<std::size_t>("patch_size");
    c.vit.depth = o.get<std::size_t>("depth");
    c.vit.dim = o.get<std::size_t>("dim");
    c.vit.heads = o.get<std::size_t>("heads");
    c.vit.ffn_hidden_ratio = o.get<double>("ffn_hidden_ratio");
    c.vit.drop_path_rate = o.get<double>("drop_path_rate");
    c.vit.layer_scale_init = o.get<double>("layer_scale_init");
  }
  {
    StrictObject o(root.at("head"), "head",
                   {"hidden_dim", "bottleneck_dim", "prototypes", "student_temp",
                    "teacher_temp", "center_momentum"});
    c.head.hidden_dim = o.get<std::size_t>("hidden_dim");
    c.head.bottleneck_dim = o.get<std::size_t>("bottleneck_dim");
    c.head.prototypes = o.get<std::size_t>("prototypes");
    c.head.student_temp = o.get<double>("student_temp");
    c.head.teacher_temp = o.get<double>("teacher_temp");
    c.head.center_momentum = o.get<double>("center_momentum");
    c.head.in_dim = c.vit.dim;
  }
  {
    StrictObject o(root.at("crops"), "crops",
                   {"global_scale", "global_size", "local_scale", "local_count", "local_size"});
    const auto [glo, ghi] = read_range(o, "global_scale");
    const auto [llo, lhi] = read_range(o, "local_scale");
    c.crops.global_scale = {glo, ghi};
    c.crops.local_scale = {llo, lhi};
    c.crops.global_size = o.get<std::size_t>("global_size");
    c.crops.local_count = o.get<std::size_t>("local_count");
    c.crops.local_size = o.get<std::size_t>("local_size");
  }
  {
    const auto v = root.get<std::vector<double>>("mask_ratio");
    if (v.size() != 2) throw ConfigurationError("mask_ratio: expected [lo, hi]");
    c.mask_ratio = {v[0], v[1]};
  }
  {
    StrictObject o(root.at("distill"), "distill",
                   {"alpha", "beta", "gamma", "mu", "lambda", "phi", "eta", "theta"});
    c.distill.alpha = o.get<double>("alpha");
    c.distill.beta = o.get<double>("beta");
    c.distill.gamma = o.get<double>("gamma");
    c.distill.mu = o.get<double>("mu");
    c.distill.lambda = o.get<double>("lambda");
    c.distill.phi = o.get<double>("phi");
    c.distill.eta = o.get<double>("eta");
    c.distill.theta = o.get<double>("theta");
  }
  {
    StrictObject o(root.at("loss"), "loss", {"dino", "ibot", "expert"});
    c.loss.dino = o.get<double>("dino");
    c.loss.ibot = o.get<double>("ibot");
    c.loss.expert = o.get<double>("expert");
  }
  c.teacher_seed = root.get<std::uint64_t>("teacher_seed");
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const StepReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["dino"] = r.dino;
  j["ibot"] = r.ibot;
  j["expert"] = r.expert;
  j["total"] = r.total;
  j["grad_norm"] = r.grad_norm;
  if (r.teacher_a_cls_cosine) j["teacher_a_cls_cosine"] = *r.teacher_a_cls_cosine;
  return j;
}

Pretrainer::Pretrainer(PretrainConfig cfg, kd::TeacherSet teachers)
    : cfg_([&] {
        cfg.head.in_dim = cfg.vit.dim;
        cfg.validate();
        return cfg;
      }()),
      teachers_(std::move(teachers)),
      student_([&] {
        auto r = stream(cfg_.train.seed, kStudentInit);
        return vit::VisionTransformer::create(cfg_.vit, r);
      }()),
      teacher_(student_.frozen_copy()),
      cls_head_([&] {
        auto r = stream(cfg_.train.seed, kHeadInit);
        return ssl::DinoHead::create(head_for(cfg_), r);
      }()),
      patch_head_([&] {
        auto r = stream(cfg_.train.seed, kPatchHeadInit);
        return ssl::DinoHead::create(head_for(cfg_), r);
      }()),
      teacher_cls_head_(cls_head_.frozen_copy()),
      teacher_patch_head_(patch_head_.frozen_copy()),
      adapters_([&] {
        auto r = stream(cfg_.train.seed, kAdapterInit);
        return kd::ProjectionAdapters::create(cfg_.vit.dim, teacher_dims(teachers_), r);
      }()),
      cls_center_(ssl::CenterState::zeros(cfg_.head.prototypes)),
      patch_center_(ssl::CenterState::zeros(cfg_.head.prototypes)),
      optimizer_(AdamW::Options{0.9, 0.999, 1e-8, cfg_.train.weight_decay, true}),
      rng_(cfg_.train.seed) {
  optimizer_.set_decay_filter({".b", ".g", "ls1", "ls2", "cls_token", "mask_token", "pos_cls",
                               "pos_patch"});
  build_param_views();
}

void Pretrainer::build_param_views() {
  trainable_ = num::ParamSet{};
  trainable_.extend(student_.params(), "student.");
  trainable_.extend(cls_head_.params(), "cls_head.");
  trainable_.extend(patch_head_.params(), "patch_head.");
  trainable_.extend(adapters_.params(), "adapter.");
  ema_source_ = num::ParamSet{};
  ema_source_.extend(student_.params(), "backbone.");
  ema_source_.extend(cls_head_.params(), "cls_head.");
  ema_source_.extend(patch_head_.params(), "patch_head.");
  teacher_params_ = num::ParamSet{};
  teacher_params_.extend(teacher_.params(), "backbone.");
  teacher_params_.extend(teacher_cls_head_.params(), "cls_head.");
  teacher_params_.extend(teacher_patch_head_.params(), "patch_head.");
}

std::vector<std::size_t> Pretrainer::batch_indices(std::size_t step,
                                                   std::size_t dataset_size) const {
  if (dataset_size == 0) throw ParameterError("empty pretraining dataset");
  const std::size_t b = std::min(cfg_.train.batch_size, dataset_size);
  num::Rng r = stream(cfg_.train.seed, kBatch).substream(step);
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < b; ++i) {
    std::swap(order[i], order[i + r.uniform_index(dataset_size - i)]);
  }
  order.resize(b);
  return order;
}

StepReport Pretrainer::train_step(const data::ImageDataset& data) {
  const std::size_t s = step_;
  if (s >= cfg_.train.total_iters) {
    throw ParameterError("schedule of " + std::to_string(cfg_.train.total_iters) +
                         " iterations already completed");
  }
  const auto last_good = static_cast<long long>(s);
  StepReport report;
  report.step = s;
  report.lr = lr_at(s, cfg_.train);

  const auto idx = batch_indices(s, data.size());
  const std::size_t b = idx.size();
  const std::size_t n_local = cfg_.crops.local_count;
  std::vector<vit::Image> globals(2 * b), locals(n_local * b);
  std::vector<std::string> keys(2 * b);
  std::vector<vit::MaskSpec> masks(2 * b);
  const ssl::MaskConfig mask_cfg{cfg_.vit.patch_size, cfg_.mask_ratio};
  const num::Rng view_root = stream(cfg_.train.seed, kViews).substream(s);
  for (std::size_t i = 0; i < b; ++i) {
    num::Rng r = view_root.substream(i);
    auto vs = ssl::make_views(data.images[idx[i]], data.ids[idx[i]], cfg_.crops, mask_cfg, r);
    globals[i] = std::move(vs.u.image);
    globals[b + i] = std::move(vs.v.image);
    keys[i] = std::move(vs.u.key);
    keys[b + i] = std::move(vs.v.key);
    masks[i] = std::move(vs.u_mask);
    masks[b + i] = std::move(vs.v_mask);
    for (std::size_t l = 0; l < n_local; ++l) locals[l * b + i] = std::move(vs.locals[l].image);
  }
  num::Rng drop_rng = stream(cfg_.train.seed, kDropPath).substream(s);
  num::Rng* drop = cfg_.vit.drop_path_rate > 0.0 ? &drop_rng : nullptr;

  // EMA teacher on the unmasked global views.
  const auto t_out = teacher_.forward(globals);
  const Tensor t_cls_logits = teacher_cls_head_.forward(t_out.cls).detach();
  const Tensor t_patch_logits = teacher_patch_head_.forward(t_out.patches).detach();
  const std::size_t gg = t_out.grid_side * t_out.grid_side;
  const std::vector<Tensor> t_cls{row_range(t_cls_logits, 0, b), row_range(t_cls_logits, b, b)};
  const std::vector<Tensor> t_patch{row_range(t_patch_logits, 0, b * gg),
                                    row_range(t_patch_logits, b * gg, b * gg)};

  // Student on masked globals and locals.
  const auto s_masked = student_.forward(globals, masks, drop);
  Tensor cls_in = s_masked.cls;
  if (n_local > 0) {
    const auto s_local = student_.forward(locals, {}, drop);
    cls_in = num::concat_rows(std::vector<Tensor>{s_masked.cls, s_local.cls});
  }
  const Tensor s_cls_logits = cls_head_.forward(cls_in);
  std::vector<Tensor> s_cls;
  for (std::size_t v = 0; v < 2 + n_local; ++v) s_cls.push_back(row_range(s_cls_logits, v * b, b));
  kd::LossComponents comp;
  comp.dino = ssl::dino_loss(s_cls, t_cls, cfg_.head, cls_center_);

  const Tensor s_patch_logits = patch_head_.forward(s_masked.patches);
  const std::vector<Tensor> s_patch{row_range(s_patch_logits, 0, b * gg),
                                    row_range(s_patch_logits, b * gg, b * gg)};
  const std::vector<std::vector<vit::MaskSpec>> view_masks{
      std::vector<vit::MaskSpec>(masks.begin(), masks.begin() + static_cast<std::ptrdiff_t>(b)),
      std::vector<vit::MaskSpec>(masks.begin() + static_cast<std::ptrdiff_t>(b), masks.end())};
  comp.ibot = ssl::ibot_loss(s_patch, t_patch, view_masks, cfg_.head, patch_center_);

  // Expert distillation on the unmasked global views.
  bool any_teacher = false;
  for (kd::TeacherId id : kd::kAllTeachers) any_teacher = any_teacher || cfg_.distill.uses(id);
  kd::ExpertTerms terms;
  if (any_teacher && cfg_.loss.expert != 0.0) {
    const auto s_plain = student_.forward(globals, {}, drop);
    const std::vector<vit::TokenOutput> student_views{slice(s_plain, 0, b), slice(s_plain, b, b)};
    kd::TeacherTokens tokens;
    for (kd::TeacherId id : kd::kAllTeachers) {
      if (!cfg_.distill.uses(id)) continue;
      const auto it = teachers_.find(id);
      if (it == teachers_.end()) continue;  // expert_loss reports the gap
      const auto enc = it->second->encode(globals, keys);
      tokens[id] = {slice(enc, 0, b), slice(enc, b, b)};
    }
    comp.expert = kd::expert_loss(student_views, tokens, cfg_.distill, adapters_, &terms);
    if (const auto it = terms.cls_distance.find(kd::TeacherId::kA);
        it != terms.cls_distance.end()) {
      report.teacher_a_cls_cosine = 1.0 - it->second;
    }
  }

  const auto loss = kd::total_pretrain_loss(comp, cfg_.loss, last_good);
  report.dino = loss.dino;
  report.ibot = loss.ibot;
  report.expert = loss.expert;
  report.total = loss.total_value;
  if (!std::isfinite(loss.total_value)) {
    throw TrainingAbort("total", last_good, "non-finite total loss");
  }

  trainable_.zero_grad();
  loss.total.backward();
  report.grad_norm = clip_grad_norm(trainable_, cfg_.train.grad_clip);
  if (!std::isfinite(report.grad_norm)) {
    throw TrainingAbort("gradient", last_good, "non-finite gradient norm");
  }
  optimizer_.step(trainable_, report.lr);
  trainable_.zero_grad();

  ema_update(teacher_params_, ema_source_, cfg_.train.teacher_momentum);
  round_params(teacher_params_);
  cls_center_ = ssl::update_center(cls_center_, std::vector<Tensor>{t_cls_logits},
                                   cfg_.head.center_momentum);
  patch_center_ = ssl::update_center(patch_center_, std::vector<Tensor>{t_patch_logits},
                                     cfg_.head.center_momentum);
  num::round_to_f32(cls_center_.center);
  num::round_to_f32(patch_center_.center);
  ++step_;
  return report;
}

Checkpoint Pretrainer::checkpoint() const {
  Checkpoint ck;
  ck.add_string("meta.config", to_json(cfg_).dump());
  ck.add_u64("meta.step", step_);
  ck.add_u64("meta.adam_steps", optimizer_.steps());
  ck.add_rng("meta.rng", rng_);
  ck.add_params("train.", trainable_);
  ck.add_params("ema.", teacher_params_);
  ck.add("center.cls", std::span<const double>(cls_center_.center));
  ck.add("center.patch", std::span<const double>(patch_center_.center));
  for (const auto& [name, t] : trainable_) {
    for (const auto* moments : {&optimizer_.first_moments(), &optimizer_.second_moments()}) {
      const std::string key =
          (moments == &optimizer_.first_moments() ? "adam.m." : "adam.v.") + name;
      const auto it = moments->find(name);
      if (it == moments->end()) {
        ck.add(key, std::vector<double>(t.numel(), 0.0));
      } else {
        ck.add(key, std::span<const double>(it->second));
      }
    }
  }
  return ck;
}

void Pretrainer::restore(const Checkpoint& ck) {
  if (ck.get_string("meta.config") != to_json(cfg_).dump()) {
    throw ConfigurationError("checkpoint was written with a different configuration");
  }
  step_ = ck.get_u64("meta.step");
  optimizer_.set_steps(ck.get_u64("meta.adam_steps"));
  rng_ = ck.get_rng("meta.rng");
  ck.load_params("train.", trainable_);
  ck.load_params("ema.", teacher_params_);
  ck.copy_to("center.cls", cls_center_.center);
  ck.copy_to("center.patch", patch_center_.center);
  for (const auto& [name, t] : trainable_) {
    auto& m = optimizer_.first_moments()[name];
    auto& v = optimizer_.second_moments()[name];
    m.assign(t.numel(), 0.0);
    v.assign(t.numel(), 0.0);
    ck.copy_to("adam.m." + name, m);
    ck.copy_to("adam.v." + name, v);
  }
}

Pretrainer Pretrainer::from_checkpoint(const Checkpoint& ck, kd::TeacherSet teachers) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ck.get_string("meta.config"));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint configuration: ") + e.what());
  }
  Pretrainer p(pretrain_config_from_json(j), std::move(teachers));
  p.restore(ck);
  return p;
}

vit::TokenOutput Pretrainer::encode(std::span<const vit::Image> images, bool teacher) const {
  return (teacher ? teacher_ : student_).forward(images).detached();
}

std::vector<std::vector<double>> Pretrainer::embed(std::span<const vit::Image> images,
                                                   bool teacher) const {
  std::vector<std::vector<double>> out;
  const std::size_t chunk = 128;
  for (std::size_t begin = 0; begin < images.size(); begin += chunk) {
    const auto part = images.subspan(begin, std::min(chunk, images.size() - begin));
    const auto tokens = encode(part, teacher);
    const std::size_t d = tokens.dim();
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto row = tokens.cls.values().subspan(i * d, d);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

double Pretrainer::teacher_cls_cosine(std::span<const vit::Image> images,
                                      kd::TeacherId id) const {
  const auto it = teachers_.find(id);
  if (it == teachers_.end()) {
    throw ConfigurationError(kd::to_string(id) + " is not configured");
  }
  const std::vector<std::string> keys(images.size());
  const auto t = it->second->encode(images, keys);
  const auto s = encode(images, false);
  const Tensor projected = adapters_.project_cls(id, s.cls).detach();
  return num::mean(num::cosine_rows(projected, t.cls)).item();
}

}  // namespace ukd::train

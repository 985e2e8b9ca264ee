#include "ukd/downstream/abmil.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "ukd/downstream/survival.hpp"
#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"
#include "ukd/pretrain/optim.hpp"
#include "ukd/stats/metrics.hpp"

namespace ukd::eval {

using num::Tensor;

void AbmilConfig::validate() const {
  if (embed_dim == 0 || hidden_dim == 0) throw ParameterError("ABMIL dims must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("ABMIL dropout must lie in [0, 1)");
  if (!(lr > 0.0)) throw ParameterError("ABMIL learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ParameterError("ABMIL weight decay must be non-negative");
}

AbmilConfig AbmilConfig::paper() { return AbmilConfig{}; }

Abmil Abmil::create(std::size_t in_dim, std::size_t out_dim, const AbmilConfig& cfg,
                    num::Rng& rng) {
  cfg.validate();
  if (in_dim == 0 || out_dim == 0) throw ParameterError("ABMIL needs positive input/output dims");
  num::ParamSet ps;
  ps.add("fc.w", num::init_xavier(in_dim, cfg.embed_dim, rng));
  ps.add("fc.b", num::Tensor::zeros({cfg.embed_dim}, true));
  ps.add("attn_a.w", num::init_xavier(cfg.embed_dim, cfg.hidden_dim, rng));
  ps.add("attn_a.b", num::Tensor::zeros({cfg.hidden_dim}, true));
  ps.add("attn_b.w", num::init_xavier(cfg.embed_dim, cfg.hidden_dim, rng));
  ps.add("attn_b.b", num::Tensor::zeros({cfg.hidden_dim}, true));
  ps.add("attn_c.w", num::init_xavier(cfg.hidden_dim, 1, rng));
  ps.add("attn_c.b", num::Tensor::zeros({1}, true));
  ps.add("cls.w", num::init_xavier(cfg.embed_dim, out_dim, rng));
  ps.add("cls.b", num::Tensor::zeros({out_dim}, true));
  return Abmil(in_dim, out_dim, cfg, std::move(ps));
}

Abmil::Abmil(std::size_t in_dim, std::size_t out_dim, AbmilConfig cfg, num::ParamSet params)
    : in_dim_(in_dim), out_dim_(out_dim), cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  if (params_.get("fc.w").shape() != num::Shape{in_dim_, cfg_.embed_dim} ||
      params_.get("cls.w").shape() != num::Shape{cfg_.embed_dim, out_dim_}) {
    throw DimensionError("ABMIL parameters do not match the configured dimensions");
  }
}

AbmilOutput Abmil::forward(const Tensor& x, num::Rng* dropout_rng) const {
  if (x.rank() != 2 || x.dim(1) != in_dim_) {
    throw DimensionError("ABMIL expects instances [n, " + std::to_string(in_dim_) + "], got " +
                         num::shape_string(x.shape()));
  }
  if (x.dim(0) == 0) throw DegenerateInputError("ABMIL bag has no instances");
  const bool training = dropout_rng != nullptr;
  num::Rng unused(0);
  num::Rng& rng = training ? *dropout_rng : unused;
  Tensor h = num::relu(num::linear(x, params_.get("fc.w"), params_.get("fc.b")));
  h = num::dropout(h, cfg_.dropout, rng, training);
  Tensor a = num::tanh(num::linear(h, params_.get("attn_a.w"), params_.get("attn_a.b")));
  Tensor b = num::sigmoid(num::linear(h, params_.get("attn_b.w"), params_.get("attn_b.b")));
  Tensor gated = num::dropout(num::mul(a, b), cfg_.dropout, rng, training);
  Tensor scores = num::linear(gated, params_.get("attn_c.w"), params_.get("attn_c.b"));  // [n, 1]
  AbmilOutput out;
  out.attention = num::softmax(num::transpose(scores), -1);  // [1, n]
  out.pooled = num::matmul(out.attention, h);
  out.logits = num::linear(out.pooled, params_.get("cls.w"), params_.get("cls.b"));
  return out;
}

AbmilOutput Abmil::forward(const FeatureBag& bag, num::Rng* dropout_rng) const {
  if (bag.size() == 0) throw DegenerateInputError("bag " + bag.bag_id + " has no instances");
  return forward(bag.instances.tensor(), dropout_rng);
}

nlohmann::ordered_json to_json(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  j["train_loss"] = e.train_loss;
  j["val_loss"] = e.val_loss ? nlohmann::ordered_json(*e.val_loss) : nlohmann::ordered_json(nullptr);
  j["val_metric"] =
      e.val_metric ? nlohmann::ordered_json(*e.val_metric) : nlohmann::ordered_json(nullptr);
  j["improved"] = e.improved;
  return j;
}

std::string to_jsonl(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  for (const auto& e : log) out << to_json(e).dump() << '\n';
  return out.str();
}

namespace {

Tensor class_loss(const Tensor& logits, int label) {
  std::vector<double> onehot(logits.numel(), 0.0);
  onehot[static_cast<std::size_t>(label)] = 1.0;
  return num::cross_entropy(Tensor::from(logits.shape(), std::move(onehot)),
                            num::log_softmax(logits, -1));
}

using LossFn = std::function<Tensor(const Tensor& logits, const FeatureBag& bag)>;
using MetricFn = std::function<std::optional<double>(const Abmil&, const std::vector<FeatureBag>&)>;

void check_bags(const std::vector<FeatureBag>& bags, std::size_t dim) {
  for (const auto& b : bags) {
    if (b.size() == 0) throw DegenerateInputError("bag " + b.bag_id + " has no instances");
    if (b.instances.dim != dim) {
      throw DimensionError("bag " + b.bag_id + " has feature dim " +
                           std::to_string(b.instances.dim) + ", expected " + std::to_string(dim));
    }
  }
}

double mean_loss(const Abmil& model, const std::vector<FeatureBag>& bags, const LossFn& loss) {
  double sum = 0.0;
  for (const auto& bag : bags) sum += loss(model.forward(bag).logits, bag).item();
  return sum / static_cast<double>(bags.size());
}

AbmilResult train_loop(const std::vector<FeatureBag>& train, const std::vector<FeatureBag>& val,
                       std::size_t out_dim, const AbmilConfig& cfg, std::uint64_t seed,
                       const LossFn& loss, const MetricFn& metric) {
  cfg.validate();
  if (train.empty()) throw ConfigurationError("ABMIL training set is empty");
  const std::size_t dim = train.front().instances.dim;
  check_bags(train, dim);
  check_bags(val, dim);
  const num::Rng root(seed);
  num::Rng init = root.substream(0);
  Abmil model = Abmil::create(dim, out_dim, cfg, init);
  train::AdamW opt({0.9, 0.999, 1e-8, cfg.weight_decay, false});
  AbmilResult result{model, {}, 0, false};
  num::ParamSet best = model.params().clone(false);
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    num::Rng epoch_rng = root.substream(1, epoch);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[epoch_rng.uniform_index(i)]);
    }
    double total = 0.0;
    for (std::size_t i : order) {
      model.params().zero_grad();
      const Tensor l = loss(model.forward(train[i], &epoch_rng).logits, train[i]);
      if (!std::isfinite(l.item())) {
        throw TrainingAbort("abmil_loss", static_cast<long long>(epoch) - 1,
                            "non-finite ABMIL loss on bag " + train[i].bag_id);
      }
      total += l.item();
      l.backward();
      opt.step(model.params(), cfg.lr);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = cfg.lr;
    entry.train_loss = total / static_cast<double>(train.size());
    const double monitor = val.empty() ? entry.train_loss : mean_loss(model, val, loss);
    if (!val.empty()) {
      entry.val_loss = monitor;
      entry.val_metric = metric(model, val);
    }
    if (val.empty() || monitor < best_val) {
      best_val = monitor;
      best = model.params().clone(false);
      result.best_epoch = epoch;
      since_best = 0;
      entry.improved = true;
    } else {
      ++since_best;
    }
    result.log.push_back(entry);
    if (!val.empty() && since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  auto restored = best.clone(true);
  result.model = Abmil(dim, out_dim, cfg, std::move(restored));
  return result;
}

}  // namespace

AbmilResult train_abmil(const std::vector<FeatureBag>& train, const std::vector<FeatureBag>& val,
                        std::size_t classes, const AbmilConfig& cfg, std::uint64_t seed) {
  if (classes < 2) throw ConfigurationError("classification needs at least two classes");
  std::vector<bool> seen(classes, false);
  for (const auto& bags : {&train, &val}) {
    for (const auto& b : *bags) {
      if (b.label < 0 || static_cast<std::size_t>(b.label) >= classes) {
        throw ConfigurationError("bag " + b.bag_id + " has label " + std::to_string(b.label) +
                                 " outside [0, " + std::to_string(classes) + ")");
      }
    }
  }
  for (const auto& b : train) seen[static_cast<std::size_t>(b.label)] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw ConfigurationError("training bags cover fewer than two classes");
  }
  return train_loop(
      train, val, classes, cfg, seed,
      [](const Tensor& logits, const FeatureBag& bag) { return class_loss(logits, bag.label); },
      [classes](const Abmil& model, const std::vector<FeatureBag>& bags) -> std::optional<double> {
        std::vector<int> y;
        for (const auto& b : bags) y.push_back(b.label);
        try {
          return stats::auc(y, predict_proba(model, bags), classes);
        } catch (const UndefinedMetricError&) {
          return std::nullopt;
        }
      });
}

AbmilResult train_abmil_survival(const std::vector<FeatureBag>& train,
                                 const std::vector<FeatureBag>& val, const AbmilConfig& cfg,
                                 std::uint64_t seed) {
  for (const auto& bags : {&train, &val}) {
    for (const auto& b : *bags) {
      if (!b.survival || b.survival->bin < 0) {
        throw ConfigurationError("bag " + b.bag_id + " lacks a binned survival record");
      }
    }
  }
  return train_loop(
      train, val, kSurvivalBins, cfg, seed,
      [](const Tensor& logits, const FeatureBag& bag) { return nll_surv_loss(logits, *bag.survival); },
      [](const Abmil& model, const std::vector<FeatureBag>& bags) -> std::optional<double> {
        std::vector<SurvivalRecord> records;
        for (const auto& b : bags) records.push_back(*b.survival);
        try {
          return c_index(predict_risk(model, bags), records);
        } catch (const UndefinedMetricError&) {
          return std::nullopt;
        }
      });
}

std::vector<double> predict_proba(const Abmil& model, const std::vector<FeatureBag>& bags) {
  std::vector<double> out;
  out.reserve(bags.size() * model.out_dim());
  for (const auto& bag : bags) {
    const Tensor p = num::softmax(model.forward(bag).logits, -1);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return out;
}

std::vector<double> predict_risk(const Abmil& model, const std::vector<FeatureBag>& bags) {
  if (model.out_dim() != kSurvivalBins) {
    throw DimensionError("risk prediction needs a 4-bin hazard head");
  }
  std::vector<double> out;
  for (const auto& bag : bags) {
    const Tensor logits = model.forward(bag).logits;
    double s = 1.0, sum = 0.0;
    for (double z : logits.values()) {
      const double h = 1.0 / (1.0 + std::exp(-z));
      s *= 1.0 - h;
      sum += s;
    }
    out.push_back(-sum);
  }
  return out;
}

}  // namespace ukd::eval

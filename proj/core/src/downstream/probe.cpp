#include "ukd/downstream/probe.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"
#include "ukd/pretrain/optim.hpp"
#include "ukd/stats/metrics.hpp"

namespace ukd::eval {

using num::Tensor;

void LinearProbeConfig::validate() const {
  if (!(lr > 0.0) || !(weight_decay >= 0.0) || batch_size == 0) {
    throw ParameterError("linear probe needs lr > 0, weight_decay >= 0 and batch_size > 0");
  }
}

std::vector<double> LinearProbe::predict_proba(const Features& x) const {
  if (x.dim != dim) {
    throw DimensionError("probe expects " + std::to_string(dim) + "-dim features, got " +
                         std::to_string(x.dim));
  }
  const Tensor logits = num::linear(x.tensor(), Tensor::from({dim, classes}, weight),
                                    Tensor::from({classes}, bias));
  const Tensor p = num::softmax(logits, -1);
  return {p.values().begin(), p.values().end()};
}

std::vector<int> LinearProbe::predict(const Features& x) const {
  return stats::argmax_rows(predict_proba(x), classes);
}

namespace {

Tensor onehot(std::span<const int> y, std::span<const std::size_t> rows, std::size_t classes) {
  std::vector<double> v(rows.size() * classes, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    v[i * classes + static_cast<std::size_t>(y[rows[i]])] = 1.0;
  }
  return Tensor::from({rows.size(), classes}, std::move(v));
}

void check_labels(std::span<const int> y, std::size_t rows, std::size_t classes, const char* what) {
  if (y.size() != rows) {
    throw DimensionError(std::string(what) + ": " + std::to_string(rows) + " rows but " +
                         std::to_string(y.size()) + " labels");
  }
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= classes) {
      throw ConfigurationError(std::string(what) + ": label " + std::to_string(v) +
                               " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

double dataset_loss(const num::ParamSet& ps, const Features& x, std::span<const int> y,
                    std::size_t classes) {
  std::vector<std::size_t> all(x.rows());
  std::iota(all.begin(), all.end(), 0);
  const Tensor logits = num::linear(x.tensor(), ps.get("w"), ps.get("b"));
  return num::cross_entropy(onehot(y, all, classes), num::log_softmax(logits, -1)).item();
}

LinearProbe snapshot(const num::ParamSet& ps, std::size_t dim, std::size_t classes) {
  LinearProbe p;
  p.dim = dim;
  p.classes = classes;
  p.weight.assign(ps.get("w").values().begin(), ps.get("w").values().end());
  p.bias.assign(ps.get("b").values().begin(), ps.get("b").values().end());
  return p;
}

}  // namespace

ProbeResult train_linear_probe(const Features& train_x, std::span<const int> train_y,
                               const Features& val_x, std::span<const int> val_y,
                               std::size_t classes, const LinearProbeConfig& cfg,
                               std::uint64_t seed) {
  cfg.validate();
  if (classes < 2) throw ConfigurationError("linear probe needs at least two classes");
  if (train_x.rows() == 0) throw ConfigurationError("linear probe training set is empty");
  const bool has_val = val_x.rows() > 0;
  if (has_val && val_x.dim != train_x.dim) {
    throw DimensionError("validation features have dim " + std::to_string(val_x.dim) +
                         ", training features " + std::to_string(train_x.dim));
  }
  check_labels(train_y, train_x.rows(), classes, "probe training set");
  check_labels(val_y, val_x.rows(), classes, "probe validation set");
  const std::size_t dim = train_x.dim;
  const num::Rng root(seed);
  num::Rng init = root.substream(0);
  num::ParamSet ps;
  ps.add("w", num::init_xavier(dim, classes, init));
  ps.add("b", Tensor::zeros({classes}, true));
  train::AdamW opt({0.9, 0.999, 1e-8, cfg.weight_decay, false});

  ProbeResult result;
  result.model = snapshot(ps, dim, classes);
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const std::size_t n = train_x.rows();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Cosine annealing from lr to 0 across max_epochs, stepped per epoch.
    const double lr = 0.5 * cfg.lr *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch - 1) /
                                          static_cast<double>(cfg.max_epochs)));
    num::Rng rng = root.substream(1, epoch);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start,
                                              std::min(cfg.batch_size, n - start));
      const Features xb = train_x.select(rows);
      ps.zero_grad();
      const Tensor logits = num::linear(xb.tensor(), ps.get("w"), ps.get("b"));
      const Tensor loss = num::cross_entropy(onehot(train_y, rows, classes),
                                             num::log_softmax(logits, -1));
      total += loss.item() * static_cast<double>(rows.size());
      loss.backward();
      opt.step(ps, lr);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = total / static_cast<double>(n);
    if (has_val) {
      entry.val_loss = dataset_loss(ps, val_x, val_y, classes);
      entry.val_metric = stats::accuracy(val_y, snapshot(ps, dim, classes).predict(val_x));
    }
    const double monitor = has_val ? *entry.val_loss : entry.train_loss;
    if (!has_val || monitor < best_val) {
      best_val = monitor;
      result.model = snapshot(ps, dim, classes);
      result.best_epoch = epoch;
      since_best = 0;
      entry.improved = true;
    } else {
      ++since_best;
    }
    result.log.push_back(entry);
    if (has_val && since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace ukd::eval

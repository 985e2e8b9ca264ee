#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "ukd/downstream/data.hpp"
#include "ukd/numerics/param_set.hpp"
#include "ukd/numerics/rng.hpp"

namespace ukd::eval {

struct AbmilConfig {
  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 128;
  double dropout = 0.25;
  double lr = 2e-4;
  double weight_decay = 1e-5;
  std::size_t max_epochs = 100;
  /// Epochs without a validation-loss improvement before stopping.
  std::size_t patience = 20;

  void validate() const;
  static AbmilConfig paper();
};

struct AbmilOutput {
  num::Tensor logits;     // [1, out_dim]
  num::Tensor attention;  // [1, n], sums to 1
  num::Tensor pooled;     // [1, embed_dim]
};

/// Gated attention MIL: h = ReLU(x W1 + b1), a = softmax over instances of
/// w^T (tanh(h Va) * sigmoid(h Ub)), pooled = a h, logits = pooled Wc + bc.
class Abmil {
 public:
  static Abmil create(std::size_t in_dim, std::size_t out_dim, const AbmilConfig& cfg,
                      num::Rng& rng);
  Abmil(std::size_t in_dim, std::size_t out_dim, AbmilConfig cfg, num::ParamSet params);

  /// instances[n, in_dim]. Dropout runs only when `dropout_rng` is given.
  AbmilOutput forward(const num::Tensor& instances, num::Rng* dropout_rng = nullptr) const;
  AbmilOutput forward(const FeatureBag& bag, num::Rng* dropout_rng = nullptr) const;

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  const AbmilConfig& config() const { return cfg_; }
  num::ParamSet& params() { return params_; }
  const num::ParamSet& params() const { return params_; }

 private:
  std::size_t in_dim_, out_dim_;
  AbmilConfig cfg_;
  num::ParamSet params_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_metric;
  bool improved = false;
};

nlohmann::ordered_json to_json(const EpochLog& e);
std::string to_jsonl(const std::vector<EpochLog>& log);

struct AbmilResult {
  Abmil model;
  std::vector<EpochLog> log;
  /// Epoch whose parameters were returned; 0 means the initialization.
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Cross-entropy training, one bag per step, AdamW. Returns the parameters
/// of the epoch with the lowest validation loss (the last epoch when `val` is
/// empty). Fewer than two classes in `train` raise ConfigurationError.
AbmilResult train_abmil(const std::vector<FeatureBag>& train, const std::vector<FeatureBag>& val,
                        std::size_t classes, const AbmilConfig& cfg, std::uint64_t seed);

/// Same loop with four hazard outputs and the discrete-time survival NLL.
/// Bags must carry binned survival records.
AbmilResult train_abmil_survival(const std::vector<FeatureBag>& train,
                                 const std::vector<FeatureBag>& val, const AbmilConfig& cfg,
                                 std::uint64_t seed);

/// Softmax class probabilities, row-major [bags, classes].
std::vector<double> predict_proba(const Abmil& model, const std::vector<FeatureBag>& bags);
/// Risk = -sum_k S_k from the hazard head; higher means earlier death.
std::vector<double> predict_risk(const Abmil& model, const std::vector<FeatureBag>& bags);

}  // namespace ukd::eval

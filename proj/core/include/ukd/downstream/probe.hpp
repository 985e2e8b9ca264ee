#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ukd/downstream/abmil.hpp"
#include "ukd/downstream/data.hpp"

namespace ukd::eval {

struct LinearProbeConfig {
  double lr = 5e-4;
  double weight_decay = 1e-5;
  std::size_t max_epochs = 3000;
  std::size_t patience = 100;
  std::size_t batch_size = 256;

  void validate() const;
};

struct LinearProbe {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> weight;  // [dim, classes]
  std::vector<double> bias;    // [classes]

  /// Softmax probabilities, row-major [rows, classes].
  std::vector<double> predict_proba(const Features& x) const;
  std::vector<int> predict(const Features& x) const;
};

struct ProbeResult {
  LinearProbe model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// One linear layer on frozen features: AdamW, cosine annealing over
/// max_epochs, shuffled mini-batches, early stopping on validation loss.
/// Without validation data the final epoch is returned.
ProbeResult train_linear_probe(const Features& train_x, std::span<const int> train_y,
                               const Features& val_x, std::span<const int> val_y,
                               std::size_t classes, const LinearProbeConfig& cfg,
                               std::uint64_t seed);

}  // namespace ukd::eval

#pragma once

#include <span>
#include <vector>

#include "ukd/downstream/data.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::eval {

inline constexpr std::size_t kSurvivalBins = 4;
inline constexpr double kSurvivalEps = 1e-7;

/// Discrete-time hazard NLL for one record from hazard logits [4] or [1, 4]:
/// event at bin t gives -log S_{t-1} - log h_t, censoring at t gives -log S_t,
/// with S_k = prod_{j<=k} (1 - h_j), S_{-1} = 1 and every log argument
/// clamped below by 1e-7.
num::Tensor nll_surv_loss(const num::Tensor& hazard_logits, const SurvivalRecord& record);
double nll_surv_loss(std::span<const double> hazard_logits, const SurvivalRecord& record);

struct SurvivalBins {
  /// Lower boundary of bins 1..3: the time of the first record in each bin.
  std::vector<double> edges;
  std::vector<int> bins;
  /// Set when adjacent edges coincide (heavy ties).
  bool degenerate = false;
};

/// Sorts times (stable) and cuts the order into four near-equal bins; bin
/// sizes differ by at most one. All-equal times put every record in bin 0.
/// Fewer than four records raise ConfigurationError.
SurvivalBins bin_survival_times(std::span<const double> times);
/// Bin of a new time under fitted edges: the largest b with time >= edge_b.
int assign_bin(const SurvivalBins& fitted, double time);

/// Harrell's C-index. Pair (i, j) is comparable when i has an event and
/// time_i < time_j, or the times tie and j is censored. Concordant when
/// risk_i > risk_j; tied risks count one half. O(n log n).
/// No comparable pair raises UndefinedMetricError.
double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records);

}  // namespace ukd::eval

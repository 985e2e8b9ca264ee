#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ukd::stats {

struct MetricReport {
  std::string name;
  double point_estimate = 0.0;
  double ci_low = 0.0;   // 2.5th percentile of the replicates
  double ci_high = 0.0;  // 97.5th percentile
  double bootstrap_mean = 0.0;
  double bootstrap_std = 0.0;  // sample standard deviation
  std::size_t replicates = 1000;
  /// Resamples on which the metric was undefined and that were drawn again.
  std::size_t redraws = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

nlohmann::ordered_json to_json(const MetricReport& r);

/// Metric evaluated on a resample, given as indices into the test set.
using ResampledMetric = std::function<double(std::span<const std::size_t>)>;

/// Non-parametric bootstrap over n test items. Replicate r draws from the
/// substream (seed, r), so results do not depend on evaluation order.
/// Resamples raising UndefinedMetricError are redrawn; if more than half of
/// all draws are undefined, DegenerateDatasetError is raised.
MetricReport bootstrap(const std::string& name, std::size_t n, const ResampledMetric& metric,
                       std::size_t replicates, std::uint64_t seed);

/// Convenience form for label metrics such as balanced_accuracy.
MetricReport bootstrap(const std::string& name,
                       const std::function<double(std::span<const int>, std::span<const int>)>& metric,
                       std::span<const int> y_true, std::span<const int> y_pred,
                       std::size_t replicates, std::uint64_t seed);

/// Linear-interpolated percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

}  // namespace ukd::stats

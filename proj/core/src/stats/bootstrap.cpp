#include "ukd/stats/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ukd/errors.hpp"
#include "ukd/numerics/rng.hpp"

namespace ukd::stats {

nlohmann::ordered_json to_json(const MetricReport& r) {
  return {{"name", r.name},
          {"point_estimate", r.point_estimate},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"bootstrap_mean", r.bootstrap_mean},
          {"bootstrap_std", r.bootstrap_std},
          {"replicates", r.replicates},
          {"redraws", r.redraws}};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ParameterError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw ParameterError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

MetricReport bootstrap(const std::string& name, std::size_t n, const ResampledMetric& metric,
                       std::size_t replicates, std::uint64_t seed) {
  if (replicates == 0) throw ParameterError("bootstrap needs at least one replicate");
  if (n == 0) throw DegenerateDatasetError("bootstrap of an empty test set");
  MetricReport report;
  report.name = name;
  report.replicates = replicates;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  report.point_estimate = metric(all);

  const num::Rng root(seed);
  std::vector<double> values(replicates);
  std::vector<std::size_t> idx(n);
  std::size_t failures = 0;
  for (std::size_t r = 0; r < replicates; ++r) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      num::Rng rng = root.substream(r, attempt);
      for (auto& i : idx) i = rng.uniform_index(n);
      try {
        values[r] = metric(idx);
        break;
      } catch (const UndefinedMetricError&) {
        ++failures;
        // failures > replicates means more than half of all draws failed.
        if (failures > replicates) {
          throw DegenerateDatasetError("bootstrap: metric " + name +
                                       " undefined on more than half of the resamples");
        }
      }
    }
  }
  report.redraws = failures;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(replicates);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  report.bootstrap_mean = mean;
  report.bootstrap_std = replicates > 1 ? std::sqrt(ss / static_cast<double>(replicates - 1)) : 0.0;
  report.ci_low = percentile(values, 2.5);
  report.ci_high = percentile(values, 97.5);
  return report;
}

MetricReport bootstrap(const std::string& name,
                       const std::function<double(std::span<const int>, std::span<const int>)>& metric,
                       std::span<const int> y_true, std::span<const int> y_pred,
                       std::size_t replicates, std::uint64_t seed) {
  if (y_true.size() != y_pred.size()) {
    throw DimensionError("bootstrap: label and prediction counts differ");
  }
  std::vector<int> t, p;
  return bootstrap(
      name, y_true.size(),
      [&](std::span<const std::size_t> idx) {
        t.resize(idx.size());
        p.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          t[i] = y_true[idx[i]];
          p[i] = y_pred[idx[i]];
        }
        return metric(t, p);
      },
      replicates, seed);
}

}  // namespace ukd::stats

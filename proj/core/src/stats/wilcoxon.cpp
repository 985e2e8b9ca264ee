#include "ukd/stats/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ukd/errors.hpp"

namespace ukd::stats {

Alternative parse_alternative(const std::string& s) {
  if (s == "two_sided" || s == "two-sided") return Alternative::kTwoSided;
  if (s == "greater") return Alternative::kGreater;
  if (s == "less") return Alternative::kLess;
  throw ConfigurationError("unknown alternative \"" + s + "\" (two_sided, greater, less)");
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative) {
  if (a.size() != b.size()) throw DimensionError("wilcoxon: samples must be paired");
  if (a.empty()) throw UndefinedTestError("wilcoxon: no pairs");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (!std::isfinite(d)) throw ParameterError("wilcoxon: non-finite difference");
    if (d != 0.0) diff.push_back(d);
  }
  if (diff.empty()) throw UndefinedTestError("wilcoxon: all differences are zero");
  const std::size_t n = diff.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diff[x]) < std::abs(diff[y]);
  });
  // Doubled midranks are integers, so the exact distribution is over integers.
  std::vector<long long> twice_rank(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(diff[order[j]]) == std::abs(diff[order[i]])) ++j;
    for (std::size_t t = i; t < j; ++t) twice_rank[order[t]] = static_cast<long long>(i + j + 1);
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  long long twice_w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diff[i] > 0) twice_w += twice_rank[i];
  }

  WilcoxonResult res;
  res.n = n;
  res.statistic = static_cast<double>(twice_w) / 2.0;
  if (n <= kWilcoxonExactMaxN) {
    res.exact = true;
    const std::size_t patterns = std::size_t{1} << n;
    std::size_t ge = 0, le = 0;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
      long long w = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask >> i & 1u) w += twice_rank[i];
      }
      if (w >= twice_w) ++ge;
      if (w <= twice_w) ++le;
    }
    const double total = static_cast<double>(patterns);
    const double p_ge = static_cast<double>(ge) / total;
    const double p_le = static_cast<double>(le) / total;
    switch (alternative) {
      case Alternative::kGreater: res.p_value = p_ge; break;
      case Alternative::kLess: res.p_value = p_le; break;
      case Alternative::kTwoSided: res.p_value = std::min(1.0, 2.0 * std::min(p_ge, p_le)); break;
    }
    return res;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double sd = std::sqrt(var);
  const double d = res.statistic - mean;
  auto upper_tail = [](double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); };
  switch (alternative) {
    case Alternative::kGreater: res.p_value = upper_tail((d - 0.5) / sd); break;
    case Alternative::kLess: res.p_value = upper_tail((-d - 0.5) / sd); break;
    case Alternative::kTwoSided:
      res.p_value = std::min(1.0, 2.0 * upper_tail(std::max(0.0, std::abs(d) - 0.5) / sd));
      break;
  }
  return res;
}

}  // namespace ukd::stats

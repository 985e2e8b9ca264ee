#include "ukd/stats/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

#include "ukd/errors.hpp"

namespace ukd::stats {

namespace {

void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " labels vs " +
                         std::to_string(b) + " predictions");
  }
  if (a == 0) throw UndefinedMetricError(std::string(what) + " of an empty sample");
}

}  // namespace

double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  check_pair(y_true.size(), y_pred.size(), "balanced_accuracy");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // hits, support
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    auto& c = per_class[y_true[i]];
    ++c.second;
    if (y_pred[i] == y_true[i]) ++c.first;
  }
  for (int p : y_pred) {
    if (!per_class.contains(p)) {
      throw UndefinedMetricError("balanced_accuracy: predicted class " + std::to_string(p) +
                                 " is absent from y_true");
    }
  }
  double sum = 0.0;
  for (const auto& [label, c] : per_class) {
    sum += static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return sum / static_cast<double>(per_class.size());
}

double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred) {
  check_pair(y_true.size(), y_pred.size(), "weighted_f1");
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  };
  std::map<int, Counts> per_class;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++per_class[y_true[i]].support;
    if (y_true[i] == y_pred[i]) {
      ++per_class[y_true[i]].tp;
    } else {
      ++per_class[y_true[i]].fn;
      ++per_class[y_pred[i]].fp;
    }
  }
  double sum = 0.0;
  for (const auto& [label, c] : per_class) {
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    const double f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
    sum += static_cast<double>(c.support) * f1;
  }
  return sum / static_cast<double>(y_true.size());
}

double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  check_pair(y_true.size(), y_pred.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

double binary_auc(std::span<const int> y_true, std::span<const double> scores) {
  check_pair(y_true.size(), scores.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the midrank keeps every quantity an exact integer.
  std::size_t pos = 0;
  unsigned long long twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const unsigned long long twice_mid = i + j + 1;  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (y_true[order[t]] != 0 && y_true[order[t]] != 1) {
        throw ParameterError("binary AUC labels must be 0 or 1");
      }
      if (y_true[order[t]] == 1) {
        ++pos;
        twice_rank_sum += twice_mid;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("AUC needs both classes present");
  // Mann-Whitney U in half units: 2U = 2R - pos(pos+1).
  const unsigned long long twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auc(std::span<const int> y_true, std::span<const double> scores, std::size_t classes) {
  if (classes < 2) throw ParameterError("AUC needs at least two score columns");
  if (scores.size() != y_true.size() * classes) {
    throw DimensionError("auc: scores hold " + std::to_string(scores.size()) + " values, expected " +
                         std::to_string(y_true.size()) + " x " + std::to_string(classes));
  }
  const std::size_t n = y_true.size();
  for (int y : y_true) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ParameterError("auc: label " + std::to_string(y) + " outside [0, " +
                           std::to_string(classes) + ")");
    }
  }
  std::vector<int> bin(n);
  std::vector<double> column(n);
  auto one_vs_rest = [&](std::size_t c) {
    for (std::size_t i = 0; i < n; ++i) {
      bin[i] = y_true[i] == static_cast<int>(c) ? 1 : 0;
      column[i] = scores[i * classes + c];
    }
    return binary_auc(bin, column);
  };
  if (classes == 2) return one_vs_rest(1);
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) sum += one_vs_rest(c);
  return sum / static_cast<double>(classes);
}

std::vector<int> argmax_rows(std::span<const double> scores, std::size_t classes) {
  if (classes == 0 || scores.size() % classes != 0) {
    throw DimensionError("argmax_rows: score count is not a multiple of the class count");
  }
  std::vector<int> out(scores.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = scores.subspan(i * classes, classes);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace ukd::stats

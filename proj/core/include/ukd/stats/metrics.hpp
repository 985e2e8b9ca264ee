#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ukd::stats {

/// Mean of per-class recalls over the classes of y_true. A predicted class
/// never seen in y_true raises UndefinedMetricError.
double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred);

/// Support-weighted mean of per-class F1. Classes with no true and no
/// predicted members contribute zero.
double weighted_f1(std::span<const int> y_true, std::span<const int> y_pred);

double accuracy(std::span<const int> y_true, std::span<const int> y_pred);

/// Rank-statistic AUC with midranks for ties; y_true holds 0/1.
/// Single-class input raises UndefinedMetricError.
double binary_auc(std::span<const int> y_true, std::span<const double> scores);

/// AUC of row-major scores[n, k]. For k = 2 the positive class is column 1;
/// otherwise the macro mean of one-vs-rest AUCs over all k classes.
double auc(std::span<const int> y_true, std::span<const double> scores, std::size_t classes);

/// Row-wise argmax of scores[n, k].
std::vector<int> argmax_rows(std::span<const double> scores, std::size_t classes);

}  // namespace ukd::stats

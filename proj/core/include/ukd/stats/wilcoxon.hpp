#pragma once

#include <span>
#include <string>

namespace ukd::stats {

enum class Alternative { kTwoSided, kGreater, kLess };

Alternative parse_alternative(const std::string& s);

struct WilcoxonResult {
  /// Sum of the ranks of positive differences a - b.
  double statistic = 0.0;
  double p_value = 1.0;
  /// Pairs left after dropping zero differences.
  std::size_t n = 0;
  bool exact = false;
};

/// Signed-rank test on paired samples. Zero differences are dropped and tied
/// magnitudes get midranks. For n <= 12 the null distribution is enumerated
/// over all 2^n sign patterns; larger n uses the normal approximation with
/// tie and continuity corrections. All-zero differences raise
/// UndefinedTestError.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative = Alternative::kTwoSided);

inline constexpr std::size_t kWilcoxonExactMaxN = 12;

}  // namespace ukd::stats

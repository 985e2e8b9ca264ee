#pragma once

#include <array>

// Generated by scripts/gen_nemenyi_table.py with scipy 1.15.3.
// q_alpha(k) = studentized_range.ppf(1 - alpha, k, df = inf) / sqrt(2),
// rounded to 3 decimals. Index 0 is k = 2, index 18 is k = 20.

namespace ukd::stats::detail {

inline constexpr std::array<double, 19> kNemenyiQ05{1.960, 2.344, 2.569, 2.728, 2.850, 2.948, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544};
inline constexpr std::array<double, 19> kNemenyiQ10{1.645, 2.052, 2.291, 2.460, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319};

}  // namespace ukd::stats::detail

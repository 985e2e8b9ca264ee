#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ukd/downstream/data.hpp"

namespace ukd::eval {

struct Split {
  std::vector<std::size_t> train, val, test;
  std::vector<std::string> warnings;
};

/// Per-class proportional allocation into train/val/test. Floors first, then
/// the remainder goes to the largest fractional parts (split order breaks
/// ties). Members are shuffled per class from the seed; indices come back
/// sorted. A class with fewer members than non-empty splits goes entirely
/// to train with a warning. Ratios must be non-negative and sum to 1.
Split stratified_split(std::span<const int> labels, std::span<const double> ratios,
                       std::uint64_t seed);

/// Stratifies jointly on (bin, event) so censoring is balanced across splits.
Split stratified_survival_split(std::span<const SurvivalRecord> records,
                                std::span<const double> ratios, std::uint64_t seed);

}  // namespace ukd::eval

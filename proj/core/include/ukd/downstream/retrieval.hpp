#pragma once

#include <span>
#include <string>
#include <vector>

#include "ukd/downstream/data.hpp"

namespace ukd::eval {

enum class Normalization { kZScore, kMinMax };

Normalization parse_normalization(const std::string& s);
std::string to_string(Normalization n);

/// Training features normalized per component by training statistics:
/// z-score (population std) or min-max. Components with spread below 1e-12
/// get a scale of 1.
struct RetrievalIndex {
  Normalization mode = Normalization::kZScore;
  Features features;
  std::vector<double> shift;
  std::vector<double> scale;
  std::vector<int> labels;

  std::size_t size() const { return features.rows(); }
  std::vector<double> normalize(std::span<const double> x) const;
};

RetrievalIndex build_index(const Features& train, std::span<const int> labels,
                           Normalization mode = Normalization::kZScore);

struct Neighbor {
  std::size_t id = 0;  // row in the index
  double distance = 0.0;
  int label = -1;
};

/// k nearest rows by L2 distance after normalization; equal distances are
/// ordered by ascending id.
std::vector<Neighbor> retrieve(const RetrievalIndex& index, std::span<const double> query,
                               std::size_t k);

/// Acc@K: fraction of queries with a same-label item among their top K.
std::vector<double> accuracy_at_k(const RetrievalIndex& index, const Features& queries,
                                  std::span<const int> labels, std::span<const std::size_t> ks);

}  // namespace ukd::eval

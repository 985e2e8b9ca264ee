#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ukd/io/feature_store.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::eval {

struct SurvivalRecord {
  double time = 0.0;  // months
  bool event = false;  // true: death observed
  int bin = -1;        // set by bin_survival_times / assign_bins

  friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

/// Row-major feature matrix.
struct Features {
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dim, dim);
  }
  Features select(std::span<const std::size_t> rows) const;
  num::Tensor tensor() const;
};

Features features_from_store(const io::FeatureStore& store);

/// A slide: one feature vector per patch plus its label or survival record.
struct FeatureBag {
  std::string bag_id;
  Features instances;
  int label = -1;
  std::optional<SurvivalRecord> survival;

  std::size_t size() const { return instances.rows(); }
};

/// Groups store rows into bags by manifest bag_id, in order of first
/// appearance. Labels, times and events come from the first row of a bag and
/// must agree across its rows.
std::vector<FeatureBag> bags_from_store(const io::FeatureStore& store,
                                        const std::vector<io::ManifestRecord>& manifest);

/// Rows ordered by manifest with their labels (-1 when absent).
struct LabeledFeatures {
  Features x;
  std::vector<int> y;
  std::vector<std::string> ids;
};
LabeledFeatures labeled_from_store(const io::FeatureStore& store,
                                   const std::vector<io::ManifestRecord>& manifest);

}  // namespace ukd::eval

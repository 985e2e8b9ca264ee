#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ukd/downstream/data.hpp"

namespace ukd::data {

/// Bags of Gaussian noise instances. A positive bag gets `signal_instances`
/// instances shifted by `signal_strength` along one hidden unit direction.
struct MilBagParams {
  std::size_t bags = 250;
  std::size_t min_instances = 8;
  std::size_t max_instances = 24;
  std::size_t dim = 512;
  /// Probability that a bag is positive.
  double signal_rate = 0.5;
  std::size_t signal_instances = 1;
  double signal_strength = 8.0;

  void validate() const;
};

std::vector<eval::FeatureBag> generate_mil_bags(const MilBagParams& params, std::uint64_t seed);

/// Bags whose risk grows with the number of planted signal instances (0 to
/// max_signal). Event times are exponential with rate base_hazard *
/// exp(effect * signals); censoring times are uniform on [0, censor_max].
struct SurvivalParams {
  std::size_t bags = 200;
  std::size_t min_instances = 8;
  std::size_t max_instances = 24;
  std::size_t dim = 64;
  std::size_t max_signal = 3;
  double signal_strength = 4.0;
  double base_hazard = 0.02;  // per month
  double effect = 0.8;
  double censor_max = 150.0;

  void validate() const;
};

std::vector<eval::FeatureBag> generate_survival_bags(const SurvivalParams& params,
                                                     std::uint64_t seed);

/// K isotropic Gaussian blobs with centres drawn at scale `separation`.
struct ClusterParams {
  std::size_t clusters = 9;
  std::size_t per_cluster = 100;
  std::size_t dim = 32;
  double separation = 4.0;

  void validate() const;
};

struct LabeledPoints {
  eval::Features x;
  std::vector<int> y;
};

LabeledPoints generate_clusters(const ClusterParams& params, std::uint64_t seed);

/// Writes a store and its manifest; instances of a bag share bag_id, label,
/// time and event.
void write_bags(const std::vector<eval::FeatureBag>& bags, const std::string& store_path);
void write_points(const LabeledPoints& points, const std::string& store_path);

}  // namespace ukd::data

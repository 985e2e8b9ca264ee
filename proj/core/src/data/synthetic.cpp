#include "ukd/data/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "ukd/errors.hpp"
#include "ukd/numerics/rng.hpp"

namespace ukd::data {

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<double> unit_direction(std::size_t dim, num::Rng rng) {
  std::vector<double> u(dim);
  double norm = 0.0;
  for (double& v : u) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : u) v /= norm;
  return u;
}

void check_instances(std::size_t lo, std::size_t hi, std::size_t dim, const char* what) {
  if (lo == 0 || hi < lo || dim == 0) {
    throw ParameterError(std::string(what) + ": need 1 <= min_instances <= max_instances and dim > 0");
  }
}

// Noise instances with the first `signals` shifted along u; the planted rows
// are scattered so their position carries no information.
eval::Features noisy_bag(std::size_t n, std::size_t signals, std::size_t dim,
                         const std::vector<double>& u, double strength, num::Rng& rng) {
  eval::Features f;
  f.dim = dim;
  f.values.resize(n * dim);
  for (double& v : f.values) v = rng.normal();
  std::vector<std::size_t> slots(n);
  for (std::size_t i = 0; i < n; ++i) slots[i] = i;
  for (std::size_t i = 0; i < signals && i < n; ++i) {
    std::swap(slots[i], slots[i + rng.uniform_index(n - i)]);
    double* row = f.values.data() + slots[i] * dim;
    for (std::size_t j = 0; j < dim; ++j) row[j] += strength * u[j];
  }
  for (double& v : f.values) v = f32(v);
  return f;
}

std::string padded_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

}  // namespace

void MilBagParams::validate() const {
  check_instances(min_instances, max_instances, dim, "mil_bags");
  if (bags == 0) throw ParameterError("mil_bags: bags must be positive");
  if (!(signal_rate >= 0.0 && signal_rate <= 1.0)) {
    throw ParameterError("mil_bags: signal_rate must lie in [0, 1]");
  }
  if (signal_instances == 0 || signal_instances > min_instances) {
    throw ParameterError("mil_bags: need 1 <= signal_instances <= min_instances");
  }
  if (!std::isfinite(signal_strength)) throw ParameterError("mil_bags: signal_strength must be finite");
}

std::vector<eval::FeatureBag> generate_mil_bags(const MilBagParams& p, std::uint64_t seed) {
  p.validate();
  const num::Rng root(seed);
  const auto u = unit_direction(p.dim, root.substream(0));
  std::vector<eval::FeatureBag> out;
  for (std::size_t b = 0; b < p.bags; ++b) {
    num::Rng rng = root.substream(1, b);
    eval::FeatureBag bag;
    bag.bag_id = padded_id("bag", b);
    bag.label = rng.uniform(0.0, 1.0) < p.signal_rate ? 1 : 0;
    const std::size_t n = p.min_instances + rng.uniform_index(p.max_instances - p.min_instances + 1);
    bag.instances = noisy_bag(n, bag.label == 1 ? p.signal_instances : 0, p.dim, u,
                              p.signal_strength, rng);
    out.push_back(std::move(bag));
  }
  return out;
}

void SurvivalParams::validate() const {
  check_instances(min_instances, max_instances, dim, "survival");
  if (bags < 4) throw ParameterError("survival: need at least 4 bags");
  if (max_signal > min_instances) throw ParameterError("survival: max_signal exceeds min_instances");
  if (!(base_hazard > 0.0) || !(censor_max > 0.0) || !std::isfinite(effect)) {
    throw ParameterError("survival: base_hazard and censor_max must be positive");
  }
}

std::vector<eval::FeatureBag> generate_survival_bags(const SurvivalParams& p,
                                                     std::uint64_t seed) {
  p.validate();
  const num::Rng root(seed);
  const auto u = unit_direction(p.dim, root.substream(0));
  std::vector<eval::FeatureBag> out;
  for (std::size_t b = 0; b < p.bags; ++b) {
    num::Rng rng = root.substream(1, b);
    eval::FeatureBag bag;
    bag.bag_id = padded_id("case", b);
    const std::size_t signals = rng.uniform_index(p.max_signal + 1);
    const std::size_t n = p.min_instances + rng.uniform_index(p.max_instances - p.min_instances + 1);
    bag.instances = noisy_bag(n, signals, p.dim, u, p.signal_strength, rng);
    const double rate = p.base_hazard * std::exp(p.effect * static_cast<double>(signals));
    // 1 - U lies in (0, 1], so the log is finite.
    const double event_time = -std::log(1.0 - rng.uniform(0.0, 1.0)) / rate;
    const double censor_time = rng.uniform(0.0, p.censor_max);
    eval::SurvivalRecord rec;
    rec.event = event_time <= censor_time;
    rec.time = f32(std::max(rec.event ? event_time : censor_time, 1e-3));
    bag.survival = rec;
    out.push_back(std::move(bag));
  }
  return out;
}

void ClusterParams::validate() const {
  if (clusters < 2 || per_cluster == 0 || dim == 0) {
    throw ParameterError("clusters: need at least 2 clusters, 1 point each and dim > 0");
  }
  if (!(separation > 0.0)) throw ParameterError("clusters: separation must be positive");
}

LabeledPoints generate_clusters(const ClusterParams& p, std::uint64_t seed) {
  p.validate();
  const num::Rng root(seed);
  std::vector<std::vector<double>> centres(p.clusters, std::vector<double>(p.dim));
  for (std::size_t c = 0; c < p.clusters; ++c) {
    num::Rng rng = root.substream(0, c);
    for (double& v : centres[c]) v = p.separation * rng.normal();
  }
  LabeledPoints out;
  out.x.dim = p.dim;
  // Interleave classes so any prefix is roughly balanced.
  for (std::size_t i = 0; i < p.per_cluster; ++i) {
    for (std::size_t c = 0; c < p.clusters; ++c) {
      num::Rng rng = root.substream(1 + c, i);
      for (std::size_t j = 0; j < p.dim; ++j) out.x.values.push_back(f32(centres[c][j] + rng.normal()));
      out.y.push_back(static_cast<int>(c));
    }
  }
  return out;
}

void write_bags(const std::vector<eval::FeatureBag>& bags, const std::string& store_path) {
  if (bags.empty()) throw ConfigurationError("write_bags: no bags");
  io::FeatureStore store;
  std::vector<io::ManifestRecord> manifest;
  for (const auto& bag : bags) {
    for (std::size_t i = 0; i < bag.size(); ++i) {
      io::ManifestRecord r;
      r.id = bag.bag_id + "_" + std::to_string(i);
      r.row_index = store.count();
      if (bag.label >= 0) r.label = bag.label;
      r.bag_id = bag.bag_id;
      if (bag.survival) {
        r.time = bag.survival->time;
        r.event = bag.survival->event ? 1 : 0;
      }
      store.append(bag.instances.row(i));
      manifest.push_back(std::move(r));
    }
  }
  store.write(store_path);
  io::write_manifest(io::manifest_path_for(store_path), manifest);
}

void write_points(const LabeledPoints& points, const std::string& store_path) {
  io::FeatureStore store;
  std::vector<io::ManifestRecord> manifest;
  for (std::size_t i = 0; i < points.x.rows(); ++i) {
    io::ManifestRecord r;
    r.id = padded_id("pt", i);
    r.row_index = i;
    r.label = points.y[i];
    store.append(points.x.row(i));
    manifest.push_back(std::move(r));
  }
  store.write(store_path);
  io::write_manifest(io::manifest_path_for(store_path), manifest);
}

}  // namespace ukd::data

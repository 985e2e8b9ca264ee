#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ukd/numerics/rng.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::num {

/// Ordered collection of named leaf tensors. Order is insertion order and is
/// the order used for checkpoints, EMA and optimizer state.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  Tensor& add(std::string name, Tensor value);
  /// Appends every entry of `other` under `prefix`. Shares the tensors.
  void extend(const ParamSet& other, const std::string& prefix = "");

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t total_values() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Deep copy of every value as fresh leaves.
  ParamSet clone(bool requires_grad) const;
  void zero_grad();
  /// Names and shapes agree entry by entry.
  bool same_structure(const ParamSet& other) const;

 private:
  std::vector<Entry> entries_;
};

/// Truncated-normal-free initializers used across modules.
Tensor init_normal(Shape shape, double stddev, Rng& rng, bool requires_grad = true);
Tensor init_xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad = true);

/// Rounds every value to the nearest float32.
void round_to_f32(std::span<double> values);

}  // namespace ukd::num

#include "ukd/numerics/param_set.hpp"

#include <algorithm>
#include <cmath>

#include "ukd/errors.hpp"

namespace ukd::num {

Tensor& ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigurationError("duplicate parameter name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

void ParamSet::extend(const ParamSet& other, const std::string& prefix) {
  for (const auto& [name, t] : other) add(prefix + name, t);
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return e.first == name; });
  if (it == entries_.end()) throw ConfigurationError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.first == name; });
}

std::size_t ParamSet::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

ParamSet ParamSet::clone(bool requires_grad) const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone(requires_grad));
  return out;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

bool ParamSet::same_structure(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second.shape() != other.entries_[i].second.shape()) {
      return false;
    }
  }
  return true;
}

Tensor init_normal(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = static_cast<double>(static_cast<float>(rng.normal() * stddev));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Tensor init_xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = static_cast<double>(static_cast<float>(rng.uniform(-limit, limit)));
  return Tensor::from({fan_in, fan_out}, std::move(v), requires_grad);
}

void round_to_f32(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace ukd::num

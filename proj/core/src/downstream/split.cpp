#include "ukd/downstream/split.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>

#include "ukd/errors.hpp"
#include "ukd/numerics/rng.hpp"

namespace ukd::eval {

Split stratified_split(std::span<const int> labels, std::span<const double> ratios,
                       std::uint64_t seed) {
  if (ratios.size() != 3) throw ParameterError("split ratios must be train, val, test");
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ParameterError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("split ratios must sum to 1");
  const auto nonempty = static_cast<std::size_t>(std::count_if(
      ratios.begin(), ratios.end(), [](double r) { return r > 0.0; }));

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  Split out;
  std::vector<std::size_t>* parts[3] = {&out.train, &out.val, &out.test};
  const num::Rng root(seed);
  for (auto& [label, idx] : members) {
    num::Rng rng = root.substream(static_cast<std::uint64_t>(static_cast<std::int64_t>(label)));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    const std::size_t n = idx.size();
    if (n < nonempty) {
      out.warnings.push_back("class " + std::to_string(label) + " has " + std::to_string(n) +
                             " members for " + std::to_string(nonempty) +
                             " splits; all assigned to train");
      out.train.insert(out.train.end(), idx.begin(), idx.end());
      continue;
    }
    std::size_t counts[3];
    double frac[3];
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = ratios[static_cast<std::size_t>(s)] * static_cast<double>(n);
      counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[s] = exact - static_cast<double>(counts[s]);
      used += counts[s];
    }
    std::array<int, 3> by_frac{0, 1, 2};
    std::stable_sort(by_frac.begin(), by_frac.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; used < n; ++r, ++used) ++counts[by_frac[r % 3]];
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      parts[s]->insert(parts[s]->end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                       idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[s]));
      pos += counts[s];
    }
  }
  for (auto* p : parts) std::sort(p->begin(), p->end());
  return out;
}

Split stratified_survival_split(std::span<const SurvivalRecord> records,
                                std::span<const double> ratios, std::uint64_t seed) {
  std::vector<int> keys;
  keys.reserve(records.size());
  for (const auto& r : records) {
    if (r.bin < 0) throw ConfigurationError("survival split needs binned records");
    keys.push_back(r.bin * 2 + (r.event ? 1 : 0));
  }
  return stratified_split(keys, ratios, seed);
}

}  // namespace ukd::eval

#include "ukd/downstream/data.hpp"

#include <unordered_map>

#include "ukd/errors.hpp"

namespace ukd::eval {

Features Features::select(std::span<const std::size_t> rows_to_keep) const {
  Features out;
  out.dim = dim;
  out.values.reserve(rows_to_keep.size() * dim);
  for (std::size_t r : rows_to_keep) {
    if (r >= rows()) throw DimensionError("feature row " + std::to_string(r) + " out of range");
    const auto src = row(r);
    out.values.insert(out.values.end(), src.begin(), src.end());
  }
  return out;
}

num::Tensor Features::tensor() const { return num::Tensor::from({rows(), dim}, values); }

Features features_from_store(const io::FeatureStore& store) {
  Features f;
  f.dim = store.dim();
  f.values.assign(store.values().begin(), store.values().end());
  return f;
}

std::vector<FeatureBag> bags_from_store(const io::FeatureStore& store,
                                        const std::vector<io::ManifestRecord>& manifest) {
  io::validate_manifest(manifest, store.count());
  std::vector<FeatureBag> bags;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : manifest) {
    if (!r.bag_id) throw ConfigurationError("manifest record " + r.id + " has no bag_id");
    auto [it, inserted] = index.try_emplace(*r.bag_id, bags.size());
    if (inserted) {
      FeatureBag bag;
      bag.bag_id = *r.bag_id;
      bag.instances.dim = store.dim();
      bag.label = r.label ? static_cast<int>(*r.label) : -1;
      if (r.time || r.event) {
        if (!r.time || !r.event) {
          throw ConfigurationError("manifest record " + r.id + " needs both time and event");
        }
        bag.survival = SurvivalRecord{*r.time, *r.event != 0, -1};
      }
      bags.push_back(std::move(bag));
    } else {
      const auto& bag = bags[it->second];
      const int label = r.label ? static_cast<int>(*r.label) : -1;
      const bool same_survival =
          bag.survival ? (r.time && r.event && *r.time == bag.survival->time &&
                          (*r.event != 0) == bag.survival->event)
                       : (!r.time && !r.event);
      if (label != bag.label || !same_survival) {
        throw ConfigurationError("bag " + bag.bag_id + " has inconsistent labels across rows");
      }
    }
    const auto row = store.row(r.row_index);
    auto& values = bags[it->second].instances.values;
    values.insert(values.end(), row.begin(), row.end());
  }
  return bags;
}

LabeledFeatures labeled_from_store(const io::FeatureStore& store,
                                   const std::vector<io::ManifestRecord>& manifest) {
  io::validate_manifest(manifest, store.count());
  LabeledFeatures out;
  out.x.dim = store.dim();
  for (const auto& r : manifest) {
    const auto row = store.row(r.row_index);
    out.x.values.insert(out.x.values.end(), row.begin(), row.end());
    out.y.push_back(r.label ? static_cast<int>(*r.label) : -1);
    out.ids.push_back(r.id);
  }
  return out;
}

}  // namespace ukd::eval

#include "ukd/downstream/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ukd/errors.hpp"

namespace ukd::eval {

Normalization parse_normalization(const std::string& s) {
  if (s == "zscore") return Normalization::kZScore;
  if (s == "minmax") return Normalization::kMinMax;
  throw ConfigurationError("unknown normalization \"" + s + "\" (zscore, minmax)");
}

std::string to_string(Normalization n) { return n == Normalization::kZScore ? "zscore" : "minmax"; }

std::vector<double> RetrievalIndex::normalize(std::span<const double> x) const {
  if (x.size() != features.dim) {
    throw DimensionError("query has dim " + std::to_string(x.size()) + ", index " +
                         std::to_string(features.dim));
  }
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - shift[j]) / scale[j];
  return out;
}

RetrievalIndex build_index(const Features& train, std::span<const int> labels,
                           Normalization mode) {
  const std::size_t n = train.rows();
  const std::size_t d = train.dim;
  if (n == 0 || d == 0) throw ConfigurationError("retrieval index needs at least one item");
  if (labels.size() != n) throw DimensionError("retrieval index: label count differs from rows");
  RetrievalIndex idx;
  idx.mode = mode;
  idx.shift.assign(d, 0.0);
  idx.scale.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double spread = 0.0;
    if (mode == Normalization::kZScore) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += train.values[i * d + j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = train.values[i * d + j] - mean;
        var += c * c;
      }
      idx.shift[j] = mean;
      spread = std::sqrt(var / static_cast<double>(n));
    } else {
      double lo = train.values[j], hi = train.values[j];
      for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, train.values[i * d + j]);
        hi = std::max(hi, train.values[i * d + j]);
      }
      idx.shift[j] = lo;
      spread = hi - lo;
    }
    idx.scale[j] = spread < 1e-12 ? 1.0 : spread;
  }
  idx.features.dim = d;
  idx.features.values.resize(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      idx.features.values[i * d + j] = (train.values[i * d + j] - idx.shift[j]) / idx.scale[j];
    }
  }
  idx.labels.assign(labels.begin(), labels.end());
  return idx;
}

std::vector<Neighbor> retrieve(const RetrievalIndex& index, std::span<const double> query,
                               std::size_t k) {
  if (k == 0) throw ParameterError("retrieve needs k >= 1");
  if (index.size() == 0) throw ConfigurationError("retrieval index is empty");
  const auto q = index.normalize(query);
  const std::size_t n = index.size();
  const std::size_t d = index.features.dim;
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = index.features.values.data() + i * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = row[j] - q[j];
      s += diff * diff;
    }
    sq[i] = s;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sq[a] < sq[b] || (sq[a] == sq[b] && a < b);
                    });
  std::vector<Neighbor> out;
  for (std::size_t r = 0; r < take; ++r) {
    out.push_back({order[r], std::sqrt(sq[order[r]]), index.labels[order[r]]});
  }
  return out;
}

std::vector<double> accuracy_at_k(const RetrievalIndex& index, const Features& queries,
                                  std::span<const int> labels, std::span<const std::size_t> ks) {
  if (labels.size() != queries.rows()) {
    throw DimensionError("accuracy_at_k: label count differs from query rows");
  }
  if (queries.rows() == 0) throw UndefinedMetricError("accuracy_at_k: no queries");
  std::size_t kmax = 0;
  for (std::size_t k : ks) {
    if (k == 0) throw ParameterError("Acc@K needs K >= 1");
    kmax = std::max(kmax, k);
  }
  std::vector<double> hits(ks.size(), 0.0);
  for (std::size_t qi = 0; qi < queries.rows(); ++qi) {
    const auto nn = retrieve(index, queries.row(qi), kmax);
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const std::size_t upto = std::min(ks[c], nn.size());
      for (std::size_t r = 0; r < upto; ++r) {
        if (nn[r].label == labels[qi]) {
          hits[c] += 1.0;
          break;
        }
      }
    }
  }
  for (double& h : hits) h /= static_cast<double>(queries.rows());
  return hits;
}

}  // namespace ukd::eval

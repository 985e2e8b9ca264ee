#include "ukd/downstream/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ukd/errors.hpp"
#include "ukd/numerics/ops.hpp"

namespace ukd::eval {

namespace {

void check_record(const SurvivalRecord& r) {
  if (r.bin < 0 || r.bin >= static_cast<int>(kSurvivalBins)) {
    throw ParameterError("survival bin " + std::to_string(r.bin) + " outside [0, 3]");
  }
}

}  // namespace

num::Tensor nll_surv_loss(const num::Tensor& hazard_logits, const SurvivalRecord& record) {
  check_record(record);
  if (hazard_logits.numel() != kSurvivalBins) {
    throw DimensionError("survival head must emit 4 hazard logits, got " +
                         std::to_string(hazard_logits.numel()));
  }
  const num::Tensor h = num::sigmoid(num::reshape(hazard_logits, {kSurvivalBins, 1}));
  const num::Tensor one_minus = num::add_scalar(num::scale(h, -1.0), 1.0);
  auto element = [](const num::Tensor& t, std::size_t k) {
    const std::size_t idx[] = {k};
    return num::gather_rows(t, idx);
  };
  // survival(k) = S_{k}, with S_{-1} = 1 handled by the caller.
  auto survival = [&](int k) {
    num::Tensor s = element(one_minus, 0);
    for (int j = 1; j <= k; ++j) s = num::mul(s, element(one_minus, static_cast<std::size_t>(j)));
    return s;
  };
  const int t = record.bin;
  num::Tensor loss;
  if (record.event) {
    loss = num::scale(num::log(element(h, static_cast<std::size_t>(t)), kSurvivalEps), -1.0);
    if (t > 0) {
      loss = num::sub(loss, num::log(survival(t - 1), kSurvivalEps));
    }
  } else {
    loss = num::scale(num::log(survival(t), kSurvivalEps), -1.0);
  }
  return num::sum(loss);
}

double nll_surv_loss(std::span<const double> hazard_logits, const SurvivalRecord& record) {
  return nll_surv_loss(num::Tensor::from({hazard_logits.size()},
                                         std::vector<double>(hazard_logits.begin(),
                                                             hazard_logits.end())),
                       record)
      .item();
}

SurvivalBins bin_survival_times(std::span<const double> times) {
  const std::size_t n = times.size();
  if (n < kSurvivalBins) {
    throw ConfigurationError("survival binning needs at least 4 records, got " +
                             std::to_string(n));
  }
  for (double t : times) {
    if (!std::isfinite(t)) throw ParameterError("survival times must be finite");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  SurvivalBins out;
  out.bins.assign(n, 0);
  const bool all_equal = times[order.front()] == times[order.back()];
  for (std::size_t b = 1; b < kSurvivalBins; ++b) {
    out.edges.push_back(times[order[b * n / kSurvivalBins]]);
  }
  for (std::size_t b = 0; b + 1 < out.edges.size(); ++b) {
    if (out.edges[b] == out.edges[b + 1]) out.degenerate = true;
  }
  if (out.edges.front() == times[order.front()]) out.degenerate = true;
  if (all_equal) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t pos = 0; pos < n; ++pos) {
    out.bins[order[pos]] = static_cast<int>(pos * kSurvivalBins / n);
  }
  return out;
}

int assign_bin(const SurvivalBins& fitted, double time) {
  int bin = 0;
  for (std::size_t b = 0; b < fitted.edges.size(); ++b) {
    if (time >= fitted.edges[b]) bin = static_cast<int>(b + 1);
  }
  return bin;
}

double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  if (risks.size() != records.size()) {
    throw DimensionError("c_index: " + std::to_string(risks.size()) + " risks for " +
                         std::to_string(records.size()) + " records");
  }
  const std::size_t n = risks.size();
  // Dense risk ranks for the Fenwick tree.
  std::vector<double> sorted_risks(risks.begin(), risks.end());
  std::sort(sorted_risks.begin(), sorted_risks.end());
  sorted_risks.erase(std::unique(sorted_risks.begin(), sorted_risks.end()), sorted_risks.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(
                  std::lower_bound(sorted_risks.begin(), sorted_risks.end(), risks[i]) -
                  sorted_risks.begin()) +
              1;
  }
  std::vector<unsigned long long> tree(sorted_risks.size() + 1, 0);
  auto add = [&](std::size_t r) {
    for (; r < tree.size(); r += r & (~r + 1)) ++tree[r];
  };
  auto prefix = [&](std::size_t r) {
    unsigned long long s = 0;
    for (; r > 0; r -= r & (~r + 1)) s += tree[r];
    return s;
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].time > records[b].time;
  });
  unsigned long long concordant = 0, ties = 0, comparable = 0, inserted = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && records[order[j]].time == records[order[i]].time) ++j;
    // Censored records at this time count as surviving past its events.
    for (std::size_t t = i; t < j; ++t) {
      if (!records[order[t]].event) {
        add(rank[order[t]]);
        ++inserted;
      }
    }
    for (std::size_t t = i; t < j; ++t) {
      const std::size_t e = order[t];
      if (!records[e].event) continue;
      const unsigned long long below = prefix(rank[e] - 1);
      const unsigned long long equal = prefix(rank[e]) - below;
      concordant += below;
      ties += equal;
      comparable += inserted;
    }
    for (std::size_t t = i; t < j; ++t) {
      if (records[order[t]].event) {
        add(rank[order[t]]);
        ++inserted;
      }
    }
    i = j;
  }
  if (comparable == 0) throw UndefinedMetricError("c_index: no comparable pairs");
  return (static_cast<double>(concordant) + 0.5 * static_cast<double>(ties)) /
         static_cast<double>(comparable);
}

}  // namespace ukd::eval

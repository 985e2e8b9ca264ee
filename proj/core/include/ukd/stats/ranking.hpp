#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ukd::stats {

/// Metric values for models x tasks.
struct RankMatrix {
  std::vector<std::string> models;
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> values;  // [model][task]
  std::vector<bool> higher_is_better;       // per task

  /// Throws ConfigurationError on missing cells, DegenerateInputError on
  /// non-finite values.
  void validate() const;
};

/// CSV with a header row of task names (the first cell labels the model
/// column) and one row per model. Every task is higher-is-better unless
/// listed in `lower_is_better`.
RankMatrix parse_rank_matrix_csv(const std::string& text,
                                 const std::vector<std::string>& lower_is_better = {});
RankMatrix read_rank_matrix_csv(const std::string& path,
                                const std::vector<std::string>& lower_is_better = {});

/// Per-task ranks [model][task]; 1 is best, ties share the mean of the ranks
/// they span.
std::vector<std::vector<double>> task_ranks(const RankMatrix& m);
std::vector<double> average_ranks(const RankMatrix& m);

/// Studentized-range critical value q_alpha(k) / sqrt(2) for 2 <= k <= 20,
/// alpha in {0.05, 0.10}.
double nemenyi_q(std::size_t k, double alpha);
/// CD = q_alpha(k) * sqrt(k (k + 1) / (6 N)).
double nemenyi_cd(std::size_t k, std::size_t n_tasks, double alpha);

struct CdResult {
  std::vector<std::string> models;
  std::vector<double> average_ranks;
  double critical_difference = 0.0;
  std::size_t k = 0;
  std::size_t n = 0;
  double alpha = 0.05;
};

struct PairwiseTest {
  std::string model_a, model_b;
  /// Two-sided signed-rank p-value over tasks; empty when every task ties.
  std::optional<double> p_value;
  double rank_gap = 0.0;
  bool rank_gap_significant = false;
};

struct BenchmarkReport {
  CdResult cd;
  std::vector<double> average_metric;     // per model, mean over tasks
  std::vector<std::size_t> order;         // model indices, best average rank first
  std::vector<PairwiseTest> pairwise;
};

/// Average metrics, average ranks, Nemenyi CD and pairwise signed-rank tests.
/// The CD needs 2 <= k <= 20 models; a single model gets rank 1 and no tests.
BenchmarkReport compare_models(const RankMatrix& m, double alpha = 0.05);

nlohmann::ordered_json to_json(const BenchmarkReport& r);
/// model,average_rank,average_metric rows in report order.
std::string ranks_csv(const BenchmarkReport& r);

}  // namespace ukd::stats

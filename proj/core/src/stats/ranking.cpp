#include "ukd/stats/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "nemenyi_table.hpp"
#include "ukd/errors.hpp"
#include "ukd/io/binary.hpp"
#include "ukd/stats/wilcoxon.hpp"

namespace ukd::stats {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void RankMatrix::validate() const {
  if (models.empty() || tasks.empty()) throw ConfigurationError("rank matrix needs models and tasks");
  if (values.size() != models.size() || higher_is_better.size() != tasks.size()) {
    throw ConfigurationError("incomplete benchmark: matrix shape does not match names");
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (values[i].size() != tasks.size()) {
      throw ConfigurationError("incomplete benchmark: model " + models[i] + " has " +
                               std::to_string(values[i].size()) + " of " +
                               std::to_string(tasks.size()) + " tasks");
    }
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (!std::isfinite(values[i][t])) {
        throw DegenerateInputError("non-finite metric for " + models[i] + " on " + tasks[t]);
      }
    }
  }
  if (std::set<std::string>(models.begin(), models.end()).size() != models.size()) {
    throw ConfigurationError("duplicate model names in rank matrix");
  }
}

RankMatrix parse_rank_matrix_csv(const std::string& text,
                                 const std::vector<std::string>& lower_is_better) {
  std::stringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.size() < 2) throw ConfigurationError("rank matrix CSV needs a header and a model row");
  RankMatrix m;
  m.tasks.assign(rows[0].begin() + 1, rows[0].end());
  if (m.tasks.empty()) throw ConfigurationError("rank matrix CSV has no task columns");
  for (const auto& name : lower_is_better) {
    if (std::find(m.tasks.begin(), m.tasks.end(), name) == m.tasks.end()) {
      throw ConfigurationError("lower-is-better task \"" + name + "\" is not a column");
    }
  }
  for (const auto& t : m.tasks) {
    m.higher_is_better.push_back(
        std::find(lower_is_better.begin(), lower_is_better.end(), t) == lower_is_better.end());
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != m.tasks.size() + 1) {
      throw ConfigurationError("incomplete benchmark: CSV row " + std::to_string(r + 1) + " has " +
                               std::to_string(row.size()) + " cells, expected " +
                               std::to_string(m.tasks.size() + 1));
    }
    m.models.push_back(row[0]);
    std::vector<double> vals;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c].empty()) {
        throw ConfigurationError("incomplete benchmark: missing cell for " + row[0] + " on " +
                                 m.tasks[c - 1]);
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(row[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != row[c].size()) {
        throw ConfigurationError("rank matrix cell \"" + row[c] + "\" is not a number");
      }
      vals.push_back(v);
    }
    m.values.push_back(std::move(vals));
  }
  m.validate();
  return m;
}

RankMatrix read_rank_matrix_csv(const std::string& path,
                                const std::vector<std::string>& lower_is_better) {
  return parse_rank_matrix_csv(io::read_text(path), lower_is_better);
}

std::vector<std::vector<double>> task_ranks(const RankMatrix& m) {
  m.validate();
  const std::size_t k = m.models.size();
  std::vector<std::vector<double>> ranks(k, std::vector<double>(m.tasks.size()));
  std::vector<std::size_t> order(k);
  for (std::size_t t = 0; t < m.tasks.size(); ++t) {
    std::iota(order.begin(), order.end(), 0);
    const bool hib = m.higher_is_better[t];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return hib ? m.values[a][t] > m.values[b][t] : m.values[a][t] < m.values[b][t];
    });
    for (std::size_t i = 0; i < k;) {
      std::size_t j = i;
      while (j < k && m.values[order[j]][t] == m.values[order[i]][t]) ++j;
      const double mid = static_cast<double>(i + j + 1) / 2.0;
      for (std::size_t r = i; r < j; ++r) ranks[order[r]][t] = mid;
      i = j;
    }
  }
  return ranks;
}

std::vector<double> average_ranks(const RankMatrix& m) {
  const auto ranks = task_ranks(m);
  std::vector<double> out(ranks.size(), 0.0);
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    for (double r : ranks[i]) out[i] += r;
    out[i] /= static_cast<double>(m.tasks.size());
  }
  return out;
}

double nemenyi_q(std::size_t k, double alpha) {
  if (k < 2 || k > 20) {
    throw ParameterError("Nemenyi table covers 2..20 models, got " + std::to_string(k));
  }
  if (alpha == 0.05) return detail::kNemenyiQ05[k - 2];
  if (alpha == 0.10) return detail::kNemenyiQ10[k - 2];
  throw ParameterError("Nemenyi alpha must be 0.05 or 0.10");
}

double nemenyi_cd(std::size_t k, std::size_t n_tasks, double alpha) {
  if (n_tasks == 0) throw ParameterError("Nemenyi CD needs at least one task");
  const double kk = static_cast<double>(k);
  return nemenyi_q(k, alpha) * std::sqrt(kk * (kk + 1.0) / (6.0 * static_cast<double>(n_tasks)));
}

BenchmarkReport compare_models(const RankMatrix& m, double alpha) {
  m.validate();
  if (alpha != 0.05 && alpha != 0.10) throw ParameterError("alpha must be 0.05 or 0.10");
  const std::size_t k = m.models.size();
  const std::size_t n = m.tasks.size();
  BenchmarkReport rep;
  rep.cd.models = m.models;
  rep.cd.average_ranks = average_ranks(m);
  rep.cd.k = k;
  rep.cd.n = n;
  rep.cd.alpha = alpha;
  rep.cd.critical_difference = k >= 2 ? nemenyi_cd(k, n, alpha) : 0.0;
  for (const auto& row : m.values) {
    rep.average_metric.push_back(std::accumulate(row.begin(), row.end(), 0.0) /
                                 static_cast<double>(n));
  }
  rep.order.resize(k);
  std::iota(rep.order.begin(), rep.order.end(), 0);
  std::stable_sort(rep.order.begin(), rep.order.end(), [&](std::size_t a, std::size_t b) {
    return rep.cd.average_ranks[a] < rep.cd.average_ranks[b];
  });
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      PairwiseTest pt;
      pt.model_a = m.models[a];
      pt.model_b = m.models[b];
      pt.rank_gap = std::abs(rep.cd.average_ranks[a] - rep.cd.average_ranks[b]);
      pt.rank_gap_significant = pt.rank_gap > rep.cd.critical_difference;
      // Orient every task so that larger is better before differencing.
      std::vector<double> va(n), vb(n);
      for (std::size_t t = 0; t < n; ++t) {
        const double s = m.higher_is_better[t] ? 1.0 : -1.0;
        va[t] = s * m.values[a][t];
        vb[t] = s * m.values[b][t];
      }
      try {
        pt.p_value = wilcoxon_signed_rank(va, vb, Alternative::kTwoSided).p_value;
      } catch (const UndefinedTestError&) {
        pt.p_value.reset();
      }
      rep.pairwise.push_back(std::move(pt));
    }
  }
  return rep;
}

nlohmann::ordered_json to_json(const BenchmarkReport& r) {
  nlohmann::ordered_json j;
  j["k"] = r.cd.k;
  j["n_tasks"] = r.cd.n;
  j["alpha"] = r.cd.alpha;
  j["critical_difference"] = r.cd.critical_difference;
  auto models = nlohmann::ordered_json::array();
  for (std::size_t pos = 0; pos < r.order.size(); ++pos) {
    const std::size_t i = r.order[pos];
    models.push_back({{"model", r.cd.models[i]},
                      {"position", pos + 1},
                      {"average_rank", r.cd.average_ranks[i]},
                      {"average_metric", r.average_metric[i]}});
  }
  j["models"] = std::move(models);
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : r.pairwise) {
    pairs.push_back({{"model_a", p.model_a},
                     {"model_b", p.model_b},
                     {"wilcoxon_p", p.p_value ? nlohmann::ordered_json(*p.p_value) : nlohmann::ordered_json(nullptr)},
                     {"rank_gap", p.rank_gap},
                     {"exceeds_cd", p.rank_gap_significant}});
  }
  j["pairwise"] = std::move(pairs);
  return j;
}

std::string ranks_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "model,average_rank,average_metric\n";
  for (std::size_t i : r.order) {
    out << r.cd.models[i] << ',' << r.cd.average_ranks[i] << ',' << r.average_metric[i] << '\n';
  }
  return out.str();
}

}  // namespace ukd::stats

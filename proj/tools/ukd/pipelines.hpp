#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ukd/data/synthetic.hpp"
#include "ukd/data/textures.hpp"
#include "ukd/downstream/abmil.hpp"
#include "ukd/downstream/probe.hpp"
#include "ukd/pretrain/engine.hpp"

namespace ukd::cli {

using Json = nlohmann::ordered_json;

struct GenOptions {
  std::string kind;
  std::string out;
  std::uint64_t seed = 0;
  bool force = false;
  data::TextureParams textures;
  data::MilBagParams mil;
  data::SurvivalParams survival;
  data::ClusterParams clusters;
};
Json run_gen(const GenOptions& o);

struct PretrainOptions {
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string preset = "toy";
  std::string engine_config;  // JSON file, replaces the preset
  std::optional<std::size_t> steps;
  std::optional<std::size_t> total_iters;
  std::optional<std::size_t> warmup_iters;
  std::optional<std::size_t> batch_size;
  std::optional<double> base_lr;
  bool no_expert = false;
  std::string resume;
  std::string log_jsonl;
  bool dry_run = false;
};
/// `log` receives human-readable progress.
Json run_pretrain(const PretrainOptions& o, std::ostream& log);
train::PretrainConfig resolve_pretrain_config(const PretrainOptions& o);

struct ExtractOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string model = "student";  // or "ema"
  std::string tokens = "cls";     // or "all"
};
Json run_extract(const ExtractOptions& o);

struct ProbeOptions {
  std::string train, val, test;
  std::uint64_t seed = 0;
  eval::LinearProbeConfig probe;
  std::size_t replicates = 1000;
  std::string log_jsonl;
  std::string predictions_out;
};
Json run_probe(const ProbeOptions& o);

struct MilOptions {
  std::string data;
  std::uint64_t seed = 0;
  eval::AbmilConfig abmil;
  std::vector<double> split{0.7, 0.1, 0.2};
  std::size_t replicates = 1000;
  std::string log_jsonl;
  std::string predictions_out;
};
Json run_mil(const MilOptions& o);

struct SurvivalOptions {
  std::string data;
  std::uint64_t seed = 0;
  eval::AbmilConfig abmil;
  std::vector<double> split{0.8, 0.0, 0.2};
  std::size_t replicates = 1000;
  std::string log_jsonl;
};
Json run_survival(const SurvivalOptions& o);

struct RetrieveOptions {
  std::string train, test;
  std::uint64_t seed = 0;
  std::string normalization = "zscore";
  std::vector<std::size_t> ks{1, 3, 5};
  std::size_t replicates = 1000;
};
Json run_retrieve(const RetrieveOptions& o);

struct StatsBootstrapOptions {
  std::string predictions;
  std::uint64_t seed = 0;
  std::size_t replicates = 1000;
};
Json run_stats_bootstrap(const StatsBootstrapOptions& o);

struct StatsWilcoxonOptions {
  std::string pairs;
  std::string alternative = "two_sided";
};
Json run_stats_wilcoxon(const StatsWilcoxonOptions& o);

struct RankOptions {
  std::string matrix;
  double alpha = 0.05;
  std::vector<std::string> lower_is_better;
  std::string csv_out;
};
Json run_rank(const RankOptions& o);

}  // namespace ukd::cli

#include "pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ukd/downstream/retrieval.hpp"
#include "ukd/downstream/split.hpp"
#include "ukd/downstream/survival.hpp"
#include "ukd/errors.hpp"
#include "ukd/expert_distill/teachers.hpp"
#include "ukd/io/binary.hpp"
#include "ukd/io/feature_store.hpp"
#include "ukd/stats/bootstrap.hpp"
#include "ukd/stats/metrics.hpp"
#include "ukd/stats/ranking.hpp"
#include "ukd/stats/wilcoxon.hpp"

namespace ukd::cli {

namespace fs = std::filesystem;

namespace {

void refuse_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw ConfigurationError("refusing to overwrite " + path.string() + " (pass --force)");
  }
}

Json store_summary(const std::string& path) {
  const auto store = io::FeatureStore::read(path);
  return {{"path", path},
          {"manifest", io::manifest_path_for(path).string()},
          {"rows", store.count()},
          {"dim", store.dim()}};
}

eval::LabeledFeatures load_labeled(const std::string& path) {
  const auto store = io::FeatureStore::read(path);
  return eval::labeled_from_store(store, io::read_manifest(io::manifest_path_for(path)));
}

std::vector<eval::FeatureBag> load_bags(const std::string& path) {
  const auto store = io::FeatureStore::read(path);
  return eval::bags_from_store(store, io::read_manifest(io::manifest_path_for(path)));
}

std::size_t class_count(std::span<const int> a, std::span<const int> b = {}) {
  int top = -1;
  for (int v : a) {
    if (v < 0) throw ConfigurationError("every record needs a non-negative label");
    top = std::max(top, v);
  }
  for (int v : b) {
    if (v < 0) throw ConfigurationError("every record needs a non-negative label");
    top = std::max(top, v);
  }
  return static_cast<std::size_t>(top + 1);
}

template <typename T>
std::vector<T> pick(const std::vector<T>& items, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

void write_log(const std::string& path, const std::vector<eval::EpochLog>& log) {
  if (!path.empty()) io::write_text(path, eval::to_jsonl(log));
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_predictions(const std::string& path, std::span<const int> y,
                       std::span<const double> scores, std::size_t classes) {
  if (path.empty()) return;
  std::ostringstream out;
  out << "y_true";
  for (std::size_t k = 0; k < classes; ++k) out << ",score_" << k;
  out << '\n';
  for (std::size_t i = 0; i < y.size(); ++i) {
    out << y[i];
    for (std::size_t k = 0; k < classes; ++k) out << ',' << format_double(scores[i * classes + k]);
    out << '\n';
  }
  io::write_text(path, out.str());
}

// Bootstrap reports for label and score metrics on one test set.
Json classification_reports(std::span<const int> y, std::span<const double> scores,
                            std::size_t classes, std::size_t replicates, std::uint64_t seed) {
  const auto pred = stats::argmax_rows(scores, classes);
  const auto pick_labels = [&](std::span<const std::size_t> idx, std::span<const int> v) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
  };
  const auto pick_scores = [&](std::span<const std::size_t> idx) {
    std::vector<double> out;
    out.reserve(idx.size() * classes);
    for (auto i : idx) out.insert(out.end(), scores.begin() + static_cast<std::ptrdiff_t>(i * classes),
                                  scores.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes));
    return out;
  };
  Json out = Json::object();
  const auto label_metric = [&](const std::string& name, auto fn, std::uint64_t key) {
    const auto r = stats::bootstrap(
        name, y.size(),
        [&](std::span<const std::size_t> idx) { return fn(pick_labels(idx, y), pick_labels(idx, pred)); },
        replicates, seed + key);
    out[name] = stats::to_json(r);
  };
  label_metric("accuracy", stats::accuracy, 0);
  label_metric("balanced_accuracy", stats::balanced_accuracy, 1);
  label_metric("weighted_f1", stats::weighted_f1, 2);
  try {
    const auto r = stats::bootstrap(
        "auc", y.size(),
        [&](std::span<const std::size_t> idx) {
          return stats::auc(pick_labels(idx, y), pick_scores(idx), classes);
        },
        replicates, seed + 3);
    out["auc"] = stats::to_json(r);
  } catch (const UndefinedMetricError& e) {
    out["auc"] = nullptr;
  }
  return out;
}

Json abmil_json(const eval::AbmilConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"hidden_dim", c.hidden_dim}, {"dropout", c.dropout},
          {"lr", c.lr},               {"weight_decay", c.weight_decay},
          {"max_epochs", c.max_epochs}, {"patience", c.patience}};
}

Json training_json(const eval::AbmilResult& r) {
  return {{"epochs_run", r.log.size()},
          {"best_epoch", r.best_epoch},
          {"stopped_early", r.stopped_early}};
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::istringstream in(io::read_text(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw ConfigurationError(path + ": CSV needs a header and at least one row");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      throw ConfigurationError(path + ": row " + std::to_string(r + 1) + " has " +
                               std::to_string(rows[r].size()) + " cells, header has " +
                               std::to_string(rows[0].size()));
    }
  }
  return rows;
}

double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigurationError(where + ": \"" + s + "\" is not a number");
  return v;
}

}  // namespace

// ---- gen -------------------------------------------------------------------

Json run_gen(const GenOptions& o) {
  refuse_overwrite(o.out, o.force);
  refuse_overwrite(io::manifest_path_for(o.out), o.force);
  Json params;
  std::size_t items = 0;
  if (o.kind == "pretrain_textures") {
    const auto ds = data::generate_textures(o.textures, o.seed);
    data::write_image_dataset(ds, o.out);
    items = ds.size();
    params = {{"images", o.textures.count}, {"size", o.textures.size},
              {"classes", o.textures.classes}, {"noise", o.textures.noise}};
  } else if (o.kind == "mil_bags") {
    const auto bags = data::generate_mil_bags(o.mil, o.seed);
    data::write_bags(bags, o.out);
    items = bags.size();
    params = {{"bags", o.mil.bags}, {"dim", o.mil.dim}, {"min_instances", o.mil.min_instances},
              {"max_instances", o.mil.max_instances}, {"signal_rate", o.mil.signal_rate},
              {"signal_instances", o.mil.signal_instances},
              {"signal_strength", o.mil.signal_strength}};
  } else if (o.kind == "survival") {
    const auto bags = data::generate_survival_bags(o.survival, o.seed);
    data::write_bags(bags, o.out);
    items = bags.size();
    params = {{"bags", o.survival.bags}, {"dim", o.survival.dim},
              {"min_instances", o.survival.min_instances},
              {"max_instances", o.survival.max_instances},
              {"signal_strength", o.survival.signal_strength}};
  } else if (o.kind == "clusters") {
    const auto pts = data::generate_clusters(o.clusters, o.seed);
    data::write_points(pts, o.out);
    items = pts.y.size();
    params = {{"clusters", o.clusters.clusters}, {"per_cluster", o.clusters.per_cluster},
              {"dim", o.clusters.dim}, {"separation", o.clusters.separation}};
  } else {
    throw ConfigurationError("unknown dataset kind \"" + o.kind +
                             "\" (pretrain_textures, mil_bags, survival, clusters)");
  }
  Json out;
  out["command"] = "gen";
  out["kind"] = o.kind;
  out["seed"] = o.seed;
  out["params"] = std::move(params);
  out["items"] = items;
  out["store"] = store_summary(o.out);
  return out;
}

// ---- pretrain ----------------------------------------------------------------

train::PretrainConfig resolve_pretrain_config(const PretrainOptions& o) {
  train::PretrainConfig cfg;
  if (!o.engine_config.empty()) {
    cfg = train::pretrain_config_from_json(nlohmann::json::parse(io::read_text(o.engine_config)));
  } else if (o.preset == "toy") {
    cfg = train::PretrainConfig::toy();
  } else if (o.preset == "paper-fullscale") {
    cfg = train::PretrainConfig::paper_fullscale();
  } else {
    throw ConfigurationError("unknown pretrain preset \"" + o.preset + "\" (toy, paper-fullscale)");
  }
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.total_iters) cfg.train.total_iters = *o.total_iters;
  if (o.warmup_iters) cfg.train.warmup_iters = *o.warmup_iters;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.base_lr) cfg.train.base_lr = *o.base_lr;
  if (o.no_expert) cfg.distill = kd::DistillWeights::disabled();
  cfg.validate();
  return cfg;
}

Json run_pretrain(const PretrainOptions& o, std::ostream& log) {
  const auto cfg = resolve_pretrain_config(o);
  Json out;
  out["command"] = "pretrain";
  if (o.dry_run) {
    out["dry_run"] = true;
    out["config"] = train::to_json(cfg);
    return out;
  }
  if (!o.seed) throw ConfigurationError("pretrain needs --seed");
  if (o.data.empty() || o.out.empty()) throw ConfigurationError("pretrain needs --data and --out");
  const auto dataset = data::read_image_dataset(o.data);
  auto teachers = kd::make_random_teachers(cfg.teacher_seed);
  auto trainer = o.resume.empty()
                     ? train::Pretrainer(cfg, teachers)
                     : train::Pretrainer::from_checkpoint(train::Checkpoint::load(o.resume), teachers);
  if (!o.resume.empty() && train::to_json(trainer.config()) != train::to_json(cfg)) {
    throw ConfigurationError("checkpoint " + o.resume + " was written with a different config");
  }
  const std::size_t target = o.steps.value_or(cfg.train.total_iters);
  if (target > cfg.train.total_iters) {
    throw ConfigurationError("--steps " + std::to_string(target) + " exceeds total_iters " +
                             std::to_string(cfg.train.total_iters));
  }
  const std::size_t first = trainer.step();
  std::ostringstream jsonl;
  std::vector<double> totals;
  Json last = nullptr;
  while (trainer.step() < target) {
    const auto r = trainer.train_step(dataset);
    totals.push_back(r.total);
    last = train::to_json(r);
    jsonl << last.dump() << '\n';
    if (r.step % 50 == 0 || trainer.step() == target) {
      log << "step " << r.step << " loss " << r.total << " lr " << r.lr << '\n';
    }
  }
  trainer.checkpoint().save(o.out);
  if (!o.log_jsonl.empty()) io::write_text(o.log_jsonl, jsonl.str());
  out["seed"] = *o.seed;
  out["start_step"] = first;
  out["end_step"] = trainer.step();
  out["last"] = std::move(last);
  if (!totals.empty()) {
    const std::size_t w = std::min<std::size_t>(50, totals.size());
    out["loss_moving_average"] =
        std::accumulate(totals.end() - static_cast<std::ptrdiff_t>(w), totals.end(), 0.0) /
        static_cast<double>(w);
  }
  out["checkpoint"] = o.out;
  out["config"] = train::to_json(cfg);
  return out;
}

// ---- extract ---------------------------------------------------------------

Json run_extract(const ExtractOptions& o) {
  if (o.model != "student" && o.model != "ema") {
    throw ConfigurationError("--model must be student or ema");
  }
  if (o.tokens != "cls" && o.tokens != "all") throw ConfigurationError("--tokens must be cls or all");
  const auto ck = train::Checkpoint::load(o.checkpoint);
  const auto cfg = train::pretrain_config_from_json(nlohmann::json::parse(ck.get_string("meta.config")));
  const auto trainer =
      train::Pretrainer::from_checkpoint(ck, kd::make_random_teachers(cfg.teacher_seed));
  const auto ds = data::read_image_dataset(o.data);
  for (const auto& img : ds.images) {
    if (img.height != cfg.vit.image_size || img.width != cfg.vit.image_size) {
      throw DimensionError("images are " + std::to_string(img.height) + "x" +
                           std::to_string(img.width) + ", checkpoint expects " +
                           std::to_string(cfg.vit.image_size));
    }
  }
  const bool teacher = o.model == "ema";
  io::FeatureStore store;
  std::vector<io::ManifestRecord> manifest;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, ds.size() - start);
    const std::span<const vit::Image> chunk(ds.images.data() + start, n);
    if (o.tokens == "cls") {
      for (const auto& row : trainer.embed(chunk, teacher)) store.append(std::span<const double>(row));
    } else {
      const auto tokens = trainer.encode(chunk, teacher);
      for (std::size_t i = 0; i < n; ++i) store.append(std::span<const double>(kd::pack_view_tokens(tokens, i)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      io::ManifestRecord r;
      r.id = ds.ids[start + i];
      r.row_index = start + i;
      r.label = ds.labels[start + i];
      if (o.tokens == "all") r.view_key = r.id;
      manifest.push_back(std::move(r));
    }
  }
  store.write(o.out);
  io::write_manifest(io::manifest_path_for(o.out), manifest);
  Json out;
  out["command"] = "extract";
  out["checkpoint"] = o.checkpoint;
  out["step"] = trainer.step();
  out["model"] = o.model;
  out["tokens"] = o.tokens;
  out["store"] = store_summary(o.out);
  return out;
}

// ---- probe -----------------------------------------------------------------

Json run_probe(const ProbeOptions& o) {
  const auto train_set = load_labeled(o.train);
  const auto test_set = load_labeled(o.test);
  eval::LabeledFeatures val_set;
  if (!o.val.empty()) val_set = load_labeled(o.val);
  const std::size_t classes = class_count(train_set.y, test_set.y);
  const auto r = eval::train_linear_probe(train_set.x, train_set.y, val_set.x, val_set.y, classes,
                                          o.probe, o.seed);
  write_log(o.log_jsonl, r.log);
  const auto scores = r.model.predict_proba(test_set.x);
  write_predictions(o.predictions_out, test_set.y, scores, classes);
  Json out;
  out["command"] = "probe";
  out["seed"] = o.seed;
  out["config"] = {{"lr", o.probe.lr}, {"weight_decay", o.probe.weight_decay},
                   {"max_epochs", o.probe.max_epochs}, {"patience", o.probe.patience},
                   {"batch_size", o.probe.batch_size}};
  out["classes"] = classes;
  out["training"] = {{"epochs_run", r.log.size()}, {"best_epoch", r.best_epoch},
                     {"stopped_early", r.stopped_early}};
  out["test"] = classification_reports(test_set.y, scores, classes, o.replicates, o.seed);
  return out;
}

// ---- mil -------------------------------------------------------------------

Json run_mil(const MilOptions& o) {
  const auto bags = load_bags(o.data);
  std::vector<int> labels;
  for (const auto& b : bags) labels.push_back(b.label);
  const std::size_t classes = class_count(labels);
  const auto split = eval::stratified_split(labels, o.split, o.seed);
  const auto train = pick(bags, split.train);
  const auto val = pick(bags, split.val);
  const auto test = pick(bags, split.test);
  if (test.empty()) throw ConfigurationError("the split leaves no test bags");
  const auto r = eval::train_abmil(train, val, classes, o.abmil, o.seed);
  write_log(o.log_jsonl, r.log);
  const auto scores = eval::predict_proba(r.model, test);
  const auto y = pick(labels, split.test);
  write_predictions(o.predictions_out, y, scores, classes);
  Json out;
  out["command"] = "mil";
  out["seed"] = o.seed;
  out["config"] = abmil_json(o.abmil);
  out["split"] = {{"train", train.size()}, {"val", val.size()}, {"test", test.size()},
                  {"warnings", split.warnings}};
  out["training"] = training_json(r);
  out["test"] = classification_reports(y, scores, classes, o.replicates, o.seed);
  return out;
}

// ---- survival --------------------------------------------------------------

Json run_survival(const SurvivalOptions& o) {
  auto bags = load_bags(o.data);
  std::vector<double> times;
  for (const auto& b : bags) {
    if (!b.survival) throw ConfigurationError("bag " + b.bag_id + " has no time/event");
    times.push_back(b.survival->time);
  }
  // Provisional bins over the whole cohort only drive stratification; the
  // edges used for training are refit on the training split.
  const auto provisional = eval::bin_survival_times(times);
  std::vector<eval::SurvivalRecord> records;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    records.push_back(*bags[i].survival);
    records.back().bin = provisional.bins[i];
  }
  const auto split = eval::stratified_survival_split(records, o.split, o.seed);
  if (split.test.empty()) throw ConfigurationError("the split leaves no test cases");
  const auto fitted = eval::bin_survival_times(pick(times, split.train));
  for (std::size_t i = 0; i < bags.size(); ++i) bags[i].survival->bin = eval::assign_bin(fitted, times[i]);
  const auto train = pick(bags, split.train);
  const auto val = pick(bags, split.val);
  const auto test = pick(bags, split.test);
  const auto r = eval::train_abmil_survival(train, val, o.abmil, o.seed);
  write_log(o.log_jsonl, r.log);
  const auto risk = eval::predict_risk(r.model, test);
  std::vector<eval::SurvivalRecord> test_records;
  for (const auto& b : test) test_records.push_back(*b.survival);
  const auto report = stats::bootstrap(
      "c_index", test.size(),
      [&](std::span<const std::size_t> idx) {
        return eval::c_index(pick(risk, idx), pick(test_records, idx));
      },
      o.replicates, o.seed);
  Json out;
  out["command"] = "survival";
  out["seed"] = o.seed;
  out["config"] = abmil_json(o.abmil);
  out["bin_edges"] = fitted.edges;
  out["bins_degenerate"] = fitted.degenerate;
  out["split"] = {{"train", train.size()}, {"val", val.size()}, {"test", test.size()},
                  {"warnings", split.warnings}};
  out["training"] = training_json(r);
  out["test"] = {{"c_index", stats::to_json(report)}};
  return out;
}

// ---- retrieve ----------------------------------------------------------------

Json run_retrieve(const RetrieveOptions& o) {
  const auto train_set = load_labeled(o.train);
  const auto test_set = load_labeled(o.test);
  const auto mode = eval::parse_normalization(o.normalization);
  const auto index = eval::build_index(train_set.x, train_set.y, mode);
  if (o.ks.empty()) throw ConfigurationError("--k needs at least one value");
  const std::size_t kmax = *std::max_element(o.ks.begin(), o.ks.end());
  // Per query, the best rank at which a same-label item appears.
  std::vector<std::size_t> first_hit(test_set.y.size(), kmax + 1);
  for (std::size_t q = 0; q < test_set.y.size(); ++q) {
    const auto nn = eval::retrieve(index, test_set.x.row(q), kmax);
    for (std::size_t r = 0; r < nn.size(); ++r) {
      if (nn[r].label == test_set.y[q]) {
        first_hit[q] = r + 1;
        break;
      }
    }
  }
  Json acc = Json::object();
  for (std::size_t c = 0; c < o.ks.size(); ++c) {
    const std::size_t k = o.ks[c];
    const std::string name = "acc@" + std::to_string(k);
    const auto r = stats::bootstrap(
        name, first_hit.size(),
        [&](std::span<const std::size_t> idx) {
          double hits = 0.0;
          for (auto i : idx) hits += first_hit[i] <= k ? 1.0 : 0.0;
          return hits / static_cast<double>(idx.size());
        },
        o.replicates, o.seed + c);
    acc[name] = stats::to_json(r);
  }
  Json out;
  out["command"] = "retrieve";
  out["seed"] = o.seed;
  out["normalization"] = eval::to_string(mode);
  out["index_size"] = index.size();
  out["queries"] = test_set.y.size();
  out["test"] = std::move(acc);
  return out;
}

// ---- stats -----------------------------------------------------------------

Json run_stats_bootstrap(const StatsBootstrapOptions& o) {
  const auto rows = read_csv(o.predictions);
  const auto& header = rows[0];
  if (header[0] != "y_true" || header.size() < 2) {
    throw ConfigurationError(o.predictions + ": header must start with y_true");
  }
  std::vector<int> y;
  std::vector<double> scores;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    y.push_back(static_cast<int>(parse_number(rows[r][0], o.predictions)));
    for (std::size_t c = 1; c < header.size(); ++c) scores.push_back(parse_number(rows[r][c], o.predictions));
  }
  Json out;
  out["command"] = "stats bootstrap";
  out["seed"] = o.seed;
  out["items"] = y.size();
  if (header.size() == 2 && header[1] == "y_pred") {
    std::vector<int> pred;
    for (double v : scores) pred.push_back(static_cast<int>(v));
    Json metrics = Json::object();
    std::uint64_t key = 0;
    for (const auto& [name, fn] :
         std::vector<std::pair<std::string, double (*)(std::span<const int>, std::span<const int>)>>{
             {"accuracy", stats::accuracy},
             {"balanced_accuracy", stats::balanced_accuracy},
             {"weighted_f1", stats::weighted_f1}}) {
      metrics[name] = stats::to_json(stats::bootstrap(name, fn, y, pred, o.replicates, o.seed + key++));
    }
    out["metrics"] = std::move(metrics);
  } else {
    out["metrics"] = classification_reports(y, scores, header.size() - 1, o.replicates, o.seed);
  }
  return out;
}

Json run_stats_wilcoxon(const StatsWilcoxonOptions& o) {
  const auto rows = read_csv(o.pairs);
  if (rows[0].size() != 2) throw ConfigurationError(o.pairs + ": expected two columns of paired values");
  std::vector<double> a, b;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    a.push_back(parse_number(rows[r][0], o.pairs));
    b.push_back(parse_number(rows[r][1], o.pairs));
  }
  const auto alt = stats::parse_alternative(o.alternative);
  const auto res = stats::wilcoxon_signed_rank(a, b, alt);
  Json out;
  out["command"] = "stats wilcoxon";
  out["columns"] = rows[0];
  out["alternative"] = o.alternative;
  out["statistic"] = res.statistic;
  out["p_value"] = res.p_value;
  out["n"] = res.n;
  out["exact"] = res.exact;
  return out;
}

// ---- rank ------------------------------------------------------------------

Json run_rank(const RankOptions& o) {
  const auto m = stats::read_rank_matrix_csv(o.matrix, o.lower_is_better);
  const auto report = stats::compare_models(m, o.alpha);
  if (!o.csv_out.empty()) io::write_text(o.csv_out, stats::ranks_csv(report));
  Json out;
  out["command"] = "rank";
  out["matrix"] = o.matrix;
  out["tasks"] = m.tasks;
  const Json body = stats::to_json(report);
  for (const auto& [key, value] : body.items()) out[key] = value;
  return out;
}

}  // namespace ukd::cli

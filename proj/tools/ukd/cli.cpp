#include "cli.hpp"

#include <CLI11.hpp>

#include <functional>
#include <map>

#include "pipelines.hpp"
#include "ukd/errors.hpp"
#include "ukd/io/binary.hpp"

namespace ukd::cli {

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitAbort = 3;

struct Common {
  std::string json_out;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help,
                      Common& common) {
  auto* sub = app.add_subcommand(name, help);
  sub->footer("--config FILE reads option values from a flat TOML document; keys are long\n"
              "option names without dashes, command-line flags take precedence.");
  sub->add_option("--json", common.json_out, "Write the JSON result here instead of stdout");
  return sub;
}

void add_seed(CLI::App* sub, std::uint64_t& seed) {
  sub->add_option("--seed", seed, "Seed for every random draw")->required();
}

void add_abmil_options(CLI::App* sub, eval::AbmilConfig& c, std::string& preset) {
  sub->add_option("--preset", preset, "paper-abmil applies the reference ABMIL table")
      ->check(CLI::IsMember({"paper-abmil"}));
  sub->add_option("--embed-dim", c.embed_dim);
  sub->add_option("--hidden-dim", c.hidden_dim);
  sub->add_option("--dropout", c.dropout);
  sub->add_option("--lr", c.lr);
  sub->add_option("--weight-decay", c.weight_decay);
  sub->add_option("--max-epochs", c.max_epochs);
  sub->add_option("--patience", c.patience);
}

// The preset fixes every table value, so explicit overrides would be silently
// ignored; reject the combination instead.
void apply_abmil_preset(CLI::App* sub, eval::AbmilConfig& c, const std::string& preset) {
  if (preset.empty()) return;
  for (const char* flag : {"--embed-dim", "--hidden-dim", "--dropout", "--lr", "--max-epochs"}) {
    if (sub->count(flag) > 0) {
      throw ConfigurationError(std::string("--preset paper-abmil fixes ") + flag +
                               "; drop one of them");
    }
  }
  const auto table = eval::AbmilConfig::paper();
  c.embed_dim = table.embed_dim;
  c.hidden_dim = table.hidden_dim;
  c.dropout = table.dropout;
  c.lr = table.lr;
  c.max_epochs = table.max_epochs;
}

void emit(const Json& result, const Common& common, std::ostream& out) {
  const std::string text = result.dump(2) + "\n";
  if (common.json_out.empty()) {
    out << text;
  } else {
    io::write_text(common.json_out, text);
  }
}

bool mentions(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Replaces `--config FILE` with the options the file sets, skipping keys the
// command line also sets. Unknown keys then fail like unknown flags.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string path;
  std::size_t at = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" || args[i].rfind("--config=", 0) == 0) {
      if (!path.empty()) throw ConfigurationError("--config given twice");
      if (args[i] == "--config") {
        if (i + 1 >= args.size()) throw ConfigurationError("--config needs a file");
        path = args[++i];
      } else {
        path = args[i].substr(9);
      }
      at = rest.size();
      continue;
    }
    rest.push_back(args[i]);
  }
  if (path.empty()) return rest;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::FileError& e) {
    throw IoError(std::string("config: ") + e.what());
  }
  std::vector<std::string> injected;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty()) {
      throw ConfigurationError("config " + path + ": sections are not supported (" +
                               item.fullname() + ")");
    }
    const std::string flag = "--" + item.name;
    if (mentions(rest, flag)) continue;
    if (item.inputs.size() == 1) {
      injected.push_back(flag + "=" + item.inputs.front());
    } else {
      injected.push_back(flag);
      injected.insert(injected.end(), item.inputs.begin(), item.inputs.end());
    }
  }
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(), injected.end());
  return rest;
}

Json error_json(const std::string& kind, const std::string& message) {
  Json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ukd: pretraining, evaluation and benchmark statistics", "ukd"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Upper bound on worker threads")
      ->envname("UKD_THREADS")
      ->check(CLI::PositiveNumber);

  Common common;
  std::function<Json()> action;

  // gen
  GenOptions gen;
  auto* gen_cmd = add_command(app, "gen", "Write a synthetic dataset", common);
  gen_cmd->add_option("kind", gen.kind, "pretrain_textures | mil_bags | survival | clusters")
      ->required();
  gen_cmd->add_option("--out", gen.out, "Feature store path; the manifest goes next to it")
      ->required();
  add_seed(gen_cmd, gen.seed);
  gen_cmd->add_flag("--force", gen.force, "Overwrite existing files");
  std::size_t dim = 0;
  std::map<std::string, std::vector<CLI::Option*>> kind_options;
  kind_options["pretrain_textures"] = {
      gen_cmd->add_option("--images", gen.textures.count),
      gen_cmd->add_option("--size", gen.textures.size),
      gen_cmd->add_option("--classes", gen.textures.classes),
      gen_cmd->add_option("--noise", gen.textures.noise)};
  auto* dim_opt = gen_cmd->add_option("--dim", dim, "Feature width");
  auto* bags_opt = gen_cmd->add_option("--bags", gen.mil.bags);
  auto* min_opt = gen_cmd->add_option("--min-instances", gen.mil.min_instances);
  auto* max_opt = gen_cmd->add_option("--max-instances", gen.mil.max_instances);
  auto* strength_opt = gen_cmd->add_option("--signal-strength", gen.mil.signal_strength);
  kind_options["mil_bags"] = {gen_cmd->add_option("--signal-rate", gen.mil.signal_rate),
                              gen_cmd->add_option("--signal-instances", gen.mil.signal_instances)};
  kind_options["survival"] = {gen_cmd->add_option("--max-signal", gen.survival.max_signal),
                              gen_cmd->add_option("--censor-max", gen.survival.censor_max)};
  kind_options["clusters"] = {gen_cmd->add_option("--clusters", gen.clusters.clusters),
                              gen_cmd->add_option("--per-cluster", gen.clusters.per_cluster),
                              gen_cmd->add_option("--separation", gen.clusters.separation)};
  for (const char* k : {"mil_bags", "survival"}) {
    for (auto* o : {bags_opt, min_opt, max_opt, strength_opt}) kind_options[k].push_back(o);
  }
  for (const char* k : {"mil_bags", "survival", "clusters"}) kind_options[k].push_back(dim_opt);
  gen_cmd->callback([&] {
    if (!kind_options.count(gen.kind)) {
      throw ConfigurationError("unknown dataset kind \"" + gen.kind +
                               "\" (pretrain_textures, mil_bags, survival, clusters)");
    }
    for (const auto& [kind, opts] : kind_options) {
      if (kind == gen.kind) continue;
      for (auto* o : opts) {
        const auto& own = kind_options.at(gen.kind);
        if (o->count() > 0 && std::find(own.begin(), own.end(), o) == own.end()) {
          throw ConfigurationError(o->get_name() + " does not apply to " + gen.kind);
        }
      }
    }
    // Shared flags land in the mil struct; copy them to survival.
    if (gen.kind == "survival") {
      const data::SurvivalParams defaults;
      gen.survival.bags = bags_opt->count() ? gen.mil.bags : defaults.bags;
      gen.survival.min_instances = min_opt->count() ? gen.mil.min_instances : defaults.min_instances;
      gen.survival.max_instances = max_opt->count() ? gen.mil.max_instances : defaults.max_instances;
      gen.survival.signal_strength =
          strength_opt->count() ? gen.mil.signal_strength : defaults.signal_strength;
    }
    if (dim_opt->count()) gen.mil.dim = gen.survival.dim = gen.clusters.dim = dim;
    action = [&] { return run_gen(gen); };
  });

  // pretrain
  PretrainOptions pre;
  std::uint64_t pre_seed = 0;
  std::size_t pre_steps = 0, pre_total = 0, pre_batch = 0;
  double pre_lr = 0.0;
  auto* pre_cmd = add_command(app, "pretrain", "Self- and expert-distillation pretraining", common);
  pre_cmd->add_option("--data", pre.data, "Image store written by gen pretrain_textures");
  pre_cmd->add_option("--out", pre.out, "Checkpoint to write");
  auto* pre_seed_opt = pre_cmd->add_option("--seed", pre_seed, "Seed for every random draw");
  pre_cmd->add_option("--preset", pre.preset, "toy | paper-fullscale")
      ->check(CLI::IsMember({"toy", "paper-fullscale"}));
  pre_cmd->add_option("--engine-config", pre.engine_config, "Full engine config as JSON");
  auto* steps_opt = pre_cmd->add_option("--steps", pre_steps, "Stop after this global step");
  auto* total_opt = pre_cmd->add_option("--total-iters", pre_total, "Schedule length");
  std::size_t pre_warmup = 0;
  auto* warmup_opt = pre_cmd->add_option("--warmup-iters", pre_warmup);
  auto* batch_opt = pre_cmd->add_option("--batch-size", pre_batch);
  auto* lr_opt = pre_cmd->add_option("--base-lr", pre_lr);
  pre_cmd->add_flag("--no-expert", pre.no_expert, "Zero every expert-distillation weight");
  pre_cmd->add_option("--resume", pre.resume, "Continue from this checkpoint");
  pre_cmd->add_option("--log-jsonl", pre.log_jsonl, "Per-step losses as JSON lines");
  pre_cmd->add_flag("--dry-run", pre.dry_run, "Print the resolved config and exit");
  pre_cmd->callback([&] {
    if (pre_seed_opt->count()) pre.seed = pre_seed;
    if (steps_opt->count()) pre.steps = pre_steps;
    if (total_opt->count()) pre.total_iters = pre_total;
    if (batch_opt->count()) pre.batch_size = pre_batch;
    if (warmup_opt->count()) pre.warmup_iters = pre_warmup;
    if (lr_opt->count()) pre.base_lr = pre_lr;
    if (!pre.dry_run && !pre.seed) throw ConfigurationError("pretrain needs --seed");
    action = [&] { return run_pretrain(pre, err); };
  });

  // extract
  ExtractOptions ext;
  auto* ext_cmd = add_command(app, "extract", "Embed images with a pretrained checkpoint", common);
  ext_cmd->add_option("--checkpoint", ext.checkpoint)->required();
  ext_cmd->add_option("--data", ext.data, "Image store")->required();
  ext_cmd->add_option("--out", ext.out, "Feature store to write")->required();
  ext_cmd->add_option("--model", ext.model, "student | ema")->check(CLI::IsMember({"student", "ema"}));
  ext_cmd->add_option("--tokens", ext.tokens, "cls | all (CLS then patch grid, per row)")
      ->check(CLI::IsMember({"cls", "all"}));
  ext_cmd->callback([&] { action = [&] { return run_extract(ext); }; });

  // probe
  ProbeOptions probe;
  auto* probe_cmd = add_command(app, "probe", "Linear probe on frozen features", common);
  probe_cmd->add_option("--train", probe.train)->required();
  probe_cmd->add_option("--val", probe.val, "Enables early stopping");
  probe_cmd->add_option("--test", probe.test)->required();
  add_seed(probe_cmd, probe.seed);
  probe_cmd->add_option("--lr", probe.probe.lr);
  probe_cmd->add_option("--weight-decay", probe.probe.weight_decay);
  probe_cmd->add_option("--max-epochs", probe.probe.max_epochs);
  probe_cmd->add_option("--patience", probe.probe.patience);
  probe_cmd->add_option("--batch-size", probe.probe.batch_size);
  probe_cmd->add_option("--replicates", probe.replicates, "Bootstrap replicates");
  probe_cmd->add_option("--log-jsonl", probe.log_jsonl, "Per-epoch log");
  probe_cmd->add_option("--predictions-out", probe.predictions_out, "Test scores as CSV");
  probe_cmd->callback([&] { action = [&] { return run_probe(probe); }; });

  // mil
  MilOptions mil;
  std::string mil_preset;
  auto* mil_cmd = add_command(app, "mil", "ABMIL slide classification", common);
  mil_cmd->add_option("--data", mil.data, "Bag store written by gen mil_bags or extract")
      ->required();
  add_seed(mil_cmd, mil.seed);
  add_abmil_options(mil_cmd, mil.abmil, mil_preset);
  mil_cmd->add_option("--split", mil.split, "train,val,test ratios")->delimiter(',')->expected(3);
  mil_cmd->add_option("--replicates", mil.replicates, "Bootstrap replicates");
  mil_cmd->add_option("--log-jsonl", mil.log_jsonl, "Per-epoch log");
  mil_cmd->add_option("--predictions-out", mil.predictions_out, "Test scores as CSV");
  mil_cmd->callback([&] {
    apply_abmil_preset(mil_cmd, mil.abmil, mil_preset);
    action = [&] { return run_mil(mil); };
  });

  // survival
  SurvivalOptions surv;
  std::string surv_preset;
  auto* surv_cmd = add_command(app, "survival", "ABMIL discrete-time survival", common);
  surv_cmd->add_option("--data", surv.data, "Bag store with time and event")->required();
  add_seed(surv_cmd, surv.seed);
  add_abmil_options(surv_cmd, surv.abmil, surv_preset);
  surv_cmd->add_option("--split", surv.split, "train,val,test ratios")->delimiter(',')->expected(3);
  surv_cmd->add_option("--replicates", surv.replicates, "Bootstrap replicates");
  surv_cmd->add_option("--log-jsonl", surv.log_jsonl, "Per-epoch log");
  surv_cmd->callback([&] {
    apply_abmil_preset(surv_cmd, surv.abmil, surv_preset);
    action = [&] { return run_survival(surv); };
  });

  // retrieve
  RetrieveOptions ret;
  auto* ret_cmd = add_command(app, "retrieve", "Nearest-neighbour retrieval accuracy", common);
  ret_cmd->add_option("--train", ret.train, "Database store")->required();
  ret_cmd->add_option("--test", ret.test, "Query store")->required();
  add_seed(ret_cmd, ret.seed);
  ret_cmd->add_option("--normalization", ret.normalization, "zscore | minmax")
      ->check(CLI::IsMember({"zscore", "minmax"}));
  ret_cmd->add_option("--k", ret.ks, "Comma-separated K values")->delimiter(',');
  ret_cmd->add_option("--replicates", ret.replicates, "Bootstrap replicates");
  ret_cmd->callback([&] { action = [&] { return run_retrieve(ret); }; });

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Bootstrap reports and paired tests");
  stats_cmd->require_subcommand(1);
  StatsBootstrapOptions sb;
  auto* sb_cmd = add_command(*stats_cmd, "bootstrap", "Metric CIs from a predictions CSV", common);
  sb_cmd->add_option("--predictions", sb.predictions, "y_true,score_0.. or y_true,y_pred")
      ->required();
  add_seed(sb_cmd, sb.seed);
  sb_cmd->add_option("--replicates", sb.replicates);
  sb_cmd->callback([&] { action = [&] { return run_stats_bootstrap(sb); }; });
  StatsWilcoxonOptions sw;
  auto* sw_cmd = add_command(*stats_cmd, "wilcoxon", "Signed-rank test on a two-column CSV", common);
  sw_cmd->add_option("--pairs", sw.pairs)->required();
  sw_cmd->add_option("--alternative", sw.alternative, "two_sided | greater | less")
      ->check(CLI::IsMember({"two_sided", "greater", "less"}));
  sw_cmd->callback([&] { action = [&] { return run_stats_wilcoxon(sw); }; });

  // rank
  RankOptions rank;
  auto* rank_cmd = add_command(app, "rank", "Average ranks, Nemenyi CD and pairwise tests", common);
  rank_cmd->add_option("--matrix", rank.matrix, "CSV: model column then one column per task")
      ->required();
  rank_cmd->add_option("--alpha", rank.alpha, "0.05 or 0.10");
  rank_cmd->add_option("--lower-is-better", rank.lower_is_better, "Task columns to negate")
      ->delimiter(',');
  rank_cmd->add_option("--csv-out", rank.csv_out, "Ranks table as CSV");
  rank_cmd->callback([&] { action = [&] { return run_rank(rank); }; });

  try {
    const auto expanded = expand_config(args);
    std::vector<const char*> argv{"ukd"};
    for (const auto& a : expanded) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "ukd: " << e.what() << '\n';
      out << error_json("usage_error", e.what()).dump(2) << '\n';
      return kExitUsage;
    }
    Json result = action();
    result["threads"] = threads;
    emit(result, common, out);
    return 0;
  } catch (const TrainingAbort& e) {
    Json j = error_json(std::string(to_string(e.kind())), e.what());
    j["error"]["component"] = e.component();
    j["error"]["last_good_step"] = e.last_good_step();
    err << "ukd: " << e.what() << '\n';
    out << j.dump(2) << '\n';
    return kExitAbort;
  } catch (const Error& e) {
    err << "ukd: " << e.what() << '\n';
    out << error_json(std::string(to_string(e.kind())), e.what()).dump(2) << '\n';
    const bool usage = e.kind() == ErrorKind::kConfiguration || e.kind() == ErrorKind::kParameter;
    return usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "ukd: " << e.what() << '\n';
    out << error_json("internal_error", e.what()).dump(2) << '\n';
    return kExitRuntime;
  }
}

}  // namespace ukd::cli

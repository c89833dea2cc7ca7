#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "banditmatch/config.hpp"
#include "banditmatch/datasets.hpp"
#include "banditmatch/trainer.hpp"

namespace fs = std::filesystem;
using namespace bmatch;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kVersion = 4, kParse = 5, kConfig = 6 };

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string manifest_path;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--set", f.settings, "override one config key (key=value), repeatable");
  cmd->add_option("--seed", f.seed, "master seed (sets both seed and seeds)");
  cmd->add_option("--jobs", f.jobs, "threads for evaluation episodes");
  cmd->add_option("--manifest", f.manifest_path, "where to write the run manifest");
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig c = f.config_path.empty() ? ExperimentConfig{} : load_config(f.config_path);
  for (const auto& s : f.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) {
    c.seed = *f.seed;
    c.seeds = {*f.seed};
  }
  if (f.jobs) c.pipeline.eval.jobs = *f.jobs;
  validate(c);
  return c;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, const ExperimentConfig& cfg)
      : command_(std::move(command)), cfg_(cfg), started_(std::chrono::steady_clock::now()), started_at_(utc_now()) {}

  void input(const std::string& path) { inputs_.push_back(path); }
  void output(const std::string& path) { outputs_.push_back(path); }

  void write(const std::string& path) const {
    auto files = [](const std::vector<std::string>& paths) {
      json arr = json::array();
      for (const auto& p : paths) arr.push_back({{"path", p}, {"fnv1a64", hex64(fnv1a64(read_file(p)))}});
      return arr;
    };
    const json j{{"format", "banditmatch.manifest"},
                 {"version", "v1"},
                 {"command", command_},
                 {"config", config_to_text(cfg_)},
                 {"seed", cfg_.seed},
                 {"seeds", cfg_.seeds},
                 {"inputs", files(inputs_)},
                 {"outputs", files(outputs_)},
                 {"started_at", started_at_},
                 {"wall_clock_seconds",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count()}};
    write_file(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  ExperimentConfig cfg_;
  std::vector<std::string> inputs_, outputs_;
  std::chrono::steady_clock::time_point started_;
  std::string started_at_;
};

std::string manifest_for(const CommonFlags& f, const std::string& primary_output) {
  return f.manifest_path.empty() ? primary_output + ".manifest.json" : f.manifest_path;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("no such file: " + path);
}

// "ips+kl", "banditmatch-no_cbl", "fixmatch", ...
MethodSpec parse_method_name(const std::string& name) {
  MethodSpec m;
  std::string base = name;
  if (base.size() > 3 && base.ends_with("+kl")) {
    m.kl = true;
    base.resize(base.size() - 3);
  }
  if (const auto dash = base.find('-'); dash != std::string::npos) {
    m.ablation = ablation_from_string(base.substr(dash + 1));
    base.resize(dash);
  }
  m.method = method_from_string(base);
  return m;
}

world::WorldSchema world_or_default(const std::string& path, Manifest& manifest) {
  if (path.empty()) return world::WorldSchema::default_world();
  manifest.input(path);
  return world::load_world(path);
}

void write_reports(const std::string& stem, const std::vector<ExperimentReport>& reports, Manifest& manifest) {
  write_file(stem + ".csv", reports_to_csv(reports));
  write_file(stem + ".json", report_to_json(reports));
  write_file(stem + ".txt", reports_to_table(reports));
  for (const char* ext : {".csv", ".json", ".txt"}) manifest.output(stem + ext);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BanditMatch semi-supervised bandit learning for multi-label dialogue policies"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* gen_world = app.add_subcommand("gen-world", "write a world schema file");
  std::string out;
  bool default_world = false;
  add_common(gen_world, flags);
  gen_world->add_option("--out", out, "world file to write")->required();
  gen_world->add_flag("--default", default_world, "write the built-in default world instead of a generated one");

  auto* gen_corpus = app.add_subcommand("gen-corpus", "simulate expert dialogs into a labelled corpus");
  std::string world_path;
  std::optional<int> n_dialogs;
  add_common(gen_corpus, flags);
  gen_corpus->add_option("--world", world_path, "world file (default: built-in world)");
  gen_corpus->add_option("--dialogs", n_dialogs, "number of dialogs (overrides corpus_dialogs)");
  gen_corpus->add_option("--out", out, "corpus JSONL to write")->required();

  auto* split_log = app.add_subcommand("split-and-log", "split the corpus, train the logging policy, log feedback");
  std::string corpus_path, out_dir;
  std::optional<double> fraction;
  add_common(split_log, flags);
  split_log->add_option("--world", world_path, "world file (default: built-in world)");
  split_log->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  split_log->add_option("--fraction", fraction, "labelled share p (overrides labeled_fraction)");
  split_log->add_option("--out-dir", out_dir, "directory for labeled/pool/log JSONL and pi0.ckpt")->required();

  auto* train = app.add_subcommand("train", "fine-tune a policy on the bandit log");
  std::string pi0_path, log_path, labeled_path, method_name, train_log_path;
  add_common(train, flags);
  train->add_option("--pi0", pi0_path, "logging policy checkpoint")->required();
  train->add_option("--log", log_path, "bandit log JSONL")->required();
  train->add_option("--labeled", labeled_path, "labelled split JSONL (needed by replay_labeled)");
  train->add_option("--corpus", corpus_path, "fully labelled corpus JSONL (needed by sl)");
  train->add_option("--method", method_name, "run name such as banditmatch, ips+kl, banditmatch-no_cbl");
  train->add_option("--out", out, "checkpoint to write")->required();
  train->add_option("--train-log", train_log_path, "training log CSV (default: <out>.log.csv)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate checkpoints against the user simulator");
  std::vector<std::string> checkpoints, names;
  bool with_expert = false;
  add_common(evaluate_cmd, flags);
  evaluate_cmd->add_option("--world", world_path, "world file (default: built-in world)");
  evaluate_cmd->add_option("--checkpoint", checkpoints, "policy checkpoint, repeatable");
  evaluate_cmd->add_option("--name", names, "row name per checkpoint (default: file stem)");
  evaluate_cmd->add_flag("--expert", with_expert, "add a row for the rule-based expert");
  evaluate_cmd->add_option("--out", out, "report stem; writes .csv, .json and .txt")->required();

  auto* ablate = app.add_subcommand("ablate", "run a method grid over every seed");
  std::string grid = "ablation";
  add_common(ablate, flags);
  ablate->add_option("--world", world_path, "world file (default: built-in world)");
  ablate->add_option("--grid", grid, "ablation or table")->check(CLI::IsMember({"ablation", "table"}));
  ablate->add_option("--out-dir", out_dir, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "vary the labelled share");
  std::vector<std::string> sweep_methods{"logging", "banditmatch"};
  add_common(sweep, flags);
  sweep->add_option("--world", world_path, "world file (default: built-in world)");
  sweep->add_option("--methods", sweep_methods, "run names to include")->delimiter(',');
  sweep->add_option("--out-dir", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    ExperimentConfig cfg = resolve_config(flags);
    if (n_dialogs) apply_setting(cfg, "corpus_dialogs", std::to_string(*n_dialogs));
    if (fraction) {
      cfg.pipeline.labeled_fraction = *fraction;
      validate(cfg);
    }
    if (!method_name.empty()) {
      const MethodSpec m = parse_method_name(method_name);
      cfg.pipeline.train.method = m.method;
      cfg.pipeline.train.kl = m.kl;
      cfg.pipeline.train.ablation = m.ablation;
      validate(cfg);
    }
    const auto* cmd = app.get_subcommands().front();
    Manifest manifest(cmd->get_name(), cfg);
    if (!out.empty() && fs::path(out).has_parent_path()) ensure_dir(fs::path(out).parent_path().string());
    std::string manifest_path;

    if (cmd == gen_world) {
      const auto schema =
          default_world ? world::WorldSchema::default_world() : world::WorldSchema::generate(cfg.world, cfg.seed);
      world::save_world(out, schema);
      manifest.output(out);
      manifest_path = manifest_for(flags, out);
      std::printf("%d domains, %d actions, state dim %d -> %s\n", schema.num_domains(), schema.num_actions(),
                  schema.state_dim(), out.c_str());
    } else if (cmd == gen_corpus) {
      const auto schema = world_or_default(world_path, manifest);
      const auto corpus = generate_corpus(schema, cfg.pipeline.corpus_dialogs, derive_seed(cfg.seed, "corpus"),
                                          cfg.pipeline.eval.episode);
      write_corpus_jsonl(out, corpus);
      manifest.output(out);
      manifest_path = manifest_for(flags, out);
      std::printf("%zu examples -> %s\n", corpus.size(), out.c_str());
    } else if (cmd == split_log) {
      require_file(corpus_path);
      const auto schema = world_or_default(world_path, manifest);
      manifest.input(corpus_path);
      const auto corpus = read_corpus_jsonl(corpus_path);
      auto [labeled, pool] = split_corpus(corpus, {cfg.pipeline.labeled_fraction, derive_seed(cfg.seed, "split")});
      TrainConfig lc = cfg.pipeline.train;
      lc.seed = derive_seed(cfg.seed, "logging");
      const PolicyNet pi0 = train_logging_policy(labeled, policy_spec(schema, cfg.pipeline), lc);
      const auto log = log_bandit_data(pi0, pool);
      ensure_dir(out_dir);
      const fs::path dir(out_dir);
      write_corpus_jsonl((dir / "labeled.jsonl").string(), labeled);
      write_corpus_jsonl((dir / "pool.jsonl").string(), pool);
      write_bandit_jsonl((dir / "log.jsonl").string(), log);
      pi0.save((dir / "pi0.ckpt").string());
      for (const char* f : {"labeled.jsonl", "pool.jsonl", "log.jsonl", "pi0.ckpt"}) manifest.output((dir / f).string());
      manifest_path = flags.manifest_path.empty() ? (dir / "manifest.json").string() : flags.manifest_path;
      long positives = 0;
      for (const auto& r : log) positives += r.delta;
      std::printf("labeled %zu, logged %zu (%ld positive)", labeled.size(), log.size(), positives);
      if (!log.empty()) std::printf(", exact match on the log %.4f", exact_match_rate(pi0, log));
      std::printf("\n");
    } else if (cmd == train) {
      for (const auto* p : {&pi0_path, &log_path}) require_file(*p);
      const TrainConfig& tc0 = cfg.pipeline.train;
      if (tc0.method == Method::sl && corpus_path.empty()) throw UsageError("method sl needs --corpus");
      if (tc0.replay_labeled && labeled_path.empty()) throw UsageError("replay_labeled needs --labeled");
      const PolicyNet pi0 = PolicyNet::load(pi0_path);
      const auto log = read_bandit_jsonl(log_path);
      manifest.input(pi0_path);
      manifest.input(log_path);
      std::vector<LabeledExample> labeled, full;
      if (!labeled_path.empty()) {
        labeled = read_corpus_jsonl(labeled_path);
        manifest.input(labeled_path);
      }
      if (!corpus_path.empty()) {
        full = read_corpus_jsonl(corpus_path);
        manifest.input(corpus_path);
      }
      TrainConfig tc = tc0;
      tc.seed = derive_seed(cfg.seed, "train");
      const TrainResult r = train_method(pi0, log, labeled, full, tc);
      r.policy.save(out);
      if (train_log_path.empty()) train_log_path = out + ".log.csv";
      write_file(train_log_path, train_log_to_csv(r.log));
      manifest.output(out);
      manifest.output(train_log_path);
      if (tc.trace_thresholds) {
        write_file(out + ".trace.csv", threshold_trace_to_csv(r.trace));
        manifest.output(out + ".trace.csv");
      }
      manifest_path = manifest_for(flags, out);
      std::printf("%s: %d epochs, %zu steps, log exact match %.4f -> %s\n", run_name(tc).c_str(), r.epochs_run,
                  r.log.size(), exact_match_rate(r.policy, log), out.c_str());
    } else if (cmd == evaluate_cmd) {
      if (checkpoints.empty() && !with_expert) throw UsageError("evaluate needs --checkpoint or --expert");
      if (!names.empty() && names.size() != checkpoints.size()) throw UsageError("one --name per --checkpoint");
      const auto schema = world_or_default(world_path, manifest);
      std::vector<ExperimentReport> reports;
      if (with_expert) reports.push_back(evaluate(world::expert_agent(schema), schema, cfg.pipeline.eval, cfg.seed, "expert"));
      for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        require_file(checkpoints[i]);
        const PolicyNet policy = PolicyNet::load(checkpoints[i]);
        if (policy.state_dim() != schema.state_dim() || policy.num_actions() != schema.num_actions()) {
          throw ConfigError(checkpoints[i] + " does not match the world's state or action dimensions");
        }
        manifest.input(checkpoints[i]);
        const std::string name = names.empty() ? fs::path(checkpoints[i]).stem().string() : names[i];
        reports.push_back(evaluate(policy, schema, cfg.pipeline.eval, cfg.seed, name));
      }
      write_reports(out, reports, manifest);
      manifest_path = manifest_for(flags, out);
      std::cout << reports_to_table(reports);
    } else if (cmd == ablate) {
      const auto schema = world_or_default(world_path, manifest);
      const auto methods = grid == "table" ? table_methods() : ablation_methods();
      const auto reports = run_experiment(schema, cfg.pipeline, methods, cfg.seeds);
      ensure_dir(out_dir);
      write_reports((fs::path(out_dir) / grid).string(), reports, manifest);
      manifest_path = flags.manifest_path.empty() ? (fs::path(out_dir) / "manifest.json").string() : flags.manifest_path;
      std::cout << reports_to_table(reports);
    } else if (cmd == sweep) {
      const auto schema = world_or_default(world_path, manifest);
      std::vector<MethodSpec> methods;
      for (const auto& n : sweep_methods) methods.push_back(parse_method_name(n));
      const auto result = run_sl_sweep(schema, cfg.pipeline, cfg.sweep_percentages, methods, cfg.seeds);
      std::string combined;
      for (const auto& m : methods) {
        const std::string csv = sweep_to_csv(result.at(m.name()));
        combined += combined.empty() ? csv : csv.substr(csv.find('\n') + 1);
      }
      ensure_dir(out_dir);
      const std::string path = (fs::path(out_dir) / "sweep.csv").string();
      write_file(path, combined);
      manifest.output(path);
      manifest_path = flags.manifest_path.empty() ? (fs::path(out_dir) / "manifest.json").string() : flags.manifest_path;
      std::cout << combined;
    }
    manifest.write(manifest_path);
    return kOk;
  } catch (const VersionError& e) {
    std::cerr << "version error: " << e.what() << "\n";
    return kVersion;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

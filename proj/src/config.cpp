#include "banditmatch/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

namespace bmatch {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                    std::string(expected));
}

long long to_int(std::string_view key, std::string_view v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  try {
    std::size_t used = 0;
    const double out = std::stod(s, &used);
    if (used != s.size()) bad_value(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

template <typename T, typename F>
std::vector<T> to_list(std::string_view v, F&& parse) {
  std::vector<T> out;
  std::string item;
  std::istringstream in{std::string(v)};
  while (std::getline(in, item, ',')) out.push_back(parse(trim(item)));
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string boolstr(bool b) { return b ? "true" : "false"; }

struct Entry {
  ConfigKey key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define BM_INT(NAME, FIELD, HELP)                                                                        \
  Entry {                                                                                                \
    {NAME, HELP}, [](ExperimentConfig& c, std::string_view v) { c.FIELD = static_cast<int>(to_int(NAME, v)); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                                \
  }
#define BM_DOUBLE(NAME, FIELD, HELP)                                                         \
  Entry {                                                                                    \
    {NAME, HELP}, [](ExperimentConfig& c, std::string_view v) { c.FIELD = to_double(NAME, v); }, \
        [](const ExperimentConfig& c) { return num(c.FIELD); }                               \
  }
#define BM_BOOL(NAME, FIELD, HELP)                                                         \
  Entry {                                                                                  \
    {NAME, HELP}, [](ExperimentConfig& c, std::string_view v) { c.FIELD = to_bool(NAME, v); }, \
        [](const ExperimentConfig& c) { return boolstr(c.FIELD); }                         \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {{"seed", "master seed for single-run commands"},
       [](ExperimentConfig& c, std::string_view v) { c.seed = to_u64("seed", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      {{"seeds", "comma-separated master seeds, one run each (ablate, sweep)"},
       [](ExperimentConfig& c, std::string_view v) {
         c.seeds = to_list<std::uint64_t>(v, [](const std::string& s) { return to_u64("seeds", s); });
       },
       [](const ExperimentConfig& c) { return join(c.seeds); }},
      BM_INT("world_domains", world.domains, "generated world: number of domains"),
      BM_INT("world_informable", world.informable, "generated world: informable slots per domain"),
      BM_INT("world_requestable", world.requestable, "generated world: requestable slots per domain"),
      BM_INT("world_values", world.values, "generated world: values per informable slot"),
      BM_INT("world_entities", world.entities, "generated world: database entities per domain"),
      BM_INT("corpus_dialogs", pipeline.corpus_dialogs, "expert dialogs in the corpus"),
      BM_DOUBLE("labeled_fraction", pipeline.labeled_fraction, "share of the corpus given full labels (D_S)"),
      {{"hidden_dims", "comma-separated hidden layer widths"},
       [](ExperimentConfig& c, std::string_view v) {
         c.pipeline.hidden_dims = to_list<int>(v, [](const std::string& s) {
           return static_cast<int>(to_int("hidden_dims", s));
         });
       },
       [](const ExperimentConfig& c) { return join(c.pipeline.hidden_dims); }},
      {{"hidden_activation", "relu or tanh"},
       [](ExperimentConfig& c, std::string_view v) {
         try {
           c.pipeline.hidden_activation = nn::activation_from_string(std::string(v));
         } catch (const Error&) {
           bad_value("hidden_activation", v, "relu or tanh");
         }
       },
       [](const ExperimentConfig& c) { return nn::to_string(c.pipeline.hidden_activation); }},
      BM_INT("batch_size", pipeline.train.batch_size, "minibatch size"),
      BM_INT("epochs", pipeline.train.epochs, "fine-tuning epochs over the bandit log"),
      BM_INT("logging_epochs", pipeline.train.logging_epochs, "epochs for the logging policy on D_S"),
      {{"optimizer", "adam or sgd"},
       [](ExperimentConfig& c, std::string_view v) {
         try {
           c.pipeline.train.optimizer.kind = nn::optimizer_from_string(std::string(v));
         } catch (const Error&) {
           bad_value("optimizer", v, "adam or sgd");
         }
       },
       [](const ExperimentConfig& c) { return nn::to_string(c.pipeline.train.optimizer.kind); }},
      BM_DOUBLE("learning_rate", pipeline.train.optimizer.learning_rate, "optimizer step size"),
      BM_DOUBLE("lambda_p", pipeline.train.weights.lambda_p, "pseudo-label loss weight"),
      BM_DOUBLE("lambda_b", pipeline.train.weights.lambda_b, "bandit loss weight"),
      BM_DOUBLE("lambda_k", pipeline.train.weights.lambda_k, "KL control weight"),
      BM_DOUBLE("alpha_weak", pipeline.train.aug.alpha_weak, "Beta parameter of the weak mix-up"),
      BM_DOUBLE("alpha_strong", pipeline.train.aug.alpha_strong, "Beta parameter of the strong mix-up"),
      BM_DOUBLE("fet_fallback_yes", pipeline.train.fet.fallback_yes, "accept threshold without statistics"),
      BM_DOUBLE("fet_fallback_no", pipeline.train.fet.fallback_no, "reject threshold without statistics"),
      BM_DOUBLE("fet_ema_decay", pipeline.train.fet.ema_decay, "EMA decay of the positive baselines and mc_pos"),
      BM_DOUBLE("fet_mc_epsilon", pipeline.train.fet.mc_epsilon, "model correctness clamp margin"),
      {{"method", "logging, banditmatch, sl, ips, banditnet or fixmatch"},
       [](ExperimentConfig& c, std::string_view v) { c.pipeline.train.method = method_from_string(std::string(v)); },
       [](const ExperimentConfig& c) { return to_string(c.pipeline.train.method); }},
      BM_BOOL("kl", pipeline.train.kl, "add KL control to ips / banditnet"),
      {{"ablation", "none, no_mc_scale, no_fet, no_cbl, no_kl or none_all"},
       [](ExperimentConfig& c, std::string_view v) {
         c.pipeline.train.ablation = ablation_from_string(std::string(v));
       },
       [](const ExperimentConfig& c) { return to_string(c.pipeline.train.ablation); }},
      BM_DOUBLE("ips_clip", pipeline.train.ips_clip, "importance weight cap M"),
      BM_DOUBLE("banditnet_translation", pipeline.train.banditnet_translation, "BanditNet baseline lambda"),
      BM_DOUBLE("fixmatch_tau", pipeline.train.fixmatch_tau, "fixed confidence threshold"),
      BM_BOOL("replay_labeled", pipeline.train.replay_labeled, "append D_S to the bandit log as positives"),
      BM_BOOL("cold_start", pipeline.train.cold_start, "random init instead of a copy of the logging policy"),
      BM_DOUBLE("holdout_fraction", pipeline.train.holdout_fraction,
                "share of logged positives held out for early stopping (0 disables)"),
      BM_INT("patience", pipeline.train.patience, "epochs without improvement before stopping"),
      BM_BOOL("trace_thresholds", pipeline.train.trace_thresholds, "write the per-step threshold trace"),
      BM_INT("eval_dialogs", pipeline.eval.n_dialogs, "dialogs per evaluation run"),
      BM_INT("eval_runs", pipeline.eval.n_runs, "evaluation runs (evaluate command)"),
      BM_INT("max_turns", pipeline.eval.episode.max_turns, "agent turns before a dialog is cut off"),
      BM_INT("jobs", pipeline.eval.jobs, "threads for evaluation episodes"),
      {{"sweep_percentages", "comma-separated SL percentages for the sweep"},
       [](ExperimentConfig& c, std::string_view v) {
         c.sweep_percentages =
             to_list<int>(v, [](const std::string& s) { return static_cast<int>(to_int("sweep_percentages", s)); });
       },
       [](const ExperimentConfig& c) { return join(c.sweep_percentages); }},
  };
  return table;
}

#undef BM_INT
#undef BM_DOUBLE
#undef BM_BOOL

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  find_entry(key).set(cfg, trim(value));
}

std::string get_setting(const ExperimentConfig& cfg, std::string_view key) { return find_entry(key).get(cfg); }

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", lineno);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError("config: empty key", lineno);
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  return parse_config(read_file(path), std::move(base));
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(cfg) + "\n";
  return out;
}

void validate(const ExperimentConfig& cfg) {
  const auto& p = cfg.pipeline;
  if (cfg.seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (p.corpus_dialogs < 1) throw ConfigError("corpus_dialogs must be >= 1");
  if (!(p.labeled_fraction > 0.0 && p.labeled_fraction <= 1.0)) {
    throw ConfigError("labeled_fraction must lie in (0, 1]");
  }
  for (int h : p.hidden_dims) {
    if (h < 1) throw ConfigError("hidden_dims entries must be >= 1");
  }
  if (p.eval.n_dialogs < 1 || p.eval.n_runs < 1) throw ConfigError("eval_dialogs and eval_runs must be >= 1");
  if (p.eval.episode.max_turns < 1) throw ConfigError("max_turns must be >= 1");
  if (p.eval.jobs < 1) throw ConfigError("jobs must be >= 1");
  for (int s : cfg.sweep_percentages) {
    if (s <= 0 || s > 100) throw ConfigError("sweep_percentages entries must lie in (0, 100]");
  }
  const auto& w = cfg.world;
  if (w.domains < 1 || w.informable < 1 || w.requestable < 1 || w.values < 1 || w.entities < 1) {
    throw ConfigError("world sizes must be >= 1");
  }
  p.train.validate();
}

}  // namespace bmatch

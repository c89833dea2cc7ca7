#include "banditmatch/datasets.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bmatch {

std::vector<LabeledExample> generate_corpus(const world::WorldSchema& schema, int n_dialogs, std::uint64_t seed,
                                            const world::EpisodeConfig& cfg) {
  if (n_dialogs <= 0) throw UsageError("generate_corpus needs n_dialogs > 0");
  Rng rng(derive_seed(seed, "corpus-goals"));
  const world::Agent expert = world::expert_agent(schema);
  std::vector<LabeledExample> corpus;
  for (int i = 0; i < n_dialogs; ++i) {
    const world::UserGoal goal = world::sample_goal(schema, rng);
    std::vector<world::TurnRecord> trace;
    world::run_episode(expert, schema, goal, cfg, &trace);
    for (auto& turn : trace) {
      if (turn.agent_actions.empty()) throw Error("expert produced an empty action set");
      corpus.push_back({std::move(turn.state), std::move(turn.agent_actions)});
    }
  }
  return corpus;
}

std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> split_corpus(
    const std::vector<LabeledExample>& corpus, const SplitConfig& cfg) {
  if (!(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0)) {
    throw UsageError("labeled fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, "split"));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(i)));
    std::swap(order[i - 1], order[j]);
  }
  const auto n_labeled = static_cast<std::size_t>(std::llround(cfg.labeled_fraction * static_cast<double>(corpus.size())));
  std::vector<LabeledExample> labeled, pool;
  labeled.reserve(n_labeled);
  pool.reserve(corpus.size() - n_labeled);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_labeled ? labeled : pool).push_back(corpus[order[i]]);
  }
  return {std::move(labeled), std::move(pool)};
}

Prediction predict_set(const PolicyNet& policy, std::span<const double> state) {
  Prediction p;
  p.propensities = policy.probs(state);
  p.actions = threshold_set(p.propensities);
  return p;
}

int simulate_feedback(const ActionSet& predicted, const ActionSet& truth) { return predicted == truth ? 1 : 0; }

std::vector<BanditRecord> log_bandit_data(const PolicyNet& logging_policy, const std::vector<LabeledExample>& pool) {
  std::vector<BanditRecord> records;
  records.reserve(pool.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < pool.size(); start += kChunk) {
    const std::size_t end = std::min(pool.size(), start + kChunk);
    nn::Tensor states(end - start, static_cast<std::size_t>(logging_policy.state_dim()));
    for (std::size_t i = start; i < end; ++i) {
      if (pool[i].state.size() != states.cols()) throw ConfigError("pool state dimension mismatch");
      std::copy(pool[i].state.begin(), pool[i].state.end(), states.row(i - start).begin());
    }
    const nn::Tensor probs = logging_policy.probs(states);
    for (std::size_t i = start; i < end; ++i) {
      BanditRecord r;
      r.state = pool[i].state;
      const auto row = probs.row(i - start);
      r.rho.assign(row.begin(), row.end());
      r.logged = threshold_set(r.rho);
      r.delta = simulate_feedback(r.logged, pool[i].actions);
      records.push_back(std::move(r));
    }
  }
  return records;
}

namespace {

using json = nlohmann::ordered_json;

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    try {
      const std::string v = j.at("v").get<std::string>();
      if (v != kJsonlVersion) throw VersionError("line " + std::to_string(lineno) + ": schema version '" + v + "' unsupported");
      fn(j, lineno);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), lineno);
    }
  }
}

ActionSet checked_actions(std::vector<int> a, std::size_t lineno) {
  ActionSet s = make_action_set(a);
  if (s.size() != a.size()) throw ParseError("duplicate action indices", lineno);
  for (int x : s) {
    if (x < 0) throw ParseError("negative action index", lineno);
  }
  return s;
}

}  // namespace

std::string corpus_to_jsonl(const std::vector<LabeledExample>& corpus) {
  std::string out;
  for (const auto& e : corpus) {
    json j;
    j["v"] = kJsonlVersion;
    j["state"] = e.state;
    j["actions"] = e.actions;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<LabeledExample> corpus_from_jsonl(const std::string& text) {
  std::vector<LabeledExample> out;
  for_each_line(text, [&](const json& j, std::size_t lineno) {
    LabeledExample e;
    e.state = j.at("state").get<std::vector<double>>();
    e.actions = checked_actions(j.at("actions").get<std::vector<int>>(), lineno);
    out.push_back(std::move(e));
  });
  return out;
}

std::string bandit_to_jsonl(const std::vector<BanditRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["v"] = kJsonlVersion;
    j["state"] = r.state;
    j["actions"] = r.logged;
    j["rho"] = r.rho;
    j["delta"] = r.delta;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<BanditRecord> bandit_from_jsonl(const std::string& text) {
  std::vector<BanditRecord> out;
  for_each_line(text, [&](const json& j, std::size_t lineno) {
    BanditRecord r;
    r.state = j.at("state").get<std::vector<double>>();
    r.logged = checked_actions(j.at("actions").get<std::vector<int>>(), lineno);
    r.rho = j.at("rho").get<std::vector<double>>();
    r.delta = j.at("delta").get<int>();
    if (r.delta != 0 && r.delta != 1) throw ParseError("delta must be 0 or 1", lineno);
    for (double p : r.rho) {
      if (!(p > 0.0 && p < 1.0)) throw ParseError("propensities must lie in (0, 1)", lineno);
    }
    for (int a : r.logged) {
      if (a >= static_cast<int>(r.rho.size())) throw ParseError("action index beyond propensity vector", lineno);
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_corpus_jsonl(const std::string& path, const std::vector<LabeledExample>& corpus) {
  write_file(path, corpus_to_jsonl(corpus));
}
std::vector<LabeledExample> read_corpus_jsonl(const std::string& path) { return corpus_from_jsonl(read_file(path)); }
void write_bandit_jsonl(const std::string& path, const std::vector<BanditRecord>& records) {
  write_file(path, bandit_to_jsonl(records));
}
std::vector<BanditRecord> read_bandit_jsonl(const std::string& path) { return bandit_from_jsonl(read_file(path)); }

}  // namespace bmatch

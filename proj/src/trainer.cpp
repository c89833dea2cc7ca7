#include "banditmatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

namespace bmatch {

using nn::Tensor;
using nn::Var;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(i)));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  const auto B = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += B) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + B)));
  }
  return batches;
}

void labeled_batch(const std::vector<LabeledExample>& data, const std::vector<std::size_t>& rows, int num_actions,
                   Tensor& states, Tensor& targets) {
  const std::size_t D = data.front().state.size();
  states = Tensor(rows.size(), D);
  targets = Tensor(rows.size(), static_cast<std::size_t>(num_actions));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const LabeledExample& ex = data[rows[i]];
    if (ex.state.size() != D) throw UsageError("labeled examples have inconsistent state sizes");
    std::copy(ex.state.begin(), ex.state.end(), states.row(i).begin());
    const auto ind = to_indicator(ex.actions, num_actions);
    std::copy(ind.begin(), ind.end(), targets.row(i).begin());
  }
}

double count(const Tensor& t) {
  double n = 0.0;
  for (double v : t.data()) n += v;
  return n;
}

struct SslSwitches {
  bool fet = true;
  bool mc_scale = true;
  bool cbl = true;
  bool kl = true;
};

SslSwitches switches_for(const TrainConfig& cfg) {
  SslSwitches s;
  if (cfg.method == Method::fixmatch) return {false, false, false, false};
  switch (cfg.ablation) {
    case Ablation::none: break;
    case Ablation::no_mc_scale: s.mc_scale = false; break;
    case Ablation::no_fet: s.fet = false; break;
    case Ablation::no_cbl: s.cbl = false; break;
    case Ablation::no_kl: s.kl = false; break;
    case Ablation::none_all: s = {false, false, false, false}; break;
  }
  return s;
}

PolicyNet initial_policy(const PolicyNet& pi0, const TrainConfig& cfg) {
  if (cfg.cold_start) return PolicyNet(pi0.spec(), derive_seed(cfg.seed, "cold-init"));
  return pi0.clone_trainable();
}

template <typename StepFn>
void run_epochs(TrainResult& result, const std::vector<BanditRecord>& train, const std::vector<BanditRecord>& holdout,
                const TrainConfig& cfg, StepFn&& step_fn) {
  const int C = result.policy.num_actions();
  Rng batch_rng(derive_seed(cfg.seed, "batches"));
  const bool stopping = !holdout.empty();
  PolicyNet best;
  double best_score = 0.0;
  if (stopping) {
    best_score = exact_match_rate(result.policy, holdout);
    result.holdout_exact_match.push_back(best_score);
    best = result.policy.clone_trainable();
  }
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& rows : epoch_batches(train.size(), cfg.batch_size, batch_rng)) {
      step_fn(obj::Batch::from_records(train, rows, C));
    }
    result.epochs_run = epoch;
    if (!stopping) continue;
    const double score = exact_match_rate(result.policy, holdout);
    result.holdout_exact_match.push_back(score);
    if (score >= best_score) {
      best_score = score;
      best = result.policy.clone_trainable();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (stopping) {
    auto params = result.policy.trainable_params();
    const auto& saved = best.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = saved[i].value();
  } else {
    result.best_epoch = result.epochs_run;
  }
}

TrainResult finetune_ssl(const PolicyNet& pi0, const std::vector<BanditRecord>& records, const TrainConfig& cfg) {
  if (records.empty()) throw UsageError("training needs at least one bandit record");
  const SslSwitches sw = switches_for(cfg);
  const int C = pi0.num_actions();
  const HoldoutSplit split = split_holdout(records, cfg.holdout_fraction, derive_seed(cfg.seed, "holdout"));

  TrainResult result;
  result.policy = initial_policy(pi0, cfg);
  nn::Optimizer opt(cfg.optimizer, result.policy.trainable_params());
  Rng aug_rng(derive_seed(cfg.seed, "augment"));
  fet::ThresholdTracker tracker(static_cast<std::size_t>(C), cfg.fet);

  obj::LossWeights w = cfg.weights;
  if (!sw.cbl) w.lambda_b = 0.0;
  if (!sw.kl) w.lambda_k = 0.0;

  long step = 0;
  run_epochs(result, split.train, split.holdout, cfg, [&](const obj::Batch& batch) {
    const Tensor weak = obj::augment_batch(batch.states, cfg.aug.alpha_weak, aug_rng);
    const Tensor strong = obj::augment_batch(batch.states, cfg.aug.alpha_strong, aug_rng);

    PolicyNet& pi = result.policy;
    const Var p_weak = pi.forward(Var::constant(weak));
    const Tensor& weak_probs = p_weak.value();

    Var p_plain;
    if (sw.cbl || sw.kl) p_plain = pi.forward(Var::constant(batch.states));

    TrainLogRow row;
    row.step = step;
    row.mc_pos = kNaN;
    row.mc_neg = kNaN;
    Tensor conf;
    if (sw.fet) {
      const Tensor plain_probs = p_plain ? p_plain.value() : pi.probs(batch.states);
      const auto correct = fet::correct_positive_set(plain_probs, batch.logged, batch.delta);
      const auto base = fet::positive_thresholds(plain_probs, batch.logged, correct);
      std::vector<std::size_t> negatives;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.delta[i] == 0) negatives.push_back(i);
      }
      const auto stats =
          fet::model_correctness(plain_probs, batch.logged, batch.rho, correct, negatives, cfg.fet.mc_epsilon);
      const fet::ThresholdSet th = tracker.update(base, stats, sw.mc_scale);
      const auto& used = tracker.last_stats();
      if (used.pos_available) row.mc_pos = used.mc_pos;
      if (used.neg_available) row.mc_neg = used.mc_neg;
      conf = fet::confidence_mask(weak_probs, batch.delta, th.neg_yes, th.neg_no);
      if (cfg.trace_thresholds) {
        for (int c = 0; c < C; ++c) {
          const auto k = static_cast<std::size_t>(c);
          result.trace.push_back(
              {step, c, th.pos_yes[k], th.pos_no[k], th.neg_yes[k], th.neg_no[k], row.mc_pos, row.mc_neg});
        }
      }
    } else {
      conf = obj::fixmatch_mask(weak_probs, batch.delta, cfg.fixmatch_tau);
    }
    const Tensor qhat = obj::pseudo_labels(weak_probs);
    const Tensor unconf = obj::unconf_plus_mask(batch.delta, conf, batch.logged);

    const Var l_l = obj::loss_labeled(p_weak, batch);
    Var l_p = Var::constant(Tensor::scalar(0.0));
    if (count(conf) > 0.0) l_p = obj::loss_pseudo(pi.forward(Var::constant(strong)), conf, qhat);
    const Var l_b = sw.cbl ? obj::loss_bandit(p_plain, batch, unconf) : Var::constant(Tensor::scalar(0.0));
    const Var l_k = sw.kl ? obj::loss_kl(p_plain, pi0.probs(batch.states)) : Var::constant(Tensor::scalar(0.0));
    const Var total = obj::total_loss(l_l, l_p, l_b, l_k, w);

    opt.zero_grad();
    nn::backward(total);
    opt.step();

    row.l_l = l_l.value().item();
    row.l_p = l_p.value().item();
    row.l_b = l_b.value().item();
    row.l_k = l_k.value().item();
    row.total = total.value().item();
    row.n_conf = static_cast<long>(count(conf));
    row.n_unconf_plus = static_cast<long>(count(unconf));
    result.log.push_back(row);
    ++step;
  });
  return result;
}

TrainResult finetune_crm(const PolicyNet& pi0, const std::vector<BanditRecord>& records, const TrainConfig& cfg) {
  if (records.empty()) throw UsageError("training needs at least one bandit record");
  const HoldoutSplit split = split_holdout(records, cfg.holdout_fraction, derive_seed(cfg.seed, "holdout"));
  TrainResult result;
  result.policy = initial_policy(pi0, cfg);
  nn::Optimizer opt(cfg.optimizer, result.policy.trainable_params());

  long step = 0;
  run_epochs(result, split.train, split.holdout, cfg, [&](const obj::Batch& batch) {
    const Var p = result.policy.forward(Var::constant(batch.states));
    const Var crm = cfg.method == Method::ips ? obj::loss_ips(p, batch, cfg.ips_clip)
                                              : obj::loss_banditnet(p, batch, cfg.banditnet_translation, cfg.ips_clip);
    Var l_k = Var::constant(Tensor::scalar(0.0));
    Var total = crm;
    if (cfg.kl) {
      l_k = obj::loss_kl(p, pi0.probs(batch.states));
      total = crm + l_k * cfg.weights.lambda_k;
    }
    opt.zero_grad();
    nn::backward(total);
    opt.step();

    TrainLogRow row;
    row.step = step++;
    row.l_b = crm.value().item();
    row.l_k = l_k.value().item();
    row.total = total.value().item();
    row.mc_pos = kNaN;
    row.mc_neg = kNaN;
    result.log.push_back(row);
  });
  return result;
}

TrainResult finetune_supervised(const PolicyNet& pi0, const std::vector<LabeledExample>& data,
                                const TrainConfig& cfg) {
  if (data.empty()) throw UsageError("supervised training needs labeled examples");
  TrainResult result;
  result.policy = initial_policy(pi0, cfg);
  nn::Optimizer opt(cfg.optimizer, result.policy.trainable_params());
  Rng batch_rng(derive_seed(cfg.seed, "batches"));
  long step = 0;
  Tensor states, targets;
  result.epochs_run = cfg.epochs;
  result.best_epoch = cfg.epochs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& rows : epoch_batches(data.size(), cfg.batch_size, batch_rng)) {
      labeled_batch(data, rows, pi0.num_actions(), states, targets);
      const Var loss = obj::loss_supervised(result.policy.forward(Var::constant(states)), targets);
      opt.zero_grad();
      nn::backward(loss);
      opt.step();
      TrainLogRow row;
      row.step = step++;
      row.l_l = loss.value().item();
      row.total = row.l_l;
      row.mc_pos = kNaN;
      row.mc_neg = kNaN;
      result.log.push_back(row);
    }
  }
  return result;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::logging: return "logging";
    case Method::banditmatch: return "banditmatch";
    case Method::sl: return "sl";
    case Method::ips: return "ips";
    case Method::banditnet: return "banditnet";
    case Method::fixmatch: return "fixmatch";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::logging, Method::banditmatch, Method::sl, Method::ips, Method::banditnet,
                   Method::fixmatch}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_mc_scale: return "no_mc_scale";
    case Ablation::no_fet: return "no_fet";
    case Ablation::no_cbl: return "no_cbl";
    case Ablation::no_kl: return "no_kl";
    case Ablation::none_all: return "none_all";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& s) {
  for (Ablation a : {Ablation::none, Ablation::no_mc_scale, Ablation::no_fet, Ablation::no_cbl, Ablation::no_kl,
                     Ablation::none_all}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown ablation '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0 || logging_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (!(optimizer.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(aug.alpha_weak > 0.0) || !(aug.alpha_strong > 0.0)) throw ConfigError("mix-up alphas must be > 0");
  if (weights.lambda_p < 0.0 || weights.lambda_b < 0.0 || weights.lambda_k < 0.0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (!(fet.ema_decay >= 0.0 && fet.ema_decay < 1.0)) throw ConfigError("fet_ema_decay must lie in [0, 1)");
  if (!(fet.mc_epsilon > 0.0 && fet.mc_epsilon < 1.0)) throw ConfigError("fet_mc_epsilon must lie in (0, 1)");
  if (!(fet.fallback_yes >= 0.5 && fet.fallback_yes <= 1.0) || !(fet.fallback_no >= 0.0 && fet.fallback_no <= 0.5)) {
    throw ConfigError("fallback thresholds must satisfy yes in [0.5, 1], no in [0, 0.5]");
  }
  if (!(fixmatch_tau >= 0.5 && fixmatch_tau <= 1.0)) throw ConfigError("fixmatch_tau must lie in [0.5, 1]");
  if (!(ips_clip > 0.0)) throw ConfigError("ips_clip must be > 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must lie in [0, 1)");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (ablation != Ablation::none && method != Method::banditmatch) {
    throw ConfigError("ablation switches are only valid with method banditmatch");
  }
  if (kl && method != Method::ips && method != Method::banditnet) {
    throw ConfigError("the kl flag is only valid with ips or banditnet");
  }
}

std::string run_name(Method m, bool kl, Ablation a) {
  std::string s = to_string(m);
  if (kl) s += "+kl";
  if (a != Ablation::none) s += "-" + to_string(a);
  return s;
}

std::string run_name(const TrainConfig& cfg) { return run_name(cfg.method, cfg.kl, cfg.ablation); }

HoldoutSplit split_holdout(const std::vector<BanditRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout_fraction must lie in [0, 1)");
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].delta == 1) positives.push_back(i);
  }
  Rng rng(seed);
  for (std::size_t i = positives.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(i)));
    std::swap(positives[i - 1], positives[j]);
  }
  const auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(positives.size())));
  std::vector<bool> held(records.size(), false);
  for (std::size_t k = 0; k < n_hold; ++k) held[positives[k]] = true;
  HoldoutSplit split;
  for (std::size_t i = 0; i < records.size(); ++i) (held[i] ? split.holdout : split.train).push_back(records[i]);
  if (split.train.empty()) throw UsageError("no training records left after the holdout split");
  return split;
}

double exact_match_rate(const PolicyNet& policy, const std::vector<BanditRecord>& records) {
  if (records.empty()) return 0.0;
  const std::size_t D = records.front().state.size();
  Tensor states(records.size(), D);
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::copy(records[i].state.begin(), records[i].state.end(), states.row(i).begin());
  }
  const Tensor probs = policy.probs(states);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i) hits += threshold_set(probs.row(i)) == records[i].logged ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,L_L,L_P,L_B,L_K,total,n_conf,n_unconf_plus,mc_pos,mc_neg\n";
  for (const auto& r : log) {
    out += std::to_string(r.step) + "," + fmt(r.l_l) + "," + fmt(r.l_p) + "," + fmt(r.l_b) + "," + fmt(r.l_k) +
           "," + fmt(r.total) + "," + std::to_string(r.n_conf) + "," + std::to_string(r.n_unconf_plus) + "," +
           fmt(r.mc_pos) + "," + fmt(r.mc_neg) + "\n";
  }
  return out;
}

std::string threshold_trace_to_csv(const std::vector<ThresholdTraceRow>& trace) {
  std::string out = "step,class,tau_pos_yes,tau_pos_no,tau_neg_yes,tau_neg_no,mc_pos,mc_neg\n";
  for (const auto& r : trace) {
    out += std::to_string(r.step) + "," + std::to_string(r.cls) + "," + fmt(r.pos_yes) + "," + fmt(r.pos_no) + "," +
           fmt(r.neg_yes) + "," + fmt(r.neg_no) + "," + fmt(r.mc_pos) + "," + fmt(r.mc_neg) + "\n";
  }
  return out;
}

PolicyNet train_logging_policy(const std::vector<LabeledExample>& labeled, const nn::MlpSpec& spec,
                               const TrainConfig& cfg) {
  if (labeled.empty()) throw UsageError("the labeled split is empty");
  spec.validate();
  PolicyNet pi(spec, derive_seed(cfg.seed, "logging-init"));
  nn::Optimizer opt(cfg.optimizer, pi.trainable_params());
  Rng rng(derive_seed(cfg.seed, "logging-batches"));
  Tensor states, targets;
  for (int epoch = 0; epoch < cfg.logging_epochs; ++epoch) {
    for (const auto& rows : epoch_batches(labeled.size(), cfg.batch_size, rng)) {
      labeled_batch(labeled, rows, spec.output_dim, states, targets);
      const Var loss = obj::loss_supervised(pi.forward(Var::constant(states)), targets);
      opt.zero_grad();
      nn::backward(loss);
      opt.step();
    }
  }
  return pi.clone_frozen();
}

TrainResult train_banditmatch(const PolicyNet& pi0, const std::vector<BanditRecord>& records,
                              const TrainConfig& cfg, const std::vector<LabeledExample>* labeled) {
  cfg.validate();
  if (cfg.method != Method::banditmatch && cfg.method != Method::fixmatch) {
    throw UsageError("train_banditmatch called with method " + to_string(cfg.method));
  }
  std::vector<BanditRecord> data = records;
  if (cfg.replay_labeled && labeled) {
    for (const auto& ex : *labeled) data.push_back({ex.state, ex.actions, pi0.probs(ex.state), 1});
  }
  return finetune_ssl(pi0, data, cfg);
}

TrainResult train_baseline(const PolicyNet& pi0, const std::vector<BanditRecord>& records,
                           const std::vector<LabeledExample>& full_labels, const TrainConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case Method::sl: return finetune_supervised(pi0, full_labels, cfg);
    case Method::ips:
    case Method::banditnet: return finetune_crm(pi0, records, cfg);
    case Method::fixmatch: return finetune_ssl(pi0, records, cfg);
    default: throw UsageError("train_baseline: " + to_string(cfg.method) + " is not a baseline");
  }
}

TrainResult train_method(const PolicyNet& pi0, const std::vector<BanditRecord>& records,
                         const std::vector<LabeledExample>& labeled, const std::vector<LabeledExample>& full_labels,
                         const TrainConfig& cfg) {
  if (cfg.method == Method::logging) {
    TrainResult r;
    r.policy = pi0;
    return r;
  }
  if (cfg.method == Method::banditmatch) return train_banditmatch(pi0, records, cfg, &labeled);
  return train_baseline(pi0, records, full_labels, cfg);
}

world::Agent policy_agent(const PolicyNet& policy) {
  return [&policy](const world::DialogContext&, std::span<const double> state) {
    return threshold_set(policy.probs(state));
  };
}

world::Agent bye_agent(const world::WorldSchema& schema) {
  const int bye = schema.action_index(world::kGeneralDomain, world::ActType::bye);
  return [bye](const world::DialogContext&, std::span<const double>) { return ActionSet{bye}; };
}

MetricSummary summarize_runs(const std::vector<world::AggregateMetrics>& runs) {
  auto over = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back((r.*field).mean);
    return world::mean_std(v);
  };
  MetricSummary s;
  s.turns = over(&world::AggregateMetrics::turns);
  s.match = over(&world::AggregateMetrics::match);
  s.inform_recall = over(&world::AggregateMetrics::inform_recall);
  s.inform_f1 = over(&world::AggregateMetrics::inform_f1);
  s.success_pct = over(&world::AggregateMetrics::success_pct);
  return s;
}

std::vector<world::UserGoal> evaluation_goals(const world::WorldSchema& schema, std::uint64_t seed, int run,
                                              int n_dialogs) {
  if (n_dialogs < 1) throw UsageError("n_dialogs must be >= 1");
  Rng rng(derive_seed(seed, "eval-run-" + std::to_string(run)));
  std::vector<world::UserGoal> goals;
  goals.reserve(static_cast<std::size_t>(n_dialogs));
  for (int i = 0; i < n_dialogs; ++i) goals.push_back(world::sample_goal(schema, rng));
  return goals;
}

world::AggregateMetrics evaluate_run(const world::Agent& agent, const world::WorldSchema& schema,
                                     const std::vector<world::UserGoal>& goals, const EvalConfig& cfg) {
  std::vector<world::EpisodeMetrics> episodes(goals.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, cfg.jobs));
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < goals.size(); i += jobs) {
      episodes[i] = world::run_episode(agent, schema, goals[i], cfg.episode);
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(work, j);
    for (auto& t : threads) t.join();
  }
  return world::compute_aggregate(episodes);
}

ExperimentReport evaluate(const world::Agent& agent, const world::WorldSchema& schema, const EvalConfig& cfg,
                          std::uint64_t seed, std::string method) {
  if (cfg.n_runs < 1) throw UsageError("n_runs must be >= 1");
  ExperimentReport report;
  report.method = std::move(method);
  for (int r = 0; r < cfg.n_runs; ++r) {
    report.runs.push_back(evaluate_run(agent, schema, evaluation_goals(schema, seed, r, cfg.n_dialogs), cfg));
  }
  report.summary = summarize_runs(report.runs);
  return report;
}

ExperimentReport evaluate(const PolicyNet& policy, const world::WorldSchema& schema, const EvalConfig& cfg,
                          std::uint64_t seed, std::string method) {
  if (policy.state_dim() != schema.state_dim()) {
    throw ConfigError("policy input size " + std::to_string(policy.state_dim()) + " does not match the world (" +
                      std::to_string(schema.state_dim()) + ")");
  }
  return evaluate(policy_agent(policy), schema, cfg, seed, std::move(method));
}

nn::MlpSpec policy_spec(const world::WorldSchema& schema, const PipelineConfig& cfg) {
  nn::MlpSpec spec;
  spec.input_dim = schema.state_dim();
  spec.hidden_dims = cfg.hidden_dims;
  spec.output_dim = schema.num_actions();
  spec.hidden_activation = cfg.hidden_activation;
  spec.validate();
  return spec;
}

PreparedData prepare_data(const world::WorldSchema& schema, const PipelineConfig& cfg, std::uint64_t seed) {
  PreparedData d;
  d.corpus = generate_corpus(schema, cfg.corpus_dialogs, derive_seed(seed, "corpus"), cfg.eval.episode);
  auto [labeled, pool] = split_corpus(d.corpus, {cfg.labeled_fraction, derive_seed(seed, "split")});
  d.labeled = std::move(labeled);
  d.pool = std::move(pool);
  TrainConfig lc = cfg.train;
  lc.seed = derive_seed(seed, "logging");
  d.logging_policy = train_logging_policy(d.labeled, policy_spec(schema, cfg), lc);
  d.log = log_bandit_data(d.logging_policy, d.pool);
  return d;
}

std::vector<MethodSpec> table_methods() {
  return {{Method::logging},           {Method::sl},      {Method::ips},
          {Method::ips, true},         {Method::banditnet}, {Method::banditnet, true},
          {Method::fixmatch},          {Method::banditmatch}};
}

std::vector<MethodSpec> ablation_methods() {
  std::vector<MethodSpec> out;
  for (Ablation a : {Ablation::none, Ablation::no_mc_scale, Ablation::no_fet, Ablation::no_cbl, Ablation::no_kl,
                     Ablation::none_all}) {
    out.push_back({Method::banditmatch, false, a});
  }
  return out;
}

std::vector<ExperimentReport> run_experiment(const world::WorldSchema& schema, const PipelineConfig& cfg,
                                             const std::vector<MethodSpec>& methods,
                                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw UsageError("at least one seed is required");
  std::vector<ExperimentReport> reports(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) reports[m].method = methods[m].name();

  for (std::uint64_t seed : seeds) {
    const PreparedData data = prepare_data(schema, cfg, seed);
    const auto goals = evaluation_goals(schema, seed, 0, cfg.eval.n_dialogs);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, "train");
      tc.method = methods[m].method;
      tc.kl = methods[m].kl;
      tc.ablation = methods[m].ablation;
      const TrainResult trained = train_method(data.logging_policy, data.log, data.labeled, data.corpus, tc);
      reports[m].runs.push_back(evaluate_run(policy_agent(trained.policy), schema, goals, cfg.eval));
    }
  }
  for (auto& r : reports) r.summary = summarize_runs(r.runs);
  return reports;
}

std::vector<ExperimentReport> run_ablation_grid(const world::WorldSchema& schema, const PipelineConfig& cfg,
                                                const std::vector<std::uint64_t>& seeds) {
  return run_experiment(schema, cfg, ablation_methods(), seeds);
}

std::vector<int> default_sweep_percentages() { return {5, 10, 20, 30, 40, 50, 60, 70, 80, 90}; }

std::map<std::string, std::vector<SweepPoint>> run_sl_sweep(const world::WorldSchema& schema,
                                                            const PipelineConfig& cfg,
                                                            const std::vector<int>& percentages,
                                                            const std::vector<MethodSpec>& methods,
                                                            const std::vector<std::uint64_t>& seeds) {
  std::map<std::string, std::vector<SweepPoint>> out;
  for (int p : percentages) {
    if (p <= 0 || p > 100) throw ConfigError("SL percentage " + std::to_string(p) + " outside (0, 100]");
    PipelineConfig point = cfg;
    point.labeled_fraction = p / 100.0;
    const auto reports = run_experiment(schema, point, methods, seeds);
    for (const auto& r : reports) out[r.method].push_back({p, r});
  }
  return out;
}

}  // namespace bmatch

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "banditmatch/datasets.hpp"
#include "banditmatch/dialogworld.hpp"
#include "banditmatch/fet.hpp"
#include "banditmatch/objectives.hpp"
#include "banditmatch/policy.hpp"

namespace bmatch {

enum class Method { logging, banditmatch, sl, ips, banditnet, fixmatch };
enum class Ablation { none, no_mc_scale, no_fet, no_cbl, no_kl, none_all };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
  std::uint64_t seed = 0;
  int batch_size = 64;
  int epochs = 30;
  int logging_epochs = 120;
  nn::OptimizerConfig optimizer;
  obj::LossWeights weights;
  obj::AugmentConfig aug;
  fet::FetConfig fet;
  Method method = Method::banditmatch;
  bool kl = false;  // "+ KL control" for ips / banditnet
  Ablation ablation = Ablation::none;
  double ips_clip = obj::kDefaultIpsClip;
  double banditnet_translation = obj::kDefaultTranslation;
  double fixmatch_tau = obj::kFixMatchTau;
  bool replay_labeled = false;  // append D_S to the bandit log as positives
  bool cold_start = false;      // random init instead of a copy of pi0
  bool trace_thresholds = false;
  /// Share of the logged positives held out for early stopping (0 disables
  /// it). Selection keeps the latest epoch with the best exact-match rate.
  double holdout_fraction = 0.0;
  int patience = 5;

  /// Throws ConfigError on invalid values or flag combinations.
  void validate() const;
};

/// "banditmatch", "banditmatch-no_cbl", "ips+kl", ...
std::string run_name(Method m, bool kl, Ablation a);
std::string run_name(const TrainConfig& cfg);

struct TrainLogRow {
  long step = 0;
  double l_l = 0, l_p = 0, l_b = 0, l_k = 0, total = 0;
  long n_conf = 0, n_unconf_plus = 0;
  double mc_pos = 0, mc_neg = 0;  // NaN when unavailable
};

struct ThresholdTraceRow {
  long step = 0;
  int cls = 0;
  double pos_yes = 0, pos_no = 0, neg_yes = 0, neg_no = 0;
  double mc_pos = 0, mc_neg = 0;
};

struct TrainResult {
  PolicyNet policy;
  std::vector<TrainLogRow> log;
  std::vector<ThresholdTraceRow> trace;
  int epochs_run = 0;
  int best_epoch = 0;  // 0 = the initial policy
  std::vector<double> holdout_exact_match;  // per epoch, starting with the initial policy
};

/// Positives moved out of the training log for early stopping.
struct HoldoutSplit {
  std::vector<BanditRecord> train;
  std::vector<BanditRecord> holdout;
};

HoldoutSplit split_holdout(const std::vector<BanditRecord>& records, double fraction, std::uint64_t seed);

/// Share of records whose thresholded prediction equals the logged set.
double exact_match_rate(const PolicyNet& policy, const std::vector<BanditRecord>& records);

std::string train_log_to_csv(const std::vector<TrainLogRow>& log);
std::string threshold_trace_to_csv(const std::vector<ThresholdTraceRow>& trace);

/// Plain per-class BCE on D_S, no augmentation; returned frozen.
PolicyNet train_logging_policy(const std::vector<LabeledExample>& labeled, const nn::MlpSpec& spec,
                               const TrainConfig& cfg);

/// Fine-tunes a copy of pi0 on the bandit log with L_L + L_P + L_B + L_K
/// (minus whatever the ablation removes).
TrainResult train_banditmatch(const PolicyNet& pi0, const std::vector<BanditRecord>& records,
                              const TrainConfig& cfg, const std::vector<LabeledExample>* labeled = nullptr);

/// ips / banditnet / fixmatch on the bandit log; sl on `full_labels`.
TrainResult train_baseline(const PolicyNet& pi0, const std::vector<BanditRecord>& records,
                           const std::vector<LabeledExample>& full_labels, const TrainConfig& cfg);

/// Dispatches on cfg.method (logging returns pi0 unchanged).
TrainResult train_method(const PolicyNet& pi0, const std::vector<BanditRecord>& records,
                         const std::vector<LabeledExample>& labeled, const std::vector<LabeledExample>& full_labels,
                         const TrainConfig& cfg);

world::Agent policy_agent(const PolicyNet& policy);
world::Agent bye_agent(const world::WorldSchema& schema);

struct MetricSummary {
  world::MeanStd turns, match, inform_recall, inform_f1, success_pct;
  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

/// Metrics per run plus mean ± population std over the runs.
struct ExperimentReport {
  std::string method;
  std::vector<world::AggregateMetrics> runs;
  MetricSummary summary;
  std::string config_echo;
  std::string train_log_path;
};

MetricSummary summarize_runs(const std::vector<world::AggregateMetrics>& runs);

struct EvalConfig {
  int n_dialogs = 500;
  int n_runs = 5;
  world::EpisodeConfig episode;
  int jobs = 1;
};

/// Goals of evaluation run r for a master seed; shared by every policy
/// evaluated under that seed.
std::vector<world::UserGoal> evaluation_goals(const world::WorldSchema& schema, std::uint64_t seed, int run,
                                              int n_dialogs);

world::AggregateMetrics evaluate_run(const world::Agent& agent, const world::WorldSchema& schema,
                                     const std::vector<world::UserGoal>& goals, const EvalConfig& cfg);

/// n_runs independent evaluation sets of n_dialogs episodes each.
ExperimentReport evaluate(const world::Agent& agent, const world::WorldSchema& schema, const EvalConfig& cfg,
                          std::uint64_t seed, std::string method = "policy");
ExperimentReport evaluate(const PolicyNet& policy, const world::WorldSchema& schema, const EvalConfig& cfg,
                          std::uint64_t seed, std::string method = "policy");

struct PipelineConfig {
  int corpus_dialogs = 1000;
  double labeled_fraction = 0.1;
  std::vector<int> hidden_dims{128, 128};
  nn::Activation hidden_activation = nn::Activation::relu;
  TrainConfig train;
  EvalConfig eval;
};

/// Corpus, split, logging policy and bandit log for one master seed.
struct PreparedData {
  std::vector<LabeledExample> corpus;
  std::vector<LabeledExample> labeled;  // D_S
  std::vector<LabeledExample> pool;     // D_B
  PolicyNet logging_policy;
  std::vector<BanditRecord> log;
};

nn::MlpSpec policy_spec(const world::WorldSchema& schema, const PipelineConfig& cfg);
PreparedData prepare_data(const world::WorldSchema& schema, const PipelineConfig& cfg, std::uint64_t seed);

struct MethodSpec {
  Method method = Method::banditmatch;
  bool kl = false;
  Ablation ablation = Ablation::none;
  std::string name() const { return run_name(method, kl, ablation); }
};

/// Logging policy, SL skyline, IPS(+KL), BanditNet(+KL), FixMatch, BanditMatch.
std::vector<MethodSpec> table_methods();
/// Full BanditMatch followed by the five ablations.
std::vector<MethodSpec> ablation_methods();

/// Each seed is one run: prepare data, train every method, evaluate it on
/// that seed's shared goals (one evaluation set of eval.n_dialogs). Reports
/// come back in the order of `methods`.
std::vector<ExperimentReport> run_experiment(const world::WorldSchema& schema, const PipelineConfig& cfg,
                                             const std::vector<MethodSpec>& methods,
                                             const std::vector<std::uint64_t>& seeds);

std::vector<ExperimentReport> run_ablation_grid(const world::WorldSchema& schema, const PipelineConfig& cfg,
                                                const std::vector<std::uint64_t>& seeds);

std::vector<int> default_sweep_percentages();

struct SweepPoint {
  int percent = 0;
  ExperimentReport report;
};

/// Per method name, one report per SL percentage.
std::map<std::string, std::vector<SweepPoint>> run_sl_sweep(const world::WorldSchema& schema,
                                                            const PipelineConfig& cfg,
                                                            const std::vector<int>& percentages,
                                                            const std::vector<MethodSpec>& methods,
                                                            const std::vector<std::uint64_t>& seeds);

// Report files (report.cpp). Metric columns follow the order Turn, Match,
// Inform Rec, Inform F1, Success; values are written with 17 significant
// digits so they parse back exactly.
struct ReportRow {
  std::string method;
  std::size_t runs = 0;
  MetricSummary summary;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

ReportRow report_row(const ExperimentReport& report);
std::string report_csv_header();
std::string reports_to_csv(const std::vector<ExperimentReport>& reports);
std::vector<ReportRow> reports_from_csv(const std::string& text);
std::string sweep_to_csv(const std::vector<SweepPoint>& points);
std::string report_to_json(const std::vector<ExperimentReport>& reports);
/// Table-style text rendering ("76.7 ± 2.83" cells).
std::string reports_to_table(const std::vector<ExperimentReport>& reports);

}  // namespace bmatch

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "banditmatch/dialogworld.hpp"
#include "banditmatch/policy.hpp"

namespace bmatch {

/// Expert-labelled turn.
struct LabeledExample {
  std::vector<double> state;
  ActionSet actions;
  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// One logged interaction: state, the logging policy's decision, its
/// per-class probabilities at logging time, and binary user feedback.
struct BanditRecord {
  std::vector<double> state;
  ActionSet logged;
  std::vector<double> rho;
  int delta = 0;
  friend bool operator==(const BanditRecord&, const BanditRecord&) = default;
};

struct SplitConfig {
  double labeled_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// One example per expert turn across n_dialogs goal-driven episodes.
std::vector<LabeledExample> generate_corpus(const world::WorldSchema& schema, int n_dialogs,
                                            std::uint64_t seed, const world::EpisodeConfig& cfg = {});

/// Deterministic shuffle, then the first round(p * n) examples are labelled
/// (D_S) and the rest form the bandit pool (D_B).
std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> split_corpus(
    const std::vector<LabeledExample>& corpus, const SplitConfig& cfg);

struct Prediction {
  ActionSet actions;
  std::vector<double> propensities;
};

Prediction predict_set(const PolicyNet& policy, std::span<const double> state);

/// 1 iff the predicted set equals the ground truth exactly.
int simulate_feedback(const ActionSet& predicted, const ActionSet& truth);

std::vector<BanditRecord> log_bandit_data(const PolicyNet& logging_policy,
                                          const std::vector<LabeledExample>& pool);

inline constexpr const char* kJsonlVersion = "v1";

std::string corpus_to_jsonl(const std::vector<LabeledExample>& corpus);
std::vector<LabeledExample> corpus_from_jsonl(const std::string& text);
std::string bandit_to_jsonl(const std::vector<BanditRecord>& records);
std::vector<BanditRecord> bandit_from_jsonl(const std::string& text);

void write_corpus_jsonl(const std::string& path, const std::vector<LabeledExample>& corpus);
std::vector<LabeledExample> read_corpus_jsonl(const std::string& path);
void write_bandit_jsonl(const std::string& path, const std::vector<BanditRecord>& records);
std::vector<BanditRecord> read_bandit_jsonl(const std::string& path);

}  // namespace bmatch

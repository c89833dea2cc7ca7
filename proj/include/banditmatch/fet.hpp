#pragma once

#include <span>
#include <vector>

#include "banditmatch/nncore.hpp"

namespace bmatch::fet {

struct FetConfig {
  double fallback_yes = 0.95;
  double fallback_no = 0.05;
  double ema_decay = 0.9;
  double mc_epsilon = 1e-3;
};

/// tau_pos^Y / tau_pos^N with per-class validity (false where no correctly
/// predicted example contains, resp. excludes, the class).
struct PositiveBaselines {
  std::vector<double> yes;
  std::vector<double> no;
  std::vector<bool> valid_yes;
  std::vector<bool> valid_no;
};

struct CorrectnessStats {
  double mc_pos = 0.0;  // clamped into [0, 1 - eps]
  double mc_neg = 0.0;
  double raw_mc_pos = 0.0;
  double raw_mc_neg = 0.0;
  std::size_t n_correct_positives = 0;
  std::size_t n_negatives = 0;
  bool pos_available = false;
  bool neg_available = false;
};

struct ThresholdSet {
  std::vector<double> pos_yes, pos_no;
  std::vector<double> neg_yes, neg_no;
  std::vector<bool> valid_yes, valid_no;
  double scale = 1.0;
};

/// Positive rows (delta = 1) whose thresholded prediction reproduces the
/// logged set exactly (D_T).
std::vector<std::size_t> correct_positive_set(const nn::Tensor& probs, std::span<const ActionSet> logged,
                                              std::span<const int> delta);

/// Per-class mean probability over D_T rows that contain (yes) or exclude
/// (no) the class.
PositiveBaselines positive_thresholds(const nn::Tensor& probs, std::span<const ActionSet> logged,
                                      std::span<const std::size_t> correct_rows);

/// 1/|A| for members of a non-empty set, 0 otherwise.
double attribution_pos(int action, const ActionSet& set);
/// rho_j / sum_{k in A} rho_k for members, 0 otherwise.
double attribution_neg(int action, const ActionSet& set, std::span<const double> rho);

/// Importance-weighted correctness on the correct positives (mc_pos) and on
/// the given negative rows (mc_neg). Rows with an empty logged set carry no
/// attribution and are skipped.
CorrectnessStats model_correctness(const nn::Tensor& probs, std::span<const ActionSet> logged,
                                   const nn::Tensor& rho, std::span<const std::size_t> correct_rows,
                                   std::span<const std::size_t> negative_rows, double mc_epsilon = 1e-3);

/// Scales the baselines by (1 - mc_neg) / (1 - mc_pos) and clamps
/// tau_neg^Y into [0.5, 1], tau_neg^N into [0, 0.5]. Invalid classes get
/// the fallback thresholds; unavailable statistics (or scale disabled) give
/// scale 1.
ThresholdSet negative_thresholds(const PositiveBaselines& base, const CorrectnessStats& stats,
                                 const FetConfig& cfg, bool scale_enabled = true);

/// Fallback thresholds on every class.
ThresholdSet fixed_thresholds(std::size_t num_classes, double yes, double no);

/// Conf[i,c] = 1 iff delta_i = 0 and probs[i,c] lies outside [no_c, yes_c].
nn::Tensor confidence_mask(const nn::Tensor& weak_probs, std::span<const int> delta,
                           std::span<const double> yes, std::span<const double> no);

/// Running state across training steps: EMA of the positive baselines and
/// of mc_pos; mc_neg is taken from the current batch.
class ThresholdTracker {
 public:
  ThresholdTracker(std::size_t num_classes, FetConfig cfg);

  ThresholdSet update(const PositiveBaselines& batch_base, const CorrectnessStats& batch_stats,
                      bool scale_enabled = true);

  const CorrectnessStats& last_stats() const { return last_stats_; }

 private:
  FetConfig cfg_;
  std::vector<double> yes_, no_;
  std::vector<bool> has_yes_, has_no_;
  double mc_pos_ = 0.0;
  bool has_mc_pos_ = false;
  CorrectnessStats last_stats_;
};

}  // namespace bmatch::fet

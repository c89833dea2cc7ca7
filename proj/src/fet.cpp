#include "banditmatch/fet.hpp"

#include <algorithm>

#include "banditmatch/policy.hpp"

namespace bmatch::fet {

std::vector<std::size_t> correct_positive_set(const nn::Tensor& probs, std::span<const ActionSet> logged,
                                              std::span<const int> delta) {
  if (logged.size() != probs.rows() || delta.size() != probs.rows()) {
    throw UsageError("correct_positive_set: row counts differ");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (delta[i] == 1 && threshold_set(probs.row(i)) == logged[i]) out.push_back(i);
  }
  return out;
}

PositiveBaselines positive_thresholds(const nn::Tensor& probs, std::span<const ActionSet> logged,
                                      std::span<const std::size_t> correct_rows) {
  const std::size_t C = probs.cols();
  std::vector<double> sum_yes(C, 0.0), sum_no(C, 0.0);
  std::vector<std::size_t> n_yes(C, 0), n_no(C, 0);
  for (std::size_t i : correct_rows) {
    const auto row = probs.row(i);
    for (std::size_t c = 0; c < C; ++c) {
      if (contains(logged[i], static_cast<int>(c))) {
        sum_yes[c] += row[c];
        ++n_yes[c];
      } else {
        sum_no[c] += row[c];
        ++n_no[c];
      }
    }
  }
  PositiveBaselines b;
  b.yes.assign(C, 0.0);
  b.no.assign(C, 0.0);
  b.valid_yes.assign(C, false);
  b.valid_no.assign(C, false);
  for (std::size_t c = 0; c < C; ++c) {
    if (n_yes[c] > 0) {
      b.yes[c] = sum_yes[c] / static_cast<double>(n_yes[c]);
      b.valid_yes[c] = true;
    }
    if (n_no[c] > 0) {
      b.no[c] = sum_no[c] / static_cast<double>(n_no[c]);
      b.valid_no[c] = true;
    }
  }
  return b;
}

double attribution_pos(int action, const ActionSet& set) {
  if (set.empty() || !contains(set, action)) return 0.0;
  return 1.0 / static_cast<double>(set.size());
}

double attribution_neg(int action, const ActionSet& set, std::span<const double> rho) {
  if (set.empty() || !contains(set, action)) return 0.0;
  double total = 0.0;
  for (int k : set) total += rho[static_cast<std::size_t>(k)];
  if (total <= 0.0) return 0.0;
  return rho[static_cast<std::size_t>(action)] / total;
}

CorrectnessStats model_correctness(const nn::Tensor& probs, std::span<const ActionSet> logged, const nn::Tensor& rho,
                                   std::span<const std::size_t> correct_rows,
                                   std::span<const std::size_t> negative_rows, double mc_epsilon) {
  CorrectnessStats s;
  double acc = 0.0;
  for (std::size_t i : correct_rows) {
    if (logged[i].empty()) continue;
    const auto p = probs.row(i);
    const auto r = rho.row(i);
    double term = 0.0;
    for (int a : logged[i]) {
      const auto j = static_cast<std::size_t>(a);
      term += attribution_pos(a, logged[i]) * p[j] / r[j];
    }
    acc += term;
    ++s.n_correct_positives;
  }
  if (s.n_correct_positives > 0) {
    s.raw_mc_pos = acc / static_cast<double>(s.n_correct_positives);
    s.pos_available = true;
  }

  acc = 0.0;
  for (std::size_t i : negative_rows) {
    if (logged[i].empty()) continue;
    const auto p = probs.row(i);
    const auto r = rho.row(i);
    double term = 0.0;
    for (int a : logged[i]) {
      const auto j = static_cast<std::size_t>(a);
      term += attribution_neg(a, logged[i], r) * (1.0 - p[j]) / (1.0 - r[j]);
    }
    acc += term;
    ++s.n_negatives;
  }
  if (s.n_negatives > 0) {
    s.raw_mc_neg = acc / static_cast<double>(s.n_negatives);
    s.neg_available = true;
  }
  const double hi = 1.0 - mc_epsilon;
  s.mc_pos = std::clamp(s.raw_mc_pos, 0.0, hi);
  s.mc_neg = std::clamp(s.raw_mc_neg, 0.0, hi);
  return s;
}

ThresholdSet negative_thresholds(const PositiveBaselines& base, const CorrectnessStats& stats, const FetConfig& cfg,
                                 bool scale_enabled) {
  const std::size_t C = base.yes.size();
  ThresholdSet t;
  t.pos_yes = base.yes;
  t.pos_no = base.no;
  t.valid_yes = base.valid_yes;
  t.valid_no = base.valid_no;
  t.neg_yes.assign(C, cfg.fallback_yes);
  t.neg_no.assign(C, cfg.fallback_no);
  if (scale_enabled && stats.pos_available && stats.neg_available) {
    t.scale = (1.0 - stats.mc_neg) / (1.0 - stats.mc_pos);
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (base.valid_yes[c]) t.neg_yes[c] = std::clamp(base.yes[c] * t.scale, 0.5, 1.0);
    // 1 - (1 - no) * scale, arranged to be exact when scale == 1.
    if (base.valid_no[c]) t.neg_no[c] = std::clamp(base.no[c] - (1.0 - base.no[c]) * (t.scale - 1.0), 0.0, 0.5);
  }
  return t;
}

ThresholdSet fixed_thresholds(std::size_t num_classes, double yes, double no) {
  ThresholdSet t;
  t.pos_yes.assign(num_classes, yes);
  t.pos_no.assign(num_classes, no);
  t.neg_yes.assign(num_classes, yes);
  t.neg_no.assign(num_classes, no);
  t.valid_yes.assign(num_classes, false);
  t.valid_no.assign(num_classes, false);
  return t;
}

nn::Tensor confidence_mask(const nn::Tensor& weak_probs, std::span<const int> delta, std::span<const double> yes,
                           std::span<const double> no) {
  if (delta.size() != weak_probs.rows() || yes.size() != weak_probs.cols() || no.size() != weak_probs.cols()) {
    throw UsageError("confidence_mask: shape mismatch");
  }
  nn::Tensor conf(weak_probs.rows(), weak_probs.cols());
  for (std::size_t i = 0; i < weak_probs.rows(); ++i) {
    if (delta[i] != 0) continue;
    for (std::size_t c = 0; c < weak_probs.cols(); ++c) {
      const double p = weak_probs(i, c);
      if (p > yes[c] || p < no[c]) conf(i, c) = 1.0;
    }
  }
  return conf;
}

ThresholdTracker::ThresholdTracker(std::size_t num_classes, FetConfig cfg)
    : cfg_(cfg),
      yes_(num_classes, 0.0),
      no_(num_classes, 0.0),
      has_yes_(num_classes, false),
      has_no_(num_classes, false) {}

ThresholdSet ThresholdTracker::update(const PositiveBaselines& batch_base, const CorrectnessStats& batch_stats,
                                      bool scale_enabled) {
  const double d = cfg_.ema_decay;
  for (std::size_t c = 0; c < yes_.size(); ++c) {
    if (batch_base.valid_yes[c]) {
      yes_[c] = has_yes_[c] ? d * yes_[c] + (1.0 - d) * batch_base.yes[c] : batch_base.yes[c];
      has_yes_[c] = true;
    }
    if (batch_base.valid_no[c]) {
      no_[c] = has_no_[c] ? d * no_[c] + (1.0 - d) * batch_base.no[c] : batch_base.no[c];
      has_no_[c] = true;
    }
  }
  if (batch_stats.pos_available) {
    mc_pos_ = has_mc_pos_ ? d * mc_pos_ + (1.0 - d) * batch_stats.mc_pos : batch_stats.mc_pos;
    has_mc_pos_ = true;
  }
  PositiveBaselines smoothed{yes_, no_, has_yes_, has_no_};
  CorrectnessStats stats = batch_stats;
  stats.mc_pos = mc_pos_;
  stats.pos_available = has_mc_pos_;
  last_stats_ = stats;
  return negative_thresholds(smoothed, stats, cfg_, scale_enabled);
}

}  // namespace bmatch::fet

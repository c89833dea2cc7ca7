#pragma once

#include <span>
#include <vector>

#include "banditmatch/datasets.hpp"
#include "banditmatch/nncore.hpp"

namespace bmatch::obj {

struct AugmentConfig {
  double alpha_weak = 0.2;
  double alpha_strong = 2.0;
};

/// Column-aligned view of a set of bandit records.
struct Batch {
  nn::Tensor states;       // B x D, unaugmented
  std::vector<ActionSet> logged;
  nn::Tensor logged_mask;  // B x C indicator of the logged sets
  nn::Tensor rho;          // B x C
  std::vector<int> delta;

  std::size_t size() const { return delta.size(); }
  std::size_t num_positives() const;

  static Batch from_records(std::span<const BanditRecord> records, int num_actions);
  static Batch from_records(const std::vector<BanditRecord>& records, std::span<const std::size_t> rows,
                            int num_actions);
};

/// max(b, 1 - b) with b ~ Beta(alpha, alpha).
double sample_mix_lambda(double alpha, Rng& rng);

/// lambda * a + (1 - lambda) * b.
std::vector<double> mixup(std::span<const double> a, std::span<const double> b, double lambda);
std::pair<std::vector<double>, double> mixup(std::span<const double> a, std::span<const double> b, double alpha,
                                             Rng& rng);

/// Mixes every row with a uniformly drawn other row of the batch. A batch of
/// one row is returned unchanged (lambda = 1).
nn::Tensor augment_batch(const nn::Tensor& states, double alpha, Rng& rng, std::vector<double>* lambdas = nullptr);

// Every loss below takes the policy's class probabilities as a graph
// variable (B x C) so callers pick the forward pass (weak, strong or plain
// states). Empty masks give a constant 0 with no gradient path.

/// Mean over rows with weight 1 of the per-class BCE summed over classes.
nn::Var bce_rows(const nn::Var& probs, const nn::Tensor& targets, std::span<const double> row_weights);

/// Mean over all rows of summed per-class BCE (plain supervised learning).
nn::Var loss_supervised(const nn::Var& probs, const nn::Tensor& targets);

/// L_L: supervised BCE on the positive rows against the logged sets.
nn::Var loss_labeled(const nn::Var& weak_probs, const Batch& batch);

/// q_hat = 1(p > 0.5).
nn::Tensor pseudo_labels(const nn::Tensor& weak_probs);

/// L_P: BCE against q_hat on confident entries, normalised by their count.
nn::Var loss_pseudo(const nn::Var& strong_probs, const nn::Tensor& conf, const nn::Tensor& qhat);

/// Logged classes of positive rows, plus logged classes of negative rows
/// that are not confident.
nn::Tensor unconf_plus_mask(std::span<const int> delta, const nn::Tensor& conf, std::span<const ActionSet> logged);

/// L_B: pseudoinverse estimate of the negative expected feedback,
/// -sum_i delta_i (1 + sum_c U[i,c] (p/rho - 1)) / sum U.
nn::Var loss_bandit(const nn::Var& probs, const Batch& batch, const nn::Tensor& unconf_plus);

/// L_K: mean over rows of the per-class Bernoulli KL(p || ref).
nn::Var loss_kl(const nn::Var& probs, const nn::Tensor& ref_probs);

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_b = 1.0;
  double lambda_k = 1.0;
};

nn::Var total_loss(const nn::Var& l_l, const nn::Var& l_p, const nn::Var& l_b, const nn::Var& l_k,
                   const LossWeights& w);

inline constexpr double kDefaultIpsClip = 100.0;
inline constexpr double kDefaultTranslation = 0.9;

/// Per-row joint importance weight of the logged set decision:
/// prod_{c in A} p/rho * prod_{c not in A} (1-p)/(1-rho), as a B x 1 variable.
nn::Var set_importance_weights(const nn::Var& probs, const Batch& batch);

/// -mean delta_i * min(M, w_i).
nn::Var loss_ips(const nn::Var& probs, const Batch& batch, double clip = kDefaultIpsClip);
/// -mean (delta_i - lambda_tr) * min(M, w_i).
nn::Var loss_banditnet(const nn::Var& probs, const Batch& batch, double lambda_tr = kDefaultTranslation,
                       double clip = kDefaultIpsClip);

inline constexpr double kFixMatchTau = 0.95;

/// Conf[i,c] = 1 iff delta_i = 0 and (p > tau or p < 1 - tau).
nn::Tensor fixmatch_mask(const nn::Tensor& weak_probs, std::span<const int> delta, double tau = kFixMatchTau);

/// Value estimate implied by L_B: sum_i delta_i (1 + sum_c U (p/rho - 1)) / B.
double pi_value_estimate(const nn::Tensor& probs, const Batch& batch, const nn::Tensor& unconf_plus);

}  // namespace bmatch::obj

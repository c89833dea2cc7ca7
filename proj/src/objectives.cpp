#include "banditmatch/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace bmatch::obj {

using nn::Tensor;
using nn::Var;

namespace {

double clamp_prob(double p) { return std::clamp(p, nn::kProbFloor, 1.0 - nn::kProbFloor); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw UsageError(std::string(what) + ": shape mismatch");
}

Var zero_loss() { return Var::constant(Tensor::scalar(0.0)); }

}  // namespace

std::size_t Batch::num_positives() const {
  return static_cast<std::size_t>(std::count(delta.begin(), delta.end(), 1));
}

Batch Batch::from_records(std::span<const BanditRecord> records, int num_actions) {
  std::vector<std::size_t> rows(records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  Batch b;
  const std::size_t C = static_cast<std::size_t>(num_actions);
  const std::size_t D = records.empty() ? 0 : records.front().state.size();
  b.states = Tensor(records.size(), D);
  b.logged_mask = Tensor(records.size(), C);
  b.rho = Tensor(records.size(), C);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const BanditRecord& r = records[i];
    if (r.state.size() != D || r.rho.size() != C) throw UsageError("batch: inconsistent record dimensions");
    std::copy(r.state.begin(), r.state.end(), b.states.row(i).begin());
    for (std::size_t c = 0; c < C; ++c) b.rho(i, c) = clamp_prob(r.rho[c]);
    for (int a : r.logged) {
      if (a < 0 || static_cast<std::size_t>(a) >= C) throw UsageError("batch: action index out of range");
      b.logged_mask(i, static_cast<std::size_t>(a)) = 1.0;
    }
    b.logged.push_back(r.logged);
    b.delta.push_back(r.delta);
  }
  return b;
}

Batch Batch::from_records(const std::vector<BanditRecord>& records, std::span<const std::size_t> rows,
                          int num_actions) {
  std::vector<BanditRecord> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) picked.push_back(records.at(r));
  return from_records(std::span<const BanditRecord>(picked), num_actions);
}

double sample_mix_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw UsageError("mix-up alpha must be positive");
  const double b = sample_beta(alpha, alpha, rng);
  return std::max(b, 1.0 - b);
}

std::vector<double> mixup(std::span<const double> a, std::span<const double> b, double lambda) {
  if (a.size() != b.size()) throw UsageError("mixup: dimension mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  return out;
}

std::pair<std::vector<double>, double> mixup(std::span<const double> a, std::span<const double> b, double alpha,
                                             Rng& rng) {
  const double lambda = sample_mix_lambda(alpha, rng);
  return {mixup(a, b, lambda), lambda};
}

Tensor augment_batch(const Tensor& states, double alpha, Rng& rng, std::vector<double>* lambdas) {
  if (!(alpha > 0.0)) throw UsageError("mix-up alpha must be positive");
  const std::size_t B = states.rows();
  if (lambdas) lambdas->assign(B, 1.0);
  if (B < 2) return states;
  Tensor out(B, states.cols());
  for (std::size_t i = 0; i < B; ++i) {
    std::size_t j = uniform_index(rng, B - 1);
    if (j >= i) ++j;
    const double lambda = sample_mix_lambda(alpha, rng);
    if (lambdas) (*lambdas)[i] = lambda;
    auto dst = out.row(i);
    const auto a = states.row(i);
    const auto b = states.row(j);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = lambda * a[k] + (1.0 - lambda) * b[k];
  }
  return out;
}

Var bce_rows(const Var& probs, const Tensor& targets, std::span<const double> row_weights) {
  const Tensor& p = probs.value();
  require_same_shape(p, targets, "bce");
  if (row_weights.size() != p.rows()) throw UsageError("bce: row weight count mismatch");
  double n = 0.0;
  for (double w : row_weights) n += w;
  if (n == 0.0) return zero_loss();
  Tensor pos(p.rows(), p.cols()), neg(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t c = 0; c < p.cols(); ++c) {
      pos(i, c) = row_weights[i] * targets(i, c);
      neg(i, c) = row_weights[i] * (1.0 - targets(i, c));
    }
  }
  Var ll = nn::mul_const(nn::log(probs), pos) + nn::mul_const(nn::log(nn::one_minus(probs)), neg);
  return nn::sum(ll) * (-1.0 / n);
}

Var loss_supervised(const Var& probs, const Tensor& targets) {
  std::vector<double> w(probs.value().rows(), 1.0);
  return bce_rows(probs, targets, w);
}

Var loss_labeled(const Var& weak_probs, const Batch& batch) {
  std::vector<double> w(batch.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = batch.delta[i] == 1 ? 1.0 : 0.0;
  return bce_rows(weak_probs, batch.logged_mask, w);
}

Tensor pseudo_labels(const Tensor& weak_probs) {
  Tensor q(weak_probs.rows(), weak_probs.cols());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = weak_probs[i] > 0.5 ? 1.0 : 0.0;
  return q;
}

Var loss_pseudo(const Var& strong_probs, const Tensor& conf, const Tensor& qhat) {
  require_same_shape(strong_probs.value(), conf, "loss_pseudo");
  require_same_shape(conf, qhat, "loss_pseudo");
  double n = 0.0;
  for (double v : conf.data()) n += v;
  if (n == 0.0) return zero_loss();
  Tensor pos(conf.rows(), conf.cols()), neg(conf.rows(), conf.cols());
  for (std::size_t i = 0; i < conf.size(); ++i) {
    pos[i] = conf[i] * qhat[i];
    neg[i] = conf[i] * (1.0 - qhat[i]);
  }
  Var ll = nn::mul_const(nn::log(strong_probs), pos) + nn::mul_const(nn::log(nn::one_minus(strong_probs)), neg);
  return nn::sum(ll) * (-1.0 / n);
}

Tensor unconf_plus_mask(std::span<const int> delta, const Tensor& conf, std::span<const ActionSet> logged) {
  if (delta.size() != conf.rows() || logged.size() != conf.rows()) {
    throw UsageError("unconf_plus_mask: row counts differ");
  }
  Tensor u(conf.rows(), conf.cols());
  for (std::size_t i = 0; i < conf.rows(); ++i) {
    for (int a : logged[i]) {
      const auto c = static_cast<std::size_t>(a);
      if (c >= conf.cols()) throw UsageError("unconf_plus_mask: action index out of range");
      if (delta[i] == 1 || conf(i, c) == 0.0) u(i, c) = 1.0;
    }
  }
  return u;
}

Var loss_bandit(const Var& probs, const Batch& batch, const Tensor& unconf_plus) {
  const Tensor& p = probs.value();
  require_same_shape(p, unconf_plus, "loss_bandit");
  require_same_shape(p, batch.rho, "loss_bandit");
  double denom = 0.0;
  for (double v : unconf_plus.data()) denom += v;
  if (denom == 0.0 || batch.num_positives() == 0) return zero_loss();

  // Numerator = sum_i delta_i (1 - sum_c U) + sum_{i,c} delta_i U p / rho.
  Tensor coef(p.rows(), p.cols());
  double constant = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (batch.delta[i] != 1) continue;
    double row_mask = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      coef(i, c) = unconf_plus(i, c) / batch.rho(i, c);
      row_mask += unconf_plus(i, c);
    }
    constant += 1.0 - row_mask;
  }
  Var numerator = nn::sum(nn::mul_const(probs, coef)) + constant;
  return numerator * (-1.0 / denom);
}

double pi_value_estimate(const Tensor& probs, const Batch& batch, const Tensor& unconf_plus) {
  if (batch.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (batch.delta[i] != 1) continue;
    double v = 1.0;
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      if (unconf_plus(i, c) != 0.0) v += unconf_plus(i, c) * (probs(i, c) / batch.rho(i, c) - 1.0);
    }
    total += v;
  }
  return total / static_cast<double>(batch.size());
}

Var loss_kl(const Var& probs, const Tensor& ref_probs) {
  require_same_shape(probs.value(), ref_probs, "loss_kl");
  const std::size_t B = ref_probs.rows();
  if (B == 0) return zero_loss();
  Tensor log_q(ref_probs.rows(), ref_probs.cols()), log_1mq(ref_probs.rows(), ref_probs.cols());
  for (std::size_t i = 0; i < ref_probs.size(); ++i) {
    const double q = clamp_prob(ref_probs[i]);
    log_q[i] = std::log(q);
    log_1mq[i] = std::log(1.0 - q);
  }
  Var one_m = nn::one_minus(probs);
  Var kl = probs * nn::log(probs) + one_m * nn::log(one_m) - nn::mul_const(probs, log_q) -
           nn::mul_const(one_m, log_1mq);
  return nn::sum(kl) * (1.0 / static_cast<double>(B));
}

Var total_loss(const Var& l_l, const Var& l_p, const Var& l_b, const Var& l_k, const LossWeights& w) {
  return l_l + l_p * w.lambda_p + l_b * w.lambda_b + l_k * w.lambda_k;
}

Var set_importance_weights(const Var& probs, const Batch& batch) {
  const Tensor& p = probs.value();
  require_same_shape(p, batch.logged_mask, "importance weights");
  const Tensor& m = batch.logged_mask;
  Tensor inv(p.rows(), p.cols());
  Tensor log_rho(p.rows(), 1);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      const double r = batch.rho(i, c);
      inv(i, c) = 1.0 - m(i, c);
      acc += m(i, c) != 0.0 ? std::log(r) : std::log(1.0 - r);
    }
    log_rho(i, 0) = -acc;
  }
  Var log_pi = nn::mul_const(nn::log(probs), m) + nn::mul_const(nn::log(nn::one_minus(probs)), inv);
  return nn::exp(nn::row_sum(log_pi) + Var::constant(log_rho));
}

namespace {

Var clipped_weighted_mean(const Var& probs, const Batch& batch, std::span<const double> coef, double clip) {
  if (batch.size() == 0) return zero_loss();
  bool any = false;
  for (double c : coef) any = any || c != 0.0;
  if (!any) return zero_loss();
  Var w = nn::min_const(set_importance_weights(probs, batch), clip);
  Tensor k(coef.size(), 1);
  for (std::size_t i = 0; i < coef.size(); ++i) k(i, 0) = coef[i];
  return nn::sum(nn::mul_const(w, k)) * (-1.0 / static_cast<double>(batch.size()));
}

}  // namespace

Var loss_ips(const Var& probs, const Batch& batch, double clip) {
  std::vector<double> coef(batch.size());
  for (std::size_t i = 0; i < coef.size(); ++i) coef[i] = static_cast<double>(batch.delta[i]);
  return clipped_weighted_mean(probs, batch, coef, clip);
}

Var loss_banditnet(const Var& probs, const Batch& batch, double lambda_tr, double clip) {
  std::vector<double> coef(batch.size());
  for (std::size_t i = 0; i < coef.size(); ++i) coef[i] = static_cast<double>(batch.delta[i]) - lambda_tr;
  return clipped_weighted_mean(probs, batch, coef, clip);
}

Tensor fixmatch_mask(const Tensor& weak_probs, std::span<const int> delta, double tau) {
  if (delta.size() != weak_probs.rows()) throw UsageError("fixmatch_mask: row count mismatch");
  Tensor conf(weak_probs.rows(), weak_probs.cols());
  const double lo = 1.0 - tau;
  for (std::size_t i = 0; i < weak_probs.rows(); ++i) {
    if (delta[i] != 0) continue;
    for (std::size_t c = 0; c < weak_probs.cols(); ++c) {
      const double p = weak_probs(i, c);
      if (p > tau || p < lo) conf(i, c) = 1.0;
    }
  }
  return conf;
}

}  // namespace bmatch::obj

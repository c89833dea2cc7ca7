#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "banditmatch/fet.hpp"
#include "banditmatch/objectives.hpp"

using namespace bmatch;
using namespace bmatch::obj;
using nn::Tensor;
using nn::Var;

namespace {

Var probs_var(const std::vector<std::vector<double>>& rows) { return Var::constant(Tensor::from_rows(rows)); }

BanditRecord record(std::vector<double> state, ActionSet logged, std::vector<double> rho, int delta) {
  return {std::move(state), std::move(logged), std::move(rho), delta};
}

struct Toy {
  nn::Mlp net;
  Batch batch;
  Tensor ref;
};

// D = 6, C = 4, 8 records with random logged sets and propensities.
Toy toy(std::uint64_t seed) {
  Rng rng(seed);
  const int D = 6, C = 4;
  Toy t{nn::Mlp({D, {5}, C, nn::Activation::tanh}, seed), {}, {}};
  std::vector<BanditRecord> recs;
  for (int i = 0; i < 8; ++i) {
    BanditRecord r;
    for (int d = 0; d < D; ++d) r.state.push_back(2.0 * uniform01(rng) - 1.0);
    for (int c = 0; c < C; ++c) {
      r.rho.push_back(0.1 + 0.8 * uniform01(rng));
      if (r.rho.back() > 0.5) r.logged.push_back(c);
    }
    r.delta = i % 2;
    recs.push_back(std::move(r));
  }
  t.batch = Batch::from_records(recs, C);
  t.ref = nn::Mlp({D, {5}, C, nn::Activation::tanh}, seed + 100).probs(t.batch.states);
  return t;
}

}  // namespace

TEST_CASE("mix coefficient is at least one half") {
  Rng rng(1);
  for (double alpha : {0.05, 0.2, 1.0, 2.0, 10.0}) {
    double lo = 1.0;
    for (int i = 0; i < 10000; ++i) lo = std::min(lo, sample_mix_lambda(alpha, rng));
    CHECK(lo >= 0.5);
  }
  CHECK_THROWS_AS(sample_mix_lambda(0.0, rng), UsageError);
  CHECK_THROWS_AS(sample_mix_lambda(-1.0, rng), UsageError);
}

TEST_CASE("mixup arithmetic") {
  const std::vector<double> a{1, 0}, b{0, 1};
  CHECK(mixup(a, b, 1.0) == a);
  const auto m = mixup(a, b, 0.7);
  CHECK(m[0] == doctest::Approx(0.7));
  CHECK(m[1] == doctest::Approx(0.3));
  Rng rng(2);
  const auto [mixed, lambda] = mixup(a, b, 0.2, rng);
  CHECK(mixed[0] == doctest::Approx(lambda));
  CHECK(lambda >= 0.5);
}

TEST_CASE("batch augmentation") {
  Rng rng(3);
  const Tensor one = Tensor::from_rows({{1, 2, 3}});
  CHECK(augment_batch(one, 0.2, rng) == one);

  const Tensor x = Tensor::from_rows({{1, 0}, {0, 1}, {0, 0}});
  std::vector<double> lambdas;
  const Tensor y = augment_batch(x, 2.0, rng, &lambdas);
  REQUIRE(lambdas.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(lambdas[i] >= 0.5);
    // the partner is another row, so row i keeps weight lambda on itself
    const double self = i < 2 ? y(i, i) : 1.0 - y(i, 0) - y(i, 1);
    CHECK(self == doctest::Approx(lambdas[i]));
  }
}

TEST_CASE("labeled loss") {
  const Batch b = Batch::from_records(std::vector<BanditRecord>{record({0}, {0}, {0.6, 0.4}, 1)}, 2);
  const Var l = loss_labeled(probs_var({{0.5, 0.5}}), b);
  CHECK(l.value().item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));

  const Batch neg = Batch::from_records(std::vector<BanditRecord>{record({0}, {0}, {0.6, 0.4}, 0)}, 2);
  const Var zero = loss_labeled(probs_var({{0.5, 0.5}}), neg);
  CHECK(zero.value().item() == 0.0);
  CHECK_FALSE(zero.requires_grad());

  const Var near = loss_labeled(probs_var({{1.0 - 1e-7, 1e-7}}), b);
  CHECK(near.value().item() < 1e-5);
}

TEST_CASE("pseudo labels") {
  CHECK(pseudo_labels(Tensor::from_rows({{0.6, 0.4}})) == Tensor::from_rows({{1, 0}}));
  CHECK(pseudo_labels(Tensor::from_rows({{0.5, 0.5}})) == Tensor::from_rows({{0, 0}}));
}

TEST_CASE("pseudo-label loss") {
  const Tensor qhat = Tensor::from_rows({{1, 0}});
  const Var one = loss_pseudo(probs_var({{0.5, 0.9}}), Tensor::from_rows({{1, 0}}), qhat);
  CHECK(one.value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  Toy t = toy(5);
  const Var empty = loss_pseudo(t.net.forward(Var::constant(t.batch.states)), Tensor(8, 4), Tensor(8, 4));
  CHECK(empty.value().item() == 0.0);
  nn::backward(empty);
  for (const Var& p : t.net.params()) {
    for (double g : p.grad().data()) CHECK(g == 0.0);
  }
}

TEST_CASE("unconfident-plus mask") {
  const std::vector<int> delta{1, 0, 0};
  const Tensor conf = Tensor::from_rows({{0, 0, 0}, {1, 1, 1}, {1, 0, 0}});
  const std::vector<ActionSet> logged{{0}, {0, 2}, {0, 1}};
  const Tensor u = unconf_plus_mask(delta, conf, logged);
  CHECK(u == Tensor::from_rows({{1, 0, 0}, {0, 0, 0}, {0, 1, 0}}));
}

TEST_CASE("bandit loss") {
  std::vector<BanditRecord> recs{record({0}, {0}, {0.5, 0.3, 0.3, 0.3}, 1),
                                 record({0}, {1, 2, 3}, {0.4, 0.6, 0.6, 0.6}, 0)};
  const Batch b = Batch::from_records(recs, 4);
  const Tensor u = unconf_plus_mask(b.delta, Tensor(2, 4), b.logged);
  const Var p = probs_var({{0.75, 0.1, 0.1, 0.1}, {0.3, 0.2, 0.2, 0.2}});
  CHECK(loss_bandit(p, b, u).value().item() == doctest::Approx(-0.375).epsilon(1e-14));

  // propensities reproduced exactly: each positive contributes 1
  const Var at_rho = Var::constant(b.rho);
  CHECK(loss_bandit(at_rho, b, u).value().item() == doctest::Approx(-1.0 / 4.0).epsilon(1e-14));

  recs[0].delta = 0;
  const Batch none = Batch::from_records(recs, 4);
  CHECK(loss_bandit(p, none, unconf_plus_mask(none.delta, Tensor(2, 4), none.logged)).value().item() == 0.0);
  const Var empty = loss_bandit(p, b, Tensor(2, 4));
  CHECK(empty.value().item() == 0.0);
  CHECK_FALSE(empty.requires_grad());
}

TEST_CASE("kl control") {
  const Var l = loss_kl(probs_var({{0.8}}), Tensor::from_rows({{0.5}}));
  // 0.8 ln 1.6 + 0.2 ln 0.4 from a 40-digit evaluation
  CHECK(l.value().item() == doctest::Approx(0.19274475702175743).epsilon(1e-14));
  const Tensor p = Tensor::from_rows({{0.3, 0.9}, {0.2, 0.6}});
  CHECK(std::abs(loss_kl(Var::constant(p), p).value().item()) < 1e-15);
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    Tensor a(3, 4), b(3, 4);
    for (double& v : a.data()) v = uniform01(rng);
    for (double& v : b.data()) v = uniform01(rng);
    CHECK(loss_kl(Var::constant(a), b).value().item() >= 0.0);
  }
}

TEST_CASE("total loss weights") {
  const Var ll = Var::constant(Tensor::scalar(1.5));
  const Var lp = Var::constant(Tensor::scalar(2.0));
  const Var lb = Var::constant(Tensor::scalar(-0.5));
  const Var lk = Var::constant(Tensor::scalar(0.25));
  CHECK(total_loss(ll, lp, lb, lk, {0, 0, 0}).value().item() == 1.5);
  CHECK(total_loss(ll, lp, lb, lk, {}).value().item() == 3.25);
  CHECK(total_loss(ll, lp, lb, lk, {2, 1, 4}).value().item() == doctest::Approx(6.0));
}

TEST_CASE("ips and banditnet") {
  std::vector<BanditRecord> recs{record({0}, {0}, {0.7, 0.2}, 1), record({0}, {1}, {0.4, 0.6}, 0),
                                 record({0}, {0, 1}, {0.6, 0.8}, 1), record({0}, {}, {0.3, 0.1}, 0)};
  const Batch b = Batch::from_records(recs, 2);
  const Var at_rho = Var::constant(b.rho);
  CHECK(loss_ips(at_rho, b).value().item() == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(loss_banditnet(at_rho, b, 0.0).value().item() == doctest::Approx(-0.5).epsilon(1e-14));
  // (1 - 0.9) * 2 + (0 - 0.9) * 2 over 4 records
  CHECK(loss_banditnet(at_rho, b).value().item() == doctest::Approx(0.4).epsilon(1e-14));

  const Var p = probs_var({{0.9, 0.1}, {0.2, 0.3}, {0.5, 0.9}, {0.4, 0.4}});
  CHECK(loss_banditnet(p, b, 0.0).value().item() == loss_ips(p, b).value().item());

  for (auto& r : recs) r.delta = 0;
  CHECK(loss_ips(p, Batch::from_records(recs, 2)).value().item() == 0.0);
  for (auto& r : recs) r.delta = 1;
  CHECK(loss_banditnet(p, Batch::from_records(recs, 2), 1.0).value().item() == 0.0);

  // ratio (0.99 / 0.01)^2 far above the clip
  const Batch extreme = Batch::from_records(std::vector<BanditRecord>{record({0}, {0, 1}, {0.01, 0.01}, 1)}, 2);
  Var w = Var::parameter(Tensor::from_rows({{0.99, 0.99}}), "p");
  const Var clipped = loss_ips(w, extreme, 100.0);
  CHECK(clipped.value().item() == doctest::Approx(-100.0));
  nn::backward(clipped);
  CHECK(w.grad()[0] == 0.0);
  CHECK(set_importance_weights(w, extreme).value().item() == doctest::Approx(9801.0));
}

TEST_CASE("fixmatch mask") {
  const Tensor p = Tensor::from_rows({{0.96, 0.5, 0.04}, {0.99, 0.5, 0.01}});
  CHECK(fixmatch_mask(p, std::vector<int>{0, 1}) == Tensor::from_rows({{1, 0, 1}, {0, 0, 0}}));
}

TEST_CASE("loss gradients match finite differences") {
  Toy t = toy(7);
  auto& params = t.net.params();
  Rng rng(8);
  const Tensor weak = augment_batch(t.batch.states, 0.2, rng);
  const Tensor strong = augment_batch(t.batch.states, 2.0, rng);
  const Tensor qhat = pseudo_labels(t.net.probs(weak));
  const Tensor conf = fet::confidence_mask(t.net.probs(weak), t.batch.delta, std::vector<double>(4, 0.6),
                                           std::vector<double>(4, 0.4));
  const Tensor u = unconf_plus_mask(t.batch.delta, conf, t.batch.logged);
  REQUIRE(conf.data() != Tensor(8, 4).data());
  auto fwd = [&](const Tensor& x) { return t.net.forward(Var::constant(x)); };

  CHECK(nn::grad_check([&] { return loss_labeled(fwd(weak), t.batch); }, params) < 1e-4);
  CHECK(nn::grad_check([&] { return loss_pseudo(fwd(strong), conf, qhat); }, params) < 1e-4);
  CHECK(nn::grad_check([&] { return loss_bandit(fwd(t.batch.states), t.batch, u); }, params) < 1e-4);
  CHECK(nn::grad_check([&] { return loss_kl(fwd(t.batch.states), t.ref); }, params) < 1e-4);
  CHECK(nn::grad_check([&] { return loss_ips(fwd(t.batch.states), t.batch, 1e6); }, params) < 1e-4);
  CHECK(nn::grad_check([&] { return loss_banditnet(fwd(t.batch.states), t.batch, 0.7, 1e6); }, params) < 1e-4);
  CHECK(nn::grad_check([&] { return loss_supervised(fwd(weak), t.batch.logged_mask); }, params) < 1e-4);
  CHECK(nn::grad_check(
            [&] {
              return total_loss(loss_labeled(fwd(weak), t.batch), loss_pseudo(fwd(strong), conf, qhat),
                                loss_bandit(fwd(t.batch.states), t.batch, u), loss_kl(fwd(t.batch.states), t.ref),
                                {0.5, 2.0, 0.3});
            },
            params) < 1e-4);
}

TEST_CASE("pseudo labels carry no gradient") {
  Toy t = toy(9);
  Rng rng(10);
  const Tensor weak = augment_batch(t.batch.states, 0.2, rng);
  const Tensor strong = augment_batch(t.batch.states, 2.0, rng);
  const Tensor conf = fixmatch_mask(t.net.probs(weak), t.batch.delta, 0.55);
  // q_hat recomputed from the current weights inside the loss; it is piecewise
  // constant, so the numeric gradient only sees the strong forward pass
  auto loss = [&] {
    const Tensor qhat = pseudo_labels(t.net.probs(weak));
    return loss_pseudo(t.net.forward(Var::constant(strong)), conf, qhat);
  };
  CHECK(nn::grad_check(loss, t.net.params()) < 1e-4);
}

TEST_CASE("gradient of the total is the sum of term gradients") {
  Toy t = toy(11);
  const Tensor u = unconf_plus_mask(t.batch.delta, Tensor(8, 4), t.batch.logged);
  auto grads = [&](const LossWeights& w, bool labeled) {
    t.net.zero_grad();
    const Var p = t.net.forward(Var::constant(t.batch.states));
    const Var ll = labeled ? loss_labeled(p, t.batch) : Var::constant(Tensor::scalar(0.0));
    nn::backward(total_loss(ll, Var::constant(Tensor::scalar(0.0)), loss_bandit(p, t.batch, u), loss_kl(p, t.ref), w));
    std::vector<double> g;
    for (const Var& v : t.net.params()) g.insert(g.end(), v.grad().data().begin(), v.grad().data().end());
    return g;
  };
  const auto all = grads({1, 1, 1}, true);
  const auto a = grads({0, 0, 0}, true);
  const auto b = grads({0, 1, 0}, false);
  const auto k = grads({0, 0, 1}, false);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == doctest::Approx(a[i] + b[i] + k[i]).epsilon(1e-10));
}

TEST_CASE("pseudoinverse estimate equals the logging policy value") {
  // C = 2, 4 states; propensities in quarters so subset probabilities are
  // exact multiples of 1/16 and records can be replicated by count.
  const std::vector<std::vector<double>> rho{{0.25, 0.75}, {0.5, 0.5}, {0.75, 0.25}, {0.25, 0.25}};
  const std::vector<ActionSet> target{{0}, {0, 1}, {1}, {}};
  auto feedback = [&](std::size_t s, const ActionSet& a) {
    // per-class agreement with the target, summed; success on full agreement
    int agree = 0;
    for (int c = 0; c < 2; ++c) agree += contains(a, c) == contains(target[s], c) ? 1 : 0;
    return agree == 2 ? 1 : 0;
  };
  const std::vector<ActionSet> subsets{{}, {0}, {1}, {0, 1}};
  auto subset_prob = [&](std::size_t s, const ActionSet& a) {
    double p = 1.0;
    for (int c = 0; c < 2; ++c) p *= contains(a, c) ? rho[s][static_cast<std::size_t>(c)] : 1.0 - rho[s][static_cast<std::size_t>(c)];
    return p;
  };

  double oracle = 0.0;
  std::vector<BanditRecord> recs;
  for (std::size_t s = 0; s < 4; ++s) {
    for (const auto& a : subsets) {
      const double p = subset_prob(s, a);
      oracle += 0.25 * p * feedback(s, a);
      const int copies = static_cast<int>(std::lround(16.0 * p));
      for (int k = 0; k < copies; ++k) recs.push_back(record({static_cast<double>(s)}, a, rho[s], feedback(s, a)));
    }
  }
  REQUIRE(recs.size() == 64);
  const Batch b = Batch::from_records(recs, 2);
  const Tensor u = unconf_plus_mask(b.delta, Tensor(b.size(), 2), b.logged);
  CHECK(std::abs(pi_value_estimate(b.rho, b, u) - oracle) < 1e-9);
  CHECK(oracle == doctest::Approx((1.0 / 16 + 4.0 / 16 + 1.0 / 16 + 9.0 / 16) / 4));
}

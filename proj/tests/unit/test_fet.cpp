#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "banditmatch/fet.hpp"
#include "banditmatch/policy.hpp"

using namespace bmatch;
using namespace bmatch::fet;

namespace {

CorrectnessStats stats_of(double mc_pos, double mc_neg) {
  CorrectnessStats s;
  s.mc_pos = mc_pos;
  s.mc_neg = mc_neg;
  s.pos_available = s.neg_available = true;
  return s;
}

PositiveBaselines baselines(std::vector<double> yes, std::vector<double> no) {
  const std::size_t C = yes.size();
  return {std::move(yes), std::move(no), std::vector<bool>(C, true), std::vector<bool>(C, true)};
}

nn::Tensor random_probs(std::size_t rows, std::size_t cols, Rng& rng) {
  nn::Tensor t(rows, cols);
  for (double& v : t.data()) v = 0.02 + 0.96 * uniform01(rng);
  return t;
}

}  // namespace

TEST_CASE("correct positive set") {
  const nn::Tensor probs = nn::Tensor::from_rows({{0.9, 0.2}, {0.8, 0.7}, {0.4, 0.7}, {0.9, 0.2}});
  const std::vector<ActionSet> logged{{0}, {0, 1}, {0}, {0}};
  const std::vector<int> delta{1, 1, 1, 0};
  CHECK(correct_positive_set(probs, logged, delta) == std::vector<std::size_t>{0, 1});
  CHECK(correct_positive_set(nn::Tensor(0, 2), {}, {}).empty());
}

TEST_CASE("positive baselines") {
  const nn::Tensor probs = nn::Tensor::from_rows({{0.9, 0.2}, {0.8, 0.7}});
  const std::vector<ActionSet> logged{{0}, {0, 1}};
  const std::vector<std::size_t> rows{0, 1};
  const PositiveBaselines b = positive_thresholds(probs, logged, rows);
  CHECK(b.yes[0] == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(b.yes[1] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(b.valid_yes == std::vector<bool>{true, true});
  CHECK(b.valid_no == std::vector<bool>{false, true});
  CHECK(b.no[1] == doctest::Approx(0.2).epsilon(1e-15));

  const std::vector<std::size_t> all_first{1};
  const PositiveBaselines full = positive_thresholds(probs, logged, all_first);
  CHECK(full.valid_no == std::vector<bool>{false, false});

  const PositiveBaselines none = positive_thresholds(probs, logged, {});
  CHECK(none.valid_yes == std::vector<bool>{false, false});
}

TEST_CASE("attribution weights") {
  const ActionSet pair{1, 3};
  CHECK(attribution_pos(1, pair) == 0.5);
  CHECK(attribution_pos(2, pair) == 0.0);
  CHECK(attribution_pos(3, ActionSet{3}) == 1.0);
  const std::vector<double> rho{0.1, 0.9, 0.2, 0.6};
  CHECK(attribution_neg(1, pair, rho) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(attribution_neg(3, pair, rho) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(attribution_neg(2, ActionSet{2}, rho) == 1.0);
  CHECK(attribution_neg(0, ActionSet{}, rho) == 0.0);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(6);
    for (double& v : r) v = 0.01 + 0.98 * uniform01(rng);
    ActionSet set;
    for (int c = 0; c < 6; ++c) {
      if (uniform01(rng) < 0.5) set.push_back(c);
    }
    if (set.empty()) continue;
    double sp = 0.0, sn = 0.0;
    for (int a : set) {
      sp += attribution_pos(a, set);
      sn += attribution_neg(a, set, r);
    }
    CHECK(sp == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sn == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("model correctness clamps") {
  SUBCASE("policy equal to the logging propensities") {
    const nn::Tensor rho = nn::Tensor::from_rows({{0.7, 0.8, 0.1}});
    const std::vector<ActionSet> logged{{0, 1}};
    const std::vector<std::size_t> rows{0};
    const CorrectnessStats s = model_correctness(rho, logged, rho, rows, rows);
    CHECK(s.raw_mc_pos == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.raw_mc_neg == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.mc_pos == 1.0 - 1e-3);
    CHECK(s.mc_neg == 1.0 - 1e-3);
  }
  SUBCASE("importance ratio above one") {
    const nn::Tensor probs = nn::Tensor::from_rows({{0.6}});
    const nn::Tensor rho = nn::Tensor::from_rows({{0.8}});
    const std::vector<ActionSet> logged{{0}};
    const std::vector<std::size_t> neg{0};
    const CorrectnessStats s = model_correctness(probs, logged, rho, {}, neg);
    CHECK(s.raw_mc_neg == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(s.mc_neg == 1.0 - 1e-3);
    CHECK(s.neg_available);
    CHECK_FALSE(s.pos_available);
  }
  SUBCASE("empty logged sets are skipped") {
    const nn::Tensor probs = nn::Tensor::from_rows({{0.3}, {0.6}});
    const nn::Tensor rho = nn::Tensor::from_rows({{0.4}, {0.8}});
    const std::vector<ActionSet> logged{{}, {0}};
    const std::vector<std::size_t> neg{0, 1};
    const CorrectnessStats s = model_correctness(probs, logged, rho, {}, neg);
    CHECK(s.n_negatives == 1);
    const std::vector<std::size_t> only_empty{0};
    CHECK_FALSE(model_correctness(probs, logged, rho, {}, only_empty).neg_available);
  }
}

TEST_CASE("negative thresholds with scale 2") {
  const auto t = negative_thresholds(baselines({0.8, 0.7}, {0.2, 0.3}), stats_of(0.6, 0.2), {});
  CHECK(t.scale == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(t.neg_yes == std::vector<double>{1.0, 1.0});
  CHECK(t.neg_no == std::vector<double>{0.0, 0.0});
}

TEST_CASE("identity scale keeps the baselines") {
  const auto t = negative_thresholds(baselines({0.8, 0.7, 0.3}, {0.2, 0.05, 0.6}), stats_of(0.4, 0.4), {});
  CHECK(t.scale == 1.0);
  CHECK(t.neg_yes[0] == 0.8);
  CHECK(t.neg_yes[1] == 0.7);
  CHECK(t.neg_yes[2] == 0.5);  // clamped
  CHECK(t.neg_no[0] == 0.2);
  CHECK(t.neg_no[1] == 0.05);
  CHECK(t.neg_no[2] == 0.5);  // clamped
}

TEST_CASE("fallbacks") {
  PositiveBaselines b = baselines({0.8, 0.7}, {0.2, 0.3});
  b.valid_yes[1] = false;
  b.valid_no[0] = false;
  const FetConfig cfg;
  const auto t = negative_thresholds(b, stats_of(0.5, 0.5), cfg);
  CHECK(t.neg_yes[1] == cfg.fallback_yes);
  CHECK(t.neg_no[0] == cfg.fallback_no);

  CorrectnessStats missing = stats_of(0.6, 0.2);
  missing.neg_available = false;
  CHECK(negative_thresholds(b, missing, cfg).scale == 1.0);
  CHECK(negative_thresholds(b, stats_of(0.6, 0.2), cfg, false).scale == 1.0);

  const auto f = fixed_thresholds(3, 0.95, 0.05);
  CHECK(f.neg_yes == std::vector<double>(3, 0.95));
  CHECK(f.neg_no == std::vector<double>(3, 0.05));
}

TEST_CASE("confidence mask") {
  const nn::Tensor p = nn::Tensor::from_rows({{0.95, 0.5, 0.05}, {0.95, 0.5, 0.05}});
  const std::vector<int> delta{0, 1};
  const std::vector<double> yes(3, 0.9), no(3, 0.1);
  const nn::Tensor conf = confidence_mask(p, delta, yes, no);
  CHECK(conf == nn::Tensor::from_rows({{1, 0, 1}, {0, 0, 0}}));
  // the band is closed
  const nn::Tensor edge = nn::Tensor::from_rows({{0.9, 0.1}});
  CHECK(confidence_mask(edge, std::vector<int>{0}, std::vector<double>(2, 0.9), std::vector<double>(2, 0.1)) ==
        nn::Tensor(1, 2));
}

TEST_CASE("threshold properties on random instances") {
  Rng rng(99);
  const FetConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t C = 5;
    PositiveBaselines b;
    for (std::size_t c = 0; c < C; ++c) {
      b.yes.push_back(uniform01(rng));
      b.no.push_back(uniform01(rng));
      b.valid_yes.push_back(uniform01(rng) < 0.8);
      b.valid_no.push_back(uniform01(rng) < 0.8);
    }
    const double mc_pos = 0.999 * uniform01(rng);
    const double mc_a = 0.999 * uniform01(rng);
    const double mc_b = 0.999 * uniform01(rng);
    const double lo = std::min(mc_a, mc_b), hi = std::max(mc_a, mc_b);
    const auto t_lo = negative_thresholds(b, stats_of(mc_pos, lo), cfg);
    const auto t_hi = negative_thresholds(b, stats_of(mc_pos, hi), cfg);
    const auto t_eq = negative_thresholds(b, stats_of(mc_pos, mc_pos), cfg);
    for (std::size_t c = 0; c < C; ++c) {
      for (const auto* t : {&t_lo, &t_hi, &t_eq}) {
        CHECK(t->neg_yes[c] >= 0.5);
        CHECK(t->neg_yes[c] <= 1.0);
        CHECK(t->neg_no[c] >= 0.0);
        CHECK(t->neg_no[c] <= 0.5);
      }
      // lower correctness on negatives gives stricter thresholds
      CHECK(t_lo.neg_yes[c] >= t_hi.neg_yes[c]);
      CHECK(t_lo.neg_no[c] <= t_hi.neg_no[c]);
      if (b.valid_yes[c] && b.yes[c] >= 0.5) CHECK(std::abs(t_eq.neg_yes[c] - b.yes[c]) <= 1e-12);
      if (b.valid_no[c] && b.no[c] <= 0.5) CHECK(std::abs(t_eq.neg_no[c] - b.no[c]) <= 1e-12);
    }
    nn::Tensor p = random_probs(6, C, rng);
    std::vector<int> delta(6);
    for (int& d : delta) d = uniform01(rng) < 0.5 ? 1 : 0;
    const nn::Tensor conf = confidence_mask(p, delta, t_lo.neg_yes, t_lo.neg_no);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t c = 0; c < C; ++c) {
        if (delta[i] == 1) CHECK(conf(i, c) == 0.0);
      }
    }
  }
}

TEST_CASE("five-record instance against a direct evaluation") {
  const nn::Tensor probs = nn::Tensor::from_rows({{0.91, 0.12, 0.77},
                                                  {0.83, 0.64, 0.08},
                                                  {0.35, 0.22, 0.61},
                                                  {0.58, 0.71, 0.44},
                                                  {0.27, 0.93, 0.66}});
  const nn::Tensor rho = nn::Tensor::from_rows({{0.88, 0.15, 0.72},
                                                {0.79, 0.55, 0.11},
                                                {0.62, 0.31, 0.57},
                                                {0.67, 0.52, 0.33},
                                                {0.41, 0.86, 0.74}});
  const std::vector<ActionSet> logged{{0, 2}, {0, 1}, {0, 2}, {0, 1}, {1, 2}};
  const std::vector<int> delta{1, 1, 1, 0, 0};

  // Oracle: plain loops over the definitions, long double accumulation.
  std::vector<std::size_t> dt;
  for (std::size_t i = 0; i < 5; ++i) {
    if (delta[i] != 1) continue;
    ActionSet pred;
    for (int c = 0; c < 3; ++c) {
      if (probs(i, static_cast<std::size_t>(c)) > 0.5) pred.push_back(c);
    }
    if (pred == logged[i]) dt.push_back(i);
  }
  long double yes[3] = {0, 0, 0}, no[3] = {0, 0, 0};
  int ny[3] = {0, 0, 0}, nn_[3] = {0, 0, 0};
  for (std::size_t i : dt) {
    for (int c = 0; c < 3; ++c) {
      const bool in = std::find(logged[i].begin(), logged[i].end(), c) != logged[i].end();
      (in ? yes : no)[c] += probs(i, static_cast<std::size_t>(c));
      ++(in ? ny : nn_)[c];
    }
  }
  long double mcp = 0;
  for (std::size_t i : dt) {
    for (int a : logged[i]) {
      const auto j = static_cast<std::size_t>(a);
      mcp += (1.0L / logged[i].size()) * probs(i, j) / rho(i, j);
    }
  }
  mcp /= dt.size();
  long double mcn = 0;
  int n_neg = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    if (delta[i] != 0) continue;
    long double denom = 0;
    for (int a : logged[i]) denom += rho(i, static_cast<std::size_t>(a));
    for (int a : logged[i]) {
      const auto j = static_cast<std::size_t>(a);
      mcn += (rho(i, j) / denom) * (1.0L - probs(i, j)) / (1.0L - rho(i, j));
    }
    ++n_neg;
  }
  mcn /= n_neg;
  const long double mcp_c = std::clamp(mcp, 0.0L, 0.999L);
  const long double mcn_c = std::clamp(mcn, 0.0L, 0.999L);
  const long double scale = (1 - mcn_c) / (1 - mcp_c);

  // Frozen from an exact rational evaluation of the same definitions.
  REQUIRE(dt == std::vector<std::size_t>{0, 1});
  const double frozen_mc_pos = 1.0794511571410306;
  const double frozen_mc_neg = 0.9270704173277703;
  CHECK(std::abs(static_cast<double>(mcp) - frozen_mc_pos) < 1e-12);
  CHECK(std::abs(static_cast<double>(mcn) - frozen_mc_neg) < 1e-12);

  const auto rows = correct_positive_set(probs, logged, delta);
  CHECK(rows == dt);
  const std::vector<std::size_t> neg{3, 4};
  const auto base = positive_thresholds(probs, logged, rows);
  const auto stats = model_correctness(probs, logged, rho, rows, neg);
  CHECK(std::abs(stats.raw_mc_pos - static_cast<double>(mcp)) < 1e-12);
  CHECK(std::abs(stats.raw_mc_neg - static_cast<double>(mcn)) < 1e-12);
  CHECK(stats.mc_pos == 0.999);
  const auto t = negative_thresholds(base, stats, {});
  CHECK(std::abs(t.scale - static_cast<double>(scale)) < 1e-12);
  for (int c = 0; c < 3; ++c) {
    const auto k = static_cast<std::size_t>(c);
    CHECK(base.valid_yes[k] == (ny[c] > 0));
    CHECK(base.valid_no[k] == (nn_[c] > 0));
    if (ny[c] > 0) {
      CHECK(std::abs(base.yes[k] - static_cast<double>(yes[c] / ny[c])) < 1e-12);
      const long double ty = std::clamp(yes[c] / ny[c] * scale, 0.5L, 1.0L);
      CHECK(std::abs(t.neg_yes[k] - static_cast<double>(ty)) < 1e-12);
    } else {
      CHECK(t.neg_yes[k] == 0.95);
    }
    if (nn_[c] > 0) {
      CHECK(std::abs(base.no[k] - static_cast<double>(no[c] / nn_[c])) < 1e-12);
      const long double tn = std::clamp(1 - (1 - no[c] / nn_[c]) * scale, 0.0L, 0.5L);
      CHECK(std::abs(t.neg_no[k] - static_cast<double>(tn)) < 1e-12);
    } else {
      CHECK(t.neg_no[k] == 0.05);
    }
  }
}

TEST_CASE("tracker smooths baselines and mc_pos") {
  ThresholdTracker tracker(2, {});
  const auto t1 = tracker.update(baselines({0.8, 0.6}, {0.2, 0.1}), stats_of(0.5, 0.5));
  CHECK(t1.pos_yes[0] == 0.8);
  CHECK(t1.scale == 1.0);
  const auto t2 = tracker.update(baselines({0.6, 0.6}, {0.4, 0.1}), stats_of(0.7, 0.5));
  CHECK(t2.pos_yes[0] == doctest::Approx(0.9 * 0.8 + 0.1 * 0.6));
  CHECK(t2.pos_no[0] == doctest::Approx(0.9 * 0.2 + 0.1 * 0.4));
  const double mc_pos = 0.9 * 0.5 + 0.1 * 0.7;
  CHECK(tracker.last_stats().mc_pos == doctest::Approx(mc_pos));
  CHECK(t2.scale == doctest::Approx(0.5 / (1.0 - mc_pos)));

  PositiveBaselines gap = baselines({0.1, 0.1}, {0.1, 0.1});
  gap.valid_yes = {false, false};
  const auto t3 = tracker.update(gap, stats_of(0.5, 0.5));
  CHECK(t3.pos_yes[0] == t2.pos_yes[0]);
}

#include <algorithm>
#include <filesystem>
#include <map>

#include "doctest.h"

#include "banditmatch/datasets.hpp"

using namespace bmatch;

namespace {

std::vector<LabeledExample> synthetic_corpus(int n) {
  std::vector<LabeledExample> out;
  for (int i = 0; i < n; ++i) out.push_back({{static_cast<double>(i)}, {i % 3}});
  return out;
}

// Single-layer net whose decision reproduces the indicator input exactly.
PolicyNet indicator_policy(int dim) {
  nn::MlpSpec spec{dim, {}, dim, nn::Activation::relu};
  nn::Mlp m = nn::Mlp::zeros(spec);
  nn::Tensor& w = m.params()[0].mutable_value();
  for (int c = 0; c < dim; ++c) w(static_cast<std::size_t>(c), static_cast<std::size_t>(c)) = 20.0;
  m.params()[1].mutable_value().fill(-10.0);
  return PolicyNet::from_mlp(std::move(m), PolicyRole::frozen);
}

}  // namespace

TEST_CASE("corpus generation is deterministic and expert-labelled") {
  const auto w = world::WorldSchema::default_world();
  const auto a = generate_corpus(w, 30, 5);
  const auto b = generate_corpus(w, 30, 5);
  const auto c = generate_corpus(w, 30, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.size() > 30);
  bool multi = false;
  for (const auto& e : a) {
    CHECK(static_cast<int>(e.state.size()) == w.state_dim());
    CHECK_FALSE(e.actions.empty());
    CHECK(std::is_sorted(e.actions.begin(), e.actions.end()));
    if (e.actions.size() >= 2) multi = true;
  }
  CHECK(multi);
  CHECK_THROWS_AS(generate_corpus(w, 0, 5), UsageError);
}

TEST_CASE("split sizes") {
  const auto corpus = synthetic_corpus(1000);
  auto [labeled, pool] = split_corpus(corpus, {0.1, 3});
  CHECK(labeled.size() == 100);
  CHECK(pool.size() == 900);
  auto [all, none] = split_corpus(corpus, {1.0, 3});
  CHECK(all.size() == 1000);
  CHECK(none.empty());
  CHECK_THROWS_AS(split_corpus(corpus, {0.0, 3}), UsageError);
  CHECK_THROWS_AS(split_corpus(corpus, {1.5, 3}), UsageError);
  CHECK_THROWS_AS(split_corpus(corpus, {-0.1, 3}), UsageError);
}

TEST_CASE("split is a partition") {
  const auto corpus = synthetic_corpus(257);
  for (double p : {0.05, 0.3, 0.77}) {
    auto [labeled, pool] = split_corpus(corpus, {p, 11});
    std::map<double, int> seen;
    for (const auto& e : labeled) ++seen[e.state[0]];
    for (const auto& e : pool) ++seen[e.state[0]];
    CHECK(seen.size() == corpus.size());
    for (const auto& [k, n] : seen) CHECK(n == 1);
    auto again = split_corpus(corpus, {p, 11});
    CHECK(again.first == labeled);
  }
  auto a = split_corpus(corpus, {0.3, 1}).first;
  auto b = split_corpus(corpus, {0.3, 2}).first;
  CHECK_FALSE(a == b);
}

TEST_CASE("feedback is exact-set equality") {
  CHECK(simulate_feedback({1, 4}, {1, 4}) == 1);
  CHECK(simulate_feedback({1}, {1, 4}) == 0);
  CHECK(simulate_feedback({1, 4, 5}, {1, 4}) == 0);
  CHECK(simulate_feedback({}, {}) == 1);
  CHECK(simulate_feedback({}, {2}) == 0);
}

TEST_CASE("threshold is strict") {
  CHECK(threshold_set(std::vector<double>{0.5, 0.5000001, 0.2, 0.9}) == ActionSet{1, 3});
}

TEST_CASE("logging with a policy that matches the labels") {
  std::vector<LabeledExample> pool{{{1, 0, 1}, {0, 2}}, {{0, 1, 0}, {1}}, {{1, 1, 1}, {0, 1, 2}}};
  const auto records = log_bandit_data(indicator_policy(3), pool);
  REQUIRE(records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(records[i].delta == 1);
    CHECK(records[i].logged == pool[i].actions);
    CHECK(records[i].state == pool[i].state);
  }
}

TEST_CASE("logging with a policy that predicts one half") {
  const auto w = world::WorldSchema::default_world();
  const auto corpus = generate_corpus(w, 10, 1);
  const PolicyNet uniform = PolicyNet::zeros({w.state_dim(), {8}, w.num_actions(), nn::Activation::relu});
  const auto records = log_bandit_data(uniform, corpus);
  for (const auto& r : records) {
    CHECK(r.logged.empty());
    CHECK(r.delta == 0);
    for (double p : r.rho) CHECK(p == 0.5);
  }
}

TEST_CASE("logged records agree with the logging policy") {
  const auto w = world::WorldSchema::default_world();
  const auto corpus = generate_corpus(w, 40, 2);
  const PolicyNet pi({w.state_dim(), {16}, w.num_actions(), nn::Activation::relu}, 9);
  const auto records = log_bandit_data(pi, corpus);
  REQUIRE(records.size() == corpus.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const Prediction p = predict_set(pi, r.state);
    CHECK(r.logged == p.actions);
    CHECK(r.rho == p.propensities);
    CHECK(r.delta == (r.logged == corpus[i].actions ? 1 : 0));
    for (double q : r.rho) {
      CHECK(q > 0.0);
      CHECK(q < 1.0);
    }
  }
}

TEST_CASE("jsonl round trip") {
  const auto w = world::WorldSchema::default_world();
  const auto corpus = generate_corpus(w, 5, 3);
  CHECK(corpus_from_jsonl(corpus_to_jsonl(corpus)) == corpus);
  const PolicyNet pi({w.state_dim(), {8}, w.num_actions(), nn::Activation::tanh}, 4);
  const auto records = log_bandit_data(pi, corpus);
  CHECK(bandit_from_jsonl(bandit_to_jsonl(records)) == records);

  const std::string path = "datasets_bandit.jsonl";
  write_bandit_jsonl(path, records);
  CHECK(read_bandit_jsonl(path) == records);
  std::filesystem::remove(path);
}

TEST_CASE("jsonl errors") {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      bandit_from_jsonl(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  const std::string good = R"({"v":"v1","state":[1],"actions":[0],"rho":[0.7],"delta":1})";
  CHECK(bandit_from_jsonl(good + "\n\n" + good + "\n").size() == 2);
  CHECK(line_of(good + "\n{oops\n") == 2);
  CHECK(line_of(good + "\n" + good + "\n" + R"({"v":"v1","state":[1],"actions":[0],"rho":[1.0],"delta":1})") == 3);
  CHECK(line_of(R"({"v":"v1","state":[1],"actions":[0],"rho":[0.5],"delta":2})") == 1);
  CHECK(line_of(R"({"v":"v1","state":[1],"actions":[3],"rho":[0.5],"delta":0})") == 1);
  CHECK(line_of(R"({"v":"v1","state":[1],"actions":[0,0],"rho":[0.5],"delta":0})") == 1);
  CHECK(line_of(R"({"v":"v1","state":[1],"rho":[0.5],"delta":0})") == 1);
  CHECK_THROWS_AS(bandit_from_jsonl(R"({"v":"v9","state":[1],"actions":[],"rho":[0.5],"delta":0})"), VersionError);
  CHECK_THROWS_AS(corpus_from_jsonl(R"({"v":"v1","state":[1],"actions":[-1]})"), ParseError);
  CHECK_THROWS_AS(read_corpus_jsonl("no/such/file.jsonl"), IoError);
}

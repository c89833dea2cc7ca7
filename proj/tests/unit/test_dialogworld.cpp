#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "banditmatch/dialogworld.hpp"

using namespace bmatch;
using namespace bmatch::world;

namespace {

const char* kShopWorld = R"(world v1
# one domain, two shops
domain shop
  informable area north south
  informable price cheap dear
  requestable phone address
  entity area=north price=cheap
  entity area=south price=cheap
end
)";

Agent bye_only(const WorldSchema& schema) {
  const int bye = schema.action_index(kGeneralDomain, ActType::bye);
  return [bye](const DialogContext&, std::span<const double>) { return ActionSet{bye}; };
}

DialogContext context_with(const WorldSchema& schema, const std::vector<UserAct>& acts) {
  DialogContext ctx = DialogContext::start(schema);
  apply_user_acts(schema, ctx, acts);
  return ctx;
}

}  // namespace

TEST_CASE("default world dimensions") {
  const WorldSchema w = WorldSchema::default_world();
  CHECK(w.num_domains() == 3);
  CHECK(w.num_actions() == 37);
  CHECK(w.state_dim() == 105);
  CHECK(w.action_index(kGeneralDomain, ActType::bye) == 36);
  for (const auto& d : w.domains()) CHECK(d.entities.size() == 8);
  CHECK(w == WorldSchema::default_world());
}

TEST_CASE("action vocabulary order") {
  const WorldSchema w = parse_world(kShopWorld);
  // inform x4, request x2, offer, book, nooffer, bye
  CHECK(w.num_actions() == 10);
  CHECK(w.action_index(0, ActType::inform, 0) == 0);
  CHECK(w.action_index(0, ActType::inform, 3) == 3);
  CHECK(w.action_index(0, ActType::request, 1) == 5);
  CHECK(w.action_index(0, ActType::offer) == 6);
  CHECK(w.action_index(0, ActType::nooffer) == 8);
  CHECK(w.action_name(2) == "shop-inform-phone");
  CHECK(w.action_name(9) == "general-bye");
  CHECK_THROWS_AS(w.action_index(0, ActType::request, 2), UsageError);
  for (int i = 0; i < w.num_actions(); ++i) CHECK(w.action_index(w.action(i)) == i);
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(WorldSchema(std::vector<Domain>{}), ConfigError);
  Domain d{"x", {"a"}, {{"v"}}, {"r"}, {{1}}};
  CHECK_THROWS_AS(WorldSchema({d}), ConfigError);
  CHECK_THROWS_AS(WorldSchema::generate({0, 1, 1, 1, 1}, 1), ConfigError);
}

TEST_CASE("world text round trip") {
  const WorldSchema w = WorldSchema::default_world();
  CHECK(parse_world(world_to_text(w)) == w);
  const WorldSchema shop = parse_world(kShopWorld);
  CHECK(parse_world(world_to_text(shop)) == shop);
  CHECK(shop.domain(0).entities[1] == std::vector<int>{1, 0});
}

TEST_CASE("world text errors carry line numbers") {
  CHECK_THROWS_AS(parse_world("world v2\n"), VersionError);
  CHECK_THROWS_AS(parse_world(""), ParseError);
  try {
    parse_world("world v1\ndomain a\n  informable x p q\n  requestable r\n  entity x=z\nend\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
  try {
    parse_world("world v1\ndomain a\n  informable x p\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("unterminated") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_world("world v1\nfoo\n"), ParseError);
  CHECK_THROWS_AS(parse_world("world v1\ndomain a\nrequestable r\nend\n"), ParseError);
}

TEST_CASE("expert solves every goal of a small world") {
  const WorldSchema w = parse_world(kShopWorld);
  const auto goals = enumerate_goals(w);
  // constraint lists: 4 for the first shop, 3 new for the second (price=cheap
  // is shared); times 3 request sets and 2 booking flags
  CHECK(goals.size() == 42);
  const Agent expert = expert_agent(w);
  for (const auto& g : goals) {
    const EpisodeMetrics m = run_episode(expert, w, g);
    CHECK(m.success == 1.0);
    CHECK(m.inform_f1 == 1.0);
    CHECK(m.match == 1.0);
  }
}

TEST_CASE("expert on sampled goals of the default world") {
  const WorldSchema w = WorldSchema::default_world();
  Rng rng(7);
  const Agent expert = expert_agent(w);
  for (int i = 0; i < 300; ++i) {
    const UserGoal g = sample_goal(w, rng);
    const EpisodeMetrics m = run_episode(expert, w, g);
    CHECK(m.success == 1.0);
    CHECK(m.turns <= 20);
  }
}

TEST_CASE("bye-only agent never succeeds") {
  const WorldSchema w = parse_world(kShopWorld);
  for (const auto& g : enumerate_goals(w)) {
    const EpisodeMetrics m = run_episode(bye_only(w), w, g);
    CHECK(m.success == 0.0);
    CHECK(m.inform_recall == 0.0);
    CHECK(m.turns == 1);
  }
}

TEST_CASE("inform precision, recall and F1") {
  const WorldSchema w = WorldSchema::default_world();
  UserGoal goal;
  goal.domains.push_back({0, {{0, w.domain(0).entities[0][0]}}, {4, 5}, false});
  const ActionSet all_info{w.action_index(0, ActType::inform, 3), w.action_index(0, ActType::inform, 4),
                           w.action_index(0, ActType::inform, 5)};
  const Agent agent = [&](const DialogContext&, std::span<const double>) { return all_info; };
  const EpisodeMetrics m = run_episode(agent, w, goal);
  CHECK(m.turns == 1);
  CHECK(m.inform_precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.inform_recall == 1.0);
  CHECK(m.inform_f1 == doctest::Approx(0.8));
  CHECK(m.success == 1.0);
  CHECK(f1_score(0.0, 0.0) == 0.0);
}

TEST_CASE("booking the wrong entity fails the match") {
  const WorldSchema w = parse_world(kShopWorld);
  UserGoal goal;
  goal.domains.push_back({0, {{1, 0}, {0, 1}}, {2}, true});
  // books after only the price is known, so the first cheap shop (north) is booked
  const Agent hasty = [&](const DialogContext&, std::span<const double>) {
    return make_action_set({w.action_index(0, ActType::book), w.action_index(0, ActType::offer),
                            w.action_index(0, ActType::inform, 2)});
  };
  const EpisodeMetrics m = run_episode(hasty, w, goal);
  CHECK(m.match == 0.0);
  CHECK(m.success == 0.0);
  CHECK(m.inform_recall == 1.0);
}

TEST_CASE("dialog stops at the turn limit") {
  const WorldSchema w = parse_world(kShopWorld);
  UserGoal goal;
  goal.domains.push_back({0, {{0, 0}}, {2}, false});
  const Agent silent = [](const DialogContext&, std::span<const double>) { return ActionSet{}; };
  const EpisodeMetrics m = run_episode(silent, w, goal, EpisodeConfig{5});
  CHECK(m.turns == 5);
  CHECK(m.success == 0.0);
}

TEST_CASE("state encoding of an opening turn") {
  const WorldSchema w = parse_world(kShopWorld);
  const DialogContext ctx = context_with(
      w, {{UserAct::Kind::inform, 0, 0, 0}, {UserAct::Kind::request, 0, 2, kUnexpressed}});
  const auto s = encode_state(w, ctx);
  REQUIRE(static_cast<int>(s.size()) == w.state_dim());
  std::set<int> expected{w.slot_flag_offset(0, 0),      w.slot_flag_offset(0, 2) + 1,
                         w.db_bucket_offset(0) + 1,     w.user_act_offset(0) + 0,
                         w.user_act_offset(0) + 2,      w.active_offset(0),
                         w.turn_bucket_offset()};
  std::set<int> on;
  for (int i = 0; i < w.state_dim(); ++i) {
    if (s[static_cast<std::size_t>(i)] != 0.0) {
      CHECK(s[static_cast<std::size_t>(i)] == 1.0);
      on.insert(i);
    }
  }
  CHECK(on == expected);
}

TEST_CASE("state encoding buckets") {
  const WorldSchema w = parse_world(kShopWorld);
  DialogContext ctx = context_with(w, {{UserAct::Kind::book, 0, kNoSlot, kUnexpressed}});
  ctx.turn = 7;
  auto s = encode_state(w, ctx);
  CHECK(s[static_cast<std::size_t>(w.db_bucket_offset(0) + 2)] == 1.0);  // 2 matches
  CHECK(s[static_cast<std::size_t>(w.booking_offset(0))] == 1.0);
  CHECK(s[static_cast<std::size_t>(w.user_act_offset(0) + 4)] == 1.0);
  CHECK(s[static_cast<std::size_t>(w.turn_bucket_offset() + 3)] == 1.0);

  ctx = context_with(w, {{UserAct::Kind::bye, kGeneralDomain, kNoSlot, kUnexpressed}});
  s = encode_state(w, ctx);
  CHECK(s[static_cast<std::size_t>(w.user_bye_offset())] == 1.0);
  CHECK(s[static_cast<std::size_t>(w.active_offset(0))] == 0.0);
}

TEST_CASE("expert rules") {
  const WorldSchema w = parse_world(kShopWorld);
  SUBCASE("no match") {
    const auto ctx = context_with(w, {{UserAct::Kind::inform, 0, 0, 0}, {UserAct::Kind::inform, 0, 1, 1}});
    CHECK(expert_respond(w, ctx) == ActionSet{w.action_index(0, ActType::nooffer)});
  }
  SUBCASE("ambiguous asks for the first unexpressed slot") {
    const auto ctx = context_with(w, {{UserAct::Kind::inform, 0, 1, 0}});
    CHECK(expert_respond(w, ctx) == ActionSet{w.action_index(0, ActType::request, 0)});
  }
  SUBCASE("resolved with a request and a booking") {
    const auto ctx = context_with(w, {{UserAct::Kind::inform, 0, 0, 1},
                                      {UserAct::Kind::request, 0, 3, kUnexpressed},
                                      {UserAct::Kind::book, 0, kNoSlot, kUnexpressed}});
    CHECK(expert_respond(w, ctx) == make_action_set({w.action_index(0, ActType::inform, 3),
                                                     w.action_index(0, ActType::book),
                                                     w.action_index(0, ActType::offer)}));
  }
  SUBCASE("resolved with nothing pending offers") {
    const auto ctx = context_with(w, {{UserAct::Kind::inform, 0, 0, 1}});
    CHECK(expert_respond(w, ctx) == ActionSet{w.action_index(0, ActType::offer)});
  }
  SUBCASE("user bye") {
    const auto ctx = context_with(w, {{UserAct::Kind::bye, kGeneralDomain, kNoSlot, kUnexpressed}});
    CHECK(expert_respond(w, ctx) == ActionSet{w.action_index(kGeneralDomain, ActType::bye)});
  }
}

TEST_CASE("user repeats an unresolved act after a silent turn") {
  const WorldSchema w = parse_world(kShopWorld);
  UserGoal goal;
  goal.domains.push_back({0, {{0, 0}, {1, 0}}, {2}, false});
  UserSimulator user(w, goal);
  const auto opening = user.start();
  REQUIRE(opening.size() == 2);
  CHECK(opening[0] == UserAct{UserAct::Kind::inform, 0, 0, 0});
  CHECK(opening[1] == UserAct{UserAct::Kind::request, 0, 2, kUnexpressed});
  const auto retry = user.step({});
  CHECK_FALSE(retry.terminated);
  REQUIRE(retry.acts.size() == 1);
  CHECK(retry.acts[0] == opening[1]);
}

TEST_CASE("user answers requests from the goal or with dontcare") {
  const WorldSchema w = parse_world(kShopWorld);
  UserGoal goal;
  goal.domains.push_back({0, {{0, 1}}, {2, 3}, false});
  UserSimulator user(w, goal);
  user.start();
  auto step = user.step({w.action_index(0, ActType::request, 0), w.action_index(0, ActType::request, 1)});
  REQUIRE(step.acts.size() >= 2);
  CHECK(step.acts[0] == UserAct{UserAct::Kind::inform, 0, 0, 1});
  CHECK(step.acts[1] == UserAct{UserAct::Kind::inform, 0, 1, kDontCare});
  step = user.step({w.action_index(0, ActType::inform, 2), w.action_index(0, ActType::inform, 3)});
  CHECK(step.terminated);
  CHECK(user.goal_complete());
}

TEST_CASE("goal sampling") {
  const WorldSchema w = WorldSchema::default_world();
  Rng rng(123);
  int counts[3] = {0, 0, 0};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const UserGoal g = sample_goal(w, rng);
    REQUIRE(!g.domains.empty());
    ++counts[g.domains.size() - 1];
    for (const auto& dg : g.domains) {
      CHECK_FALSE(dg.constraints.empty());
      CHECK_FALSE(dg.requests.empty());
      std::vector<int> c(static_cast<std::size_t>(w.domain(dg.domain).num_informable()), kUnexpressed);
      for (auto [s, v] : dg.constraints) c[static_cast<std::size_t>(s)] = v;
      CHECK_FALSE(matching_entities(w, dg.domain, c).empty());
    }
  }
  for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / double(n) - kGoalDomainWeights[k]) < 0.02);
}

TEST_CASE("aggregate statistics") {
  std::vector<EpisodeMetrics> eps(4);
  for (int i = 0; i < 4; ++i) {
    eps[static_cast<std::size_t>(i)].turns = i + 1;
    eps[static_cast<std::size_t>(i)].success = i < 3 ? 1.0 : 0.0;
  }
  const AggregateMetrics a = compute_aggregate(eps);
  CHECK(a.count == 4);
  CHECK(a.turns.mean == 2.5);
  CHECK(a.turns.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(a.success_pct.mean == 75.0);
  CHECK(a.success_pct.std == doctest::Approx(std::sqrt(3.0) * 25.0));
  CHECK_THROWS_AS(compute_aggregate(std::vector<EpisodeMetrics>{}), UsageError);
  CHECK(format_mean_std({76.7, 2.83}, 1, 2) == "76.7 \xC2\xB1 2.83");
  CHECK(format_mean_std({0.8766, 0.0123}, 3, 3) == "0.877 \xC2\xB1 0.012");
}

TEST_CASE("episode trace export") {
  const WorldSchema w = parse_world(kShopWorld);
  UserGoal goal;
  goal.domains.push_back({0, {{0, 0}}, {2}, false});
  std::vector<TurnRecord> trace;
  run_episode(expert_agent(w), w, goal, {}, &trace);
  REQUIRE(!trace.empty());
  const std::string jsonl = trace_to_jsonl(w, trace);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == static_cast<long>(trace.size()));
  CHECK(jsonl.find("shop-inform-area=north") != std::string::npos);
}

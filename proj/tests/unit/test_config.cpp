#include "doctest.h"

#include "banditmatch/config.hpp"

using namespace bmatch;

TEST_CASE("defaults") {
  const ExperimentConfig c;
  CHECK(c.pipeline.train.optimizer.learning_rate == 1e-3);
  CHECK(c.pipeline.train.weights.lambda_p == 1.0);
  CHECK(c.pipeline.train.aug.alpha_weak == 0.2);
  CHECK(c.pipeline.train.aug.alpha_strong == 2.0);
  CHECK(c.pipeline.hidden_dims == std::vector<int>{128, 128});
  CHECK(c.pipeline.eval.n_dialogs == 500);
  CHECK(c.seeds.size() == 5);
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("parse and override") {
  const ExperimentConfig c = parse_config(
      "# comment\n"
      "seed = 7\n"
      "seeds = 1, 2\n"
      "hidden_dims = 32,16   # trailing comment\n"
      "method = ips\n"
      "kl = true\n"
      "learning_rate = 0.01\n"
      "\n"
      "world_entities = 5\n");
  CHECK(c.seed == 7);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.pipeline.hidden_dims == std::vector<int>{32, 16});
  CHECK(c.pipeline.train.method == Method::ips);
  CHECK(c.pipeline.train.kl);
  CHECK(c.pipeline.train.optimizer.learning_rate == 0.01);
  CHECK(c.world.entities == 5);

  ExperimentConfig d = c;
  apply_setting(d, "epochs", "3");
  CHECK(d.pipeline.train.epochs == 3);
  CHECK(get_setting(d, "epochs") == "3");
}

TEST_CASE("text form round trips") {
  ExperimentConfig c;
  apply_setting(c, "labeled_fraction", "0.3");
  apply_setting(c, "ablation", "no_cbl");
  apply_setting(c, "sweep_percentages", "5,50");
  const std::string text = config_to_text(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(config_to_text(back) == text);
  for (const auto& k : config_keys()) CHECK(get_setting(back, k.name) == get_setting(c, k.name));
}

TEST_CASE("errors") {
  try {
    parse_config("seed = 1\nno equals sign\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  try {
    parse_config("seed = 1\n\nbogus_key = 3\n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("line 3: ", 0) == 0);
  }
  ExperimentConfig c;
  CHECK_THROWS_AS(apply_setting(c, "epochs", "many"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "epochs", "3x"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "kl", "maybe"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "method", "act-vrnn"), ConfigError);
  CHECK_THROWS_AS(get_setting(c, "nope"), ConfigError);

  apply_setting(c, "labeled_fraction", "0");
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ExperimentConfig{};
  apply_setting(c, "ablation", "no_fet");
  apply_setting(c, "method", "fixmatch");
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_THROWS_AS(load_config("missing.cfg"), IoError);
}

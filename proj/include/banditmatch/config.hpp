#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "banditmatch/dialogworld.hpp"
#include "banditmatch/trainer.hpp"

namespace bmatch {

/// Everything a command can be configured with. Text form: one
/// `key = value` per line, `#` starts a comment, unknown keys are errors.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  world::WorldSizes world;
  PipelineConfig pipeline;
  std::vector<int> sweep_percentages = default_sweep_percentages();
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Recognised keys in snapshot order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text value; ConfigError on an unknown key or a bad
/// value.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_setting(const ExperimentConfig& cfg, std::string_view key);

/// Applies every line of `text` on top of `base`. Syntax errors raise
/// ParseError, bad keys or values ConfigError (both carry the line).
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

/// All keys with their current values, parseable by parse_config.
std::string config_to_text(const ExperimentConfig& cfg);

/// Cross-field checks (delegates training fields to TrainConfig::validate).
void validate(const ExperimentConfig& cfg);

}  // namespace bmatch

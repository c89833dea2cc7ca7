from ._core import (
    ConfigError,
    Error,
    IoError,
    NumericError,
    ParseError,
    Policy,
    UsageError,
    VersionError,
    World,
    derive_seed,
    expert_report,
    fet_thresholds,
    generate_corpus,
    parse_config,
    run_experiment,
    simulate_feedback,
    threshold_set,
)

__all__ = [
    "ConfigError",
    "Error",
    "IoError",
    "NumericError",
    "ParseError",
    "Policy",
    "UsageError",
    "VersionError",
    "World",
    "derive_seed",
    "expert_report",
    "fet_thresholds",
    "generate_corpus",
    "parse_config",
    "run_experiment",
    "simulate_feedback",
    "threshold_set",
]

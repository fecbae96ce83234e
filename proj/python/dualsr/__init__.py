"""Python access to the dual dynamic representation recommender."""

from ._core import (
    ConfigError,
    ContractError,
    NumericalError,
    ParseError,
    config_hash,
    config_keys,
    evaluate,
    generate,
    gradcheck,
    log_density,
    metrics,
    normalized_adjacency,
    prepare,
    rank_from_scores,
    resolved_config,
    run_directory,
    train,
    variant_names,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "NumericalError",
    "ParseError",
    "config_hash",
    "config_keys",
    "evaluate",
    "generate",
    "gradcheck",
    "log_density",
    "metrics",
    "normalized_adjacency",
    "prepare",
    "rank_from_scores",
    "resolved_config",
    "run_directory",
    "train",
    "variant_names",
]

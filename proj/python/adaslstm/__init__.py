"""Adaptive-depth S-LSTM text classifier."""

import json

from ._core import (
    ArgumentError,
    ConfigError,
    DimensionError,
    Error,
    Model,
    NumericalError,
    ParseError,
    config_keys,
    default_config,
    ingest,
    load_config,
    normalize_config,
    perturbed_softmax,
    select_depth,
    tokenize,
)
from ._core import run_experiment as _run_experiment


def run_experiment(config):
    """Train and evaluate per `config` (a dict of config keys); returns the report dict."""
    return json.loads(_run_experiment({k: str(v).lower() if isinstance(v, bool) else str(v) for k, v in config.items()}))


__all__ = [
    "ArgumentError",
    "ConfigError",
    "DimensionError",
    "Error",
    "Model",
    "NumericalError",
    "ParseError",
    "config_keys",
    "default_config",
    "ingest",
    "load_config",
    "normalize_config",
    "perturbed_softmax",
    "run_experiment",
    "select_depth",
    "tokenize",
]

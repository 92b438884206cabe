"""Experiment configuration files.

Configs are JSON documents mirroring :class:`~centered_td.harness.ExperimentConfig`,
optionally carrying rate grids for sweeps and an inline custom MDP.  The
schema is closed: unknown keys are rejected by name before anything runs.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError, ModelError
from .harness import ExperimentConfig
from .learners import StepSizes

_TOP_KEYS = {
    "environment",
    "algorithm",
    "sizes",
    "steps_per_run",
    "n_runs",
    "record_every",
    "seed",
    "sampling_mode",
    "theta_init",
    "ctdc_mode",
    "grids",
}
_SIZES_KEYS = {
    "alpha",
    "beta",
    "zeta",
    "decay_mode",
    "alpha_exponent",
    "beta_exponent",
    "zeta_exponent",
}
_GRID_KEYS = {"alpha", "beta", "zeta"}
_REQUIRED_KEYS = ("environment", "algorithm", "sizes", "steps_per_run")


def _reject_unknown(mapping: dict, allowed: set, context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {context}")


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key {key!r} must be a number, got {value!r}")
    return float(value)


def _integer(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"key {key!r} must be an integer, got {value!r}")
    return value


def _parse_sizes(data) -> StepSizes:
    if not isinstance(data, dict):
        raise ConfigError("key 'sizes' must be an object")
    _reject_unknown(data, _SIZES_KEYS, "'sizes'")
    if "alpha" not in data:
        raise ConfigError("key 'sizes.alpha' is required")
    kwargs = {"alpha": _number(data["alpha"], "sizes.alpha")}
    for key in ("beta", "zeta"):
        if key in data and data[key] is not None:
            kwargs[key] = _number(data[key], f"sizes.{key}")
    if "decay_mode" in data:
        if not isinstance(data["decay_mode"], str):
            raise ConfigError("key 'sizes.decay_mode' must be a string")
        kwargs["decay_mode"] = data["decay_mode"]
    for key in ("alpha_exponent", "beta_exponent", "zeta_exponent"):
        if key in data:
            kwargs[key] = _number(data[key], f"sizes.{key}")
    try:
        return StepSizes(**kwargs)
    except ModelError as exc:
        raise ConfigError(f"invalid 'sizes': {exc}") from exc


def _parse_grids(data) -> dict:
    if not isinstance(data, dict):
        raise ConfigError("key 'grids' must be an object")
    _reject_unknown(data, _GRID_KEYS, "'grids'")
    grids = {}
    for key, values in data.items():
        if not isinstance(values, list):
            raise ConfigError(f"key 'grids.{key}' must be a list of numbers")
        grids[key] = [_number(v, f"grids.{key}") for v in values]
    return grids


def parse_config(data: dict, context: str = "config") -> tuple[ExperimentConfig, dict | None]:
    """Validate a raw mapping into a config plus optional sweep grids."""
    if not isinstance(data, dict):
        raise ConfigError(f"{context} must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, context)
    missing = [k for k in _REQUIRED_KEYS if k not in data]
    if missing:
        raise ConfigError(f"{context} is missing key {missing[0]!r}")

    environment = data["environment"]
    if not isinstance(environment, (str, dict)):
        raise ConfigError("key 'environment' must be a name or an inline environment object")
    if not isinstance(data["algorithm"], str):
        raise ConfigError("key 'algorithm' must be a string")

    kwargs = {
        "environment": environment,
        "algorithm": data["algorithm"],
        "sizes": _parse_sizes(data["sizes"]),
        "steps_per_run": _integer(data["steps_per_run"], "steps_per_run"),
    }
    for key in ("n_runs", "record_every", "seed"):
        if key in data:
            kwargs[key] = _integer(data[key], key)
    if "sampling_mode" in data and data["sampling_mode"] is not None:
        if not isinstance(data["sampling_mode"], str):
            raise ConfigError("key 'sampling_mode' must be a string")
        kwargs["sampling_mode"] = data["sampling_mode"]
    if "theta_init" in data:
        ti = data["theta_init"]
        if isinstance(ti, list):
            kwargs["theta_init"] = tuple(_number(v, "theta_init") for v in ti)
        elif isinstance(ti, str):
            kwargs["theta_init"] = ti
        else:
            raise ConfigError("key 'theta_init' must be 'ones', 'zeros', or a list")
    if "ctdc_mode" in data:
        if not isinstance(data["ctdc_mode"], str):
            raise ConfigError("key 'ctdc_mode' must be a string")
        kwargs["ctdc_mode"] = data["ctdc_mode"]

    try:
        config = ExperimentConfig(**kwargs)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc

    # Validate the environment (including inline definitions) and the init
    # vector eagerly so schema problems surface as config errors, not runtime
    # failures mid-experiment.
    from .harness import _initial_weights, resolve_environment

    try:
        env = resolve_environment(config)
        _initial_weights(config, env)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc

    grids = _parse_grids(data["grids"]) if "grids" in data else None
    return config, grids


def load_config(path) -> tuple[ExperimentConfig, dict | None]:
    """Load and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config file {path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        return parse_config(data, context=f"config file {path.name}")
    except ModelError as exc:
        raise ConfigError(f"config file {path.name}: {exc}") from exc

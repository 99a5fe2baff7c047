"""Scenario files, flag overrides and the resolved-config echo.

Scenario files are YAML whose top-level keys are the Scenario fields, plus
an optional `sweep` section:

    scenario_id: beta-sweep
    seed: 7
    script: {name: l_shape, scale: 50}
    wind: {model: piecewise-gust, mean: [2.0, 1.0], gust_amplitude: 2.0}
    plant: {compensation: 1.0}
    weighted: {alpha: 0.9, beta: 0.1}
    sweep:
      axis: alpha_beta
      values: [0.0, 0.05, 0.1, 0.15]
"""

import logging
from pathlib import Path
from typing import Any, Literal, TextIO

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import ConfigError
from evaluator import Scenario
from planner_weighted import WeightedParams
from version import VERSION

logger = logging.getLogger(__name__)

RESOLVED_NAME = "config.resolved.yaml"


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    axis: Literal["alpha_beta", "gamma", "forward_gamma", "compensation"]
    values: list[float | tuple[float, float]] = Field(min_length=1)


def read_scenario_file(path: str | Path) -> dict[str, Any]:
    """Raw mapping from a YAML scenario file; unreadable files are config errors."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: a scenario file must be a mapping")
    return raw


def parse_gamma(text: str) -> tuple[float, float]:
    """'lo:hi' or a single value used for both ends."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            lo = hi = float(parts[0])
        elif len(parts) == 2:
            lo, hi = float(parts[0]), float(parts[1])
        else:
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"gamma must look like lo:hi, got {text!r}") from None
    if not (0 < lo <= hi):
        raise ConfigError(f"gamma range must satisfy 0 < lo <= hi, got {text!r}")
    return (lo, hi)


def parse_values(text: str, axis: str) -> list[float | tuple[float, float]]:
    """Comma-separated sweep values; gamma axes take lo:hi items."""
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError("no sweep values given")
    if axis in ("gamma", "forward_gamma"):
        return [parse_gamma(t) for t in items]
    try:
        return [float(t) for t in items]
    except ValueError:
        raise ConfigError(f"sweep values must be numbers, got {text!r}") from None


def draw_seed() -> int:
    return int(np.random.SeedSequence().entropy) % 2**63


def _merge(raw: dict[str, Any], key: str, updates: dict[str, Any]) -> None:
    section = dict(raw.get(key) or {})
    section.update(updates)
    raw[key] = section


def apply_overrides(raw: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Flags over file values. Keys are Scenario fields, with `alpha`,
    `beta` and `compensation` reaching into their sections."""
    merged = dict(raw)
    flags = {k: v for k, v in overrides.items() if v is not None}
    alpha, beta = flags.pop("alpha", None), flags.pop("beta", None)
    if alpha is not None or beta is not None:
        if alpha is None:
            alpha = 1.0 - beta
        if beta is None:
            beta = 1.0 - alpha
        _merge(merged, "weighted", {"alpha": alpha, "beta": beta})
    if "compensation" in flags:
        _merge(merged, "plant", {"compensation": flags.pop("compensation")})
    merged.update(flags)
    return merged


def weighted_params(alpha: float | None, beta: float | None) -> WeightedParams:
    """Weights from flags; one given implies the other."""
    raw = apply_overrides({}, {"alpha": alpha, "beta": beta})
    try:
        return WeightedParams(**raw.get("weighted", {}))
    except ValidationError as exc:
        raise ConfigError(f"invalid weights: {exc}") from exc


def build_scenario(raw: dict[str, Any]) -> tuple[Scenario, SweepSpec | None]:
    fields = dict(raw)
    sweep_raw = fields.pop("sweep", None)
    try:
        scenario = Scenario(**fields)
        sweep = SweepSpec(**sweep_raw) if sweep_raw is not None else None
    except ValidationError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc
    return scenario, sweep


def load_scenario(
    path: str | Path | None, overrides: dict[str, Any]
) -> tuple[Scenario, SweepSpec | None]:
    """Scenario from file (or defaults) plus flags; draws a seed if neither
    the file nor the flags give one."""
    raw = read_scenario_file(path) if path is not None else {}
    merged = apply_overrides(raw, overrides)
    if merged.get("seed") is None:
        merged["seed"] = draw_seed()
        logger.info("no seed given, drew %d", merged["seed"])
    return build_scenario(merged)


def write_resolved(sink: TextIO, command: str, settings: dict[str, Any]) -> None:
    """Echo of everything a run used; keys keep insertion order."""
    payload = {"windward_version": VERSION, "command": command, **settings}
    yaml.safe_dump(payload, sink, sort_keys=False, default_flow_style=False)


def resolved_settings(scenario: Scenario, sweep: SweepSpec | None = None) -> dict[str, Any]:
    settings: dict[str, Any] = {"seed": scenario.seed}
    settings["scenario"] = scenario.model_dump(mode="json")
    if sweep is not None:
        settings["sweep"] = sweep.model_dump(mode="json")
    return settings

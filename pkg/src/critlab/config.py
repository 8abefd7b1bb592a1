from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .measures import METRICS
from .sampling import RootDistribution, parse_distribution
from .utils import default_workers

EXPERIMENTS = ("convergence", "jensen-audit", "smallball", "decouple-check", "maxlog", "lln")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
REFERENCE_FACTOR = 16
_KNOWN_KEYS = {
    "experiment",
    "distribution",
    "k",
    "n_list",
    "linear_n_list",
    "seeds",
    "trials",
    "metric",
    "output_path",
    "workers",
    "n_directions",
    "reference_size",
    "m_grid",
    "psi_per_instance",
    "instances",
    "radius",
    "threshold",
    "points_L",
    "record_timing",
    "log_level",
    "progress",
}


class ConfigError(ValueError):
    """All problems found in one configuration, reported together."""

    def __init__(self, errors: list[str]) -> None:
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


class _UniqueKeyLoader(yaml.SafeLoader):
    """SafeLoader that records duplicate mapping keys with their line numbers."""

    def __init__(self, stream: str) -> None:
        super().__init__(stream)
        self.duplicates: list[str] = []


def _construct_unique_mapping(loader: _UniqueKeyLoader, node: yaml.MappingNode, deep: bool = False) -> dict[Any, Any]:
    seen: dict[Any, int] = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        line = key_node.start_mark.line + 1
        if key in seen:
            loader.duplicates.append(f"Duplicate key {key!r} on line {line} (first defined on line {seen[key]}).")
        else:
            seen[key] = line
    return loader.construct_mapping(node, deep=deep)


_UniqueKeyLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_unique_mapping)


def _load_yaml_text(text: str) -> tuple[dict[str, Any], list[str]]:
    loader = _UniqueKeyLoader(text)
    try:
        data = loader.get_single_data() or {}
    except yaml.YAMLError as exc:
        return {}, [f"Invalid YAML: {exc}"]
    finally:
        loader.dispose()
    if not isinstance(data, dict):
        return {}, ["Config YAML must contain a mapping at the top level."]
    return data, list(loader.duplicates)


def _read_env(env: Mapping[str, str]) -> dict[str, Any]:
    return {
        "workers": env.get("CRITLAB_WORKERS"),
        "log_level": env.get("CRITLAB_LOG_LEVEL"),
        "output_path": env.get("CRITLAB_OUT_DIR"),
        "progress": env.get("CRITLAB_PROGRESS"),
    }


@dataclass
class ExperimentConfig:
    experiment: str
    distribution: RootDistribution
    k: int = 1
    n_list: list[int] = field(default_factory=lambda: [64, 256, 1024])
    linear_n_list: list[int] = field(default_factory=lambda: [64, 256, 1024])
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    trials: int = 100_000
    metric: str = "sliced_w1"
    output_path: Path = Path("out")
    workers: int = field(default_factory=default_workers)
    n_directions: int = 256
    reference_size: int = 2**14
    m_grid: int = 256
    psi_per_instance: int = 5
    instances: int = 100
    radius: float = 2.0
    threshold: float = 1.0
    points_L: int | None = None
    record_timing: bool = False
    log_level: str = "INFO"
    progress: bool = False
    config_path: Path | None = None

    def errors(self) -> list[str]:
        problems: list[str] = []
        if self.experiment not in EXPERIMENTS:
            problems.append(
                f"Unknown experiment {self.experiment!r}; expected one of {', '.join(EXPERIMENTS)}."
            )
        if not self.n_list:
            problems.append("n_list must not be empty.")
        elif any(n < 1 for n in self.n_list):
            problems.append("n_list entries must be >= 1.")
        elif any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            problems.append(f"n_list must be strictly ascending, got {self.n_list}.")
        if not self.linear_n_list or any(b <= a for a, b in zip(self.linear_n_list, self.linear_n_list[1:])):
            problems.append(f"linear_n_list must be non-empty and strictly ascending, got {self.linear_n_list}.")
        if not self.seeds:
            problems.append("seeds must not be empty.")
        elif any(s < 0 for s in self.seeds):
            problems.append("seeds must be nonnegative integers.")
        if self.metric not in METRICS:
            problems.append(f"Unknown metric {self.metric!r}; expected one of {', '.join(METRICS)}.")
        minimum_k = 0 if self.experiment in ("convergence", "lln") else 1
        if self.k < minimum_k:
            problems.append(f"k must be >= {minimum_k} for {self.experiment}.")
        if self.n_list and self.experiment != "lln" and min(self.n_list) <= self.k:
            problems.append(f"Every n must exceed k={self.k}; smallest n is {min(self.n_list)}.")
        for name in ("trials", "workers", "n_directions", "reference_size", "m_grid", "psi_per_instance", "instances"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1.")
        if self.experiment in ("smallball", "decouple-check") and 1 <= self.trials < 10_000:
            problems.append("trials must be >= 10000 for small-ball estimates.")
        if self.experiment == "convergence" and self.n_list:
            needed = REFERENCE_FACTOR * max(self.n_list)
            if self.reference_size < needed:
                problems.append(f"reference_size must be >= {needed} (16 * max(n_list)) for convergence.")
        if self.points_L is not None and self.points_L < 1:
            problems.append("points_L must be >= 1.")
        if not self.radius > 0:
            problems.append("radius must be > 0.")
        if not self.threshold > 0:
            problems.append("threshold must be > 0.")
        if self.log_level.upper() not in LOG_LEVELS:
            problems.append(f"Unknown log_level {self.log_level!r}.")
        return problems

    def validate(self) -> None:
        problems = self.errors()
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "distribution": self.distribution.to_dict(),
            "k": self.k,
            "n_list": list(self.n_list),
            "linear_n_list": list(self.linear_n_list),
            "seeds": list(self.seeds),
            "trials": self.trials,
            "metric": self.metric,
            "output_path": str(self.output_path),
            "workers": self.workers,
            "n_directions": self.n_directions,
            "reference_size": self.reference_size,
            "m_grid": self.m_grid,
            "psi_per_instance": self.psi_per_instance,
            "instances": self.instances,
            "radius": self.radius,
            "threshold": self.threshold,
            "points_L": self.points_L,
            "record_timing": self.record_timing,
            "log_level": self.log_level,
        }


def _coerce(
    merged: dict[str, Any], key: str, kind: type, problems: list[str], default: Any
) -> Any:
    value = merged.get(key)
    if value is None or value == "":
        return default
    try:
        if kind is bool:
            return value if isinstance(value, bool) else _BOOL_WORDS[str(value).strip().lower()]
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return kind(value)
    except (KeyError, TypeError, ValueError):
        problems.append(f"{key} must be {kind.__name__}, got {value!r}.")
        return default


def _coerce_int_list(value: Any, key: str, problems: list[str], default: list[int]) -> list[int]:
    if value is None:
        return default
    if not isinstance(value, list):
        problems.append(f"{key} must be a list of integers, got {value!r}.")
        return default
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError):
        problems.append(f"{key} must be a list of integers, got {value!r}.")
        return default


def parse_config(
    text: str,
    *,
    experiment: str | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """Parse YAML text into a validated config, collecting every problem before raising.

    Precedence, lowest first: environment, file, ``overrides`` (command line).
    ``CRITLAB_WORKERS`` is the exception and beats the file.
    """
    data, problems = _load_yaml_text(text)
    unknown = sorted(set(data).difference(_KNOWN_KEYS))
    if unknown:
        problems.append(f"Unknown config keys: {unknown}.")

    env_data = _read_env(env if env is not None else os.environ)
    merged: dict[str, Any] = {k: v for k, v in env_data.items() if v not in (None, "")}
    merged.update({k: v for k, v in data.items() if k in _KNOWN_KEYS})
    if env_data["workers"] not in (None, ""):
        merged["workers"] = env_data["workers"]
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    file_experiment = data.get("experiment")
    if experiment is not None and file_experiment is not None and file_experiment != experiment:
        problems.append(f"Config is for experiment {file_experiment!r} but {experiment!r} was requested.")
    chosen = experiment if experiment is not None else file_experiment
    if chosen is None:
        problems.append(f"Missing experiment; expected one of {', '.join(EXPERIMENTS)}.")
        chosen = ""

    distribution: RootDistribution | None = None
    if "distribution" not in data:
        problems.append("Missing distribution.")
    else:
        try:
            distribution = parse_distribution(data["distribution"])
        except (TypeError, ValueError) as exc:
            problems.append(f"Invalid distribution: {exc}")

    defaults = ExperimentConfig(experiment=str(chosen), distribution=RootDistribution.uniform_disk())
    points_raw = merged.get("points_L")
    config = ExperimentConfig(
        experiment=str(chosen),
        distribution=distribution or defaults.distribution,
        k=_coerce(merged, "k", int, problems, defaults.k),
        n_list=_coerce_int_list(merged.get("n_list"), "n_list", problems, defaults.n_list),
        linear_n_list=_coerce_int_list(merged.get("linear_n_list"), "linear_n_list", problems, defaults.linear_n_list),
        seeds=_coerce_int_list(merged.get("seeds"), "seeds", problems, defaults.seeds),
        trials=_coerce(merged, "trials", int, problems, defaults.trials),
        metric=str(merged.get("metric") or defaults.metric),
        output_path=Path(str(merged.get("output_path") or defaults.output_path)),
        workers=_coerce(merged, "workers", int, problems, defaults.workers),
        n_directions=_coerce(merged, "n_directions", int, problems, defaults.n_directions),
        reference_size=_coerce(merged, "reference_size", int, problems, defaults.reference_size),
        m_grid=_coerce(merged, "m_grid", int, problems, defaults.m_grid),
        psi_per_instance=_coerce(merged, "psi_per_instance", int, problems, defaults.psi_per_instance),
        instances=_coerce(merged, "instances", int, problems, defaults.instances),
        radius=_coerce(merged, "radius", float, problems, defaults.radius),
        threshold=_coerce(merged, "threshold", float, problems, defaults.threshold),
        points_L=None if points_raw is None else _coerce(merged, "points_L", int, problems, None),
        record_timing=_coerce(merged, "record_timing", bool, problems, False),
        log_level=str(merged.get("log_level") or defaults.log_level),
        progress=_coerce(merged, "progress", bool, problems, False),
    )
    problems.extend(e for e in config.errors() if chosen or not e.startswith("Unknown experiment"))
    if problems:
        raise ConfigError(problems)
    return config


def load_config(
    config_path: str | Path,
    *,
    experiment: str | None = None,
    seed: int | None = None,
    workers: int | None = None,
    out_dir: str | Path | None = None,
    log_level: str | None = None,
    env: Mapping[str, str] | None = None,
) -> ExperimentConfig:
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"Cannot read config {path}: {exc}"]) from exc
    overrides = {
        "seeds": None if seed is None else [seed],
        "workers": workers,
        "output_path": out_dir,
        "log_level": log_level,
    }
    config = parse_config(text, experiment=experiment, env=env, overrides=overrides)
    config.config_path = path
    return config

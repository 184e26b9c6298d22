"""Declarative run configuration for the command-line interface.

One JSON file drives dataset generation, feature reports, and evaluation so
an experiment is a single reviewable artifact. Unknown keys anywhere are
rejected before any work happens.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .evaluation import EvalConfig, HEURISTIC_NAMES
from .features import FeatureSpec
from .models import ModelSpec
from .scenarios import SamplerConfig
from .tap import SolverOptions

CONFIG_VERSION = 1


@dataclass
class RunConfig:
    net_path: Path | None
    trips_path: Path | None
    solver: SolverOptions
    sampler: SamplerConfig
    sample_count: int
    max_attempts: int | None
    workers: int
    dataset_path: Path
    feature_spec: FeatureSpec
    select_k: int
    select_folds: int
    models: list
    eval_config: EvalConfig
    out_dir: Path
    raw: dict = field(repr=False, default_factory=dict)


def _require_mapping(value, where):
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected an object, got {type(value).__name__}")
    return value


def _take(section: dict, where: str, schema: dict) -> dict:
    unknown = sorted(set(section) - set(schema))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}; allowed keys {sorted(schema)}")
    out = {}
    for key, (kind, default) in schema.items():
        if key in section:
            value = section[key]
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if kind is not None and value is not None and not isinstance(value, kind):
                raise ConfigError(
                    f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, "
                    f"got {type(value).__name__}"
                )
            out[key] = value
        else:
            out[key] = default
    return out


def _parse_models(entries) -> list:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("models: expected a non-empty list")
    models = []
    for i, entry in enumerate(entries):
        where = f"models[{i}]"
        if isinstance(entry, str):
            if entry in HEURISTIC_NAMES:
                models.append(entry)
            else:
                # bare string model kinds get default tau and hyperparameters
                models.append(ModelSpec(kind=entry))
        elif isinstance(entry, dict):
            spec = _take(entry, where, {
                "kind": (str, None),
                "tau": (float, 0.05),
                "hyperparameters": (dict, {}),
            })
            if spec["kind"] is None:
                raise ConfigError(f"{where}: missing 'kind'")
            if spec["kind"] in HEURISTIC_NAMES:
                models.append(spec["kind"])
            else:
                models.append(ModelSpec(
                    kind=spec["kind"], tau=spec["tau"],
                    hyperparameters=spec["hyperparameters"],
                ))
        else:
            raise ConfigError(f"{where}: expected a string or object")
    return models


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(raw, base_dir=path.parent)


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    raw = _require_mapping(raw, "config")
    top = _take(raw, "config", {
        "version": (int, None),
        "network": (dict, None),
        "solver": (dict, {}),
        "sampler": (dict, {}),
        "workers": (int, 1),
        "dataset": (str, "dataset.jsonl"),
        "features": (dict, {}),
        "models": (list, ["csh", "cash", "csuph", {"kind": "gbt"}]),
        "eval": (dict, {}),
        "out_dir": (str, "report"),
    })
    if top["version"] != CONFIG_VERSION:
        raise ConfigError(f"config.version must be {CONFIG_VERSION}, got {top['version']}")

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    net_path = trips_path = None
    if top["network"] is not None:
        net = _take(top["network"], "network", {"net": (str, None), "trips": (str, None)})
        if (net["net"] is None) != (net["trips"] is None):
            raise ConfigError("network: provide both 'net' and 'trips', or neither")
        if net["net"] is not None:
            net_path = resolve(net["net"])
            trips_path = resolve(net["trips"])

    solver_kwargs = _take(top["solver"], "solver", {
        "gap_tolerance": (float, 1e-4),
        "max_iterations": (int, 20000),
        "line_search_tolerance": (float, 1e-8),
        "line_search_max_halvings": (int, 64),
    })
    try:
        solver = SolverOptions(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None

    sampler_section = _take(top["sampler"], "sampler", {
        "count": (int, 1000),
        "size_min": (int, 1),
        "size_max": (int, 10),
        "seed": (int, 0),
        "max_attempts": (int, None),
    })
    try:
        sampler = SamplerConfig(
            size_min=sampler_section["size_min"],
            size_max=sampler_section["size_max"],
            seed=sampler_section["seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"sampler: {exc}") from None
    if sampler_section["count"] < 1:
        raise ConfigError("sampler.count: n must be >= 1")

    features_section = _take(top["features"], "features", {
        "representation": (str, "combined"),
        "selected": (list, None),
        "include_csh": (bool, True),
        "select_k": (int, 9),
        "select_folds": (int, 5),
    })
    try:
        feature_spec = FeatureSpec(
            representation=features_section["representation"],
            selected=tuple(features_section["selected"]) if features_section["selected"] else None,
            include_csh=features_section["include_csh"],
        )
    except ValueError as exc:
        raise ConfigError(f"features: {exc}") from None

    try:
        models = _parse_models(top["models"])
    except (ConfigError,) as exc:
        raise
    except Exception as exc:  # ModelError from bad kinds/hyperparameters
        raise ConfigError(f"models: {exc}") from None

    eval_kwargs = _take(top["eval"], "eval", {
        "batch_size": (int, 200),
        "iterations": (int, 20),
        "tau": (float, 0.05),
        "time_cap_seconds": (float, 600.0),
        "time_cap_window": (int, 10),
        "seed": (int, 0),
    })
    try:
        eval_config = EvalConfig(**eval_kwargs)
    except ValueError as exc:
        raise ConfigError(f"eval: {exc}") from None

    if top["workers"] < 1:
        raise ConfigError("workers must be >= 1")

    return RunConfig(
        net_path=net_path,
        trips_path=trips_path,
        solver=solver,
        sampler=sampler,
        sample_count=sampler_section["count"],
        max_attempts=sampler_section["max_attempts"],
        workers=top["workers"],
        dataset_path=resolve(top["dataset"]),
        feature_spec=feature_spec,
        select_k=features_section["select_k"],
        select_folds=features_section["select_folds"],
        models=models,
        eval_config=eval_config,
        out_dir=resolve(top["out_dir"]),
        raw=raw,
    )

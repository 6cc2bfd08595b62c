"""Experiment configuration files.

An experiment config is a JSON object. Unknown keys anywhere are errors.
Relative paths resolve against the config file's directory.

.. code-block:: json

    {
      "preset": "desk",
      "seed": 7,
      "runs": 20,
      "conditions": ["EQUAL", "HOMOGENEOUS", "HETEROGENEOUS"],
      "results_dir": "results",
      "workers": 1,
      "simulation": {
        "horizon_days": 365,
        "arrival_rate": 1.0,
        "departure_rate": 0.005,
        "max_cycle_length": 3,
        "pra_enabled": true,
        "gumbel_edge_noise": false
      },
      "models": {"bt_params": "bt.json", "blp_params": "blp.json"},
      "generator": {"blood_freqs": {"O": 0.4814, "A": 0.3373, "B": 0.1428, "AB": 0.0385}}
    }

``preset`` ("desk" or "long") fills ``runs`` and ``horizon_days`` before
explicit keys are applied. ``models.blp_params`` is always required (ranks
are evaluated under sampled betas in every condition); ``models.bt_params``
is required when HOMOGENEOUS is requested.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .graph import GeneratorConfig
from .simulator import Condition

PRESETS: dict[str, dict[str, int]] = {
    "desk": {"runs": 20, "horizon_days": 365},
    "long": {"runs": 50, "horizon_days": 5 * 365},
}

_TOP_KEYS = {"preset", "seed", "runs", "conditions", "results_dir", "workers", "simulation", "models",
             "generator", "survey_in"}
_SIM_KEYS = {"horizon_days", "arrival_rate", "departure_rate", "max_cycle_length", "pra_enabled",
             "gumbel_edge_noise"}
_MODEL_KEYS = {"bt_params", "blp_params"}


@dataclass
class ExperimentConfig:
    seed: int = 0
    runs: int = 20
    conditions: tuple[Condition, ...] = tuple(Condition)
    results_dir: Path = Path("results")
    workers: int = 1
    horizon_days: int = 365
    arrival_rate: float = 1.0
    departure_rate: float = 0.005
    max_cycle_length: int = 3
    pra_enabled: bool = True
    gumbel_edge_noise: bool = False
    bt_params: Path | None = None
    blp_params: Path | None = None
    survey_in: Path | None = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    raw: dict[str, Any] = field(default_factory=dict)

    def echo(self) -> dict[str, Any]:
        """Config as written, minus the output location."""
        return {k: v for k, v in self.raw.items() if k != "results_dir"}


def _expect(errors: list[str], cond: bool, msg: str) -> None:
    if not cond:
        errors.append(msg)


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def parse_config(data: Any, base_dir: Path = Path("."), check_paths: bool = True) -> ExperimentConfig:
    """Validate a decoded config; raises ConfigError listing every problem."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for key in sorted(set(data) - _TOP_KEYS):
        errors.append(f"unknown key: {key}")
    sim = data.get("simulation", {})
    models = data.get("models", {})
    if not isinstance(sim, dict):
        errors.append("simulation: must be an object")
        sim = {}
    if not isinstance(models, dict):
        errors.append("models: must be an object")
        models = {}
    for key in sorted(set(sim) - _SIM_KEYS):
        errors.append(f"unknown key: simulation.{key}")
    for key in sorted(set(models) - _MODEL_KEYS):
        errors.append(f"unknown key: models.{key}")

    cfg = ExperimentConfig(raw=data)
    preset = data.get("preset")
    if preset is not None:
        if preset in PRESETS:
            cfg.runs = PRESETS[preset]["runs"]
            cfg.horizon_days = PRESETS[preset]["horizon_days"]
        else:
            errors.append(f"preset: unknown preset {preset!r} (choose from {sorted(PRESETS)})")

    if "seed" in data:
        _expect(errors, _is_int(data["seed"]) and data["seed"] >= 0, "seed: must be an integer >= 0")
        cfg.seed = data["seed"]
    if "runs" in data:
        _expect(errors, _is_int(data["runs"]) and data["runs"] >= 1, "runs: must be an integer >= 1")
        cfg.runs = data["runs"]
    if "workers" in data:
        _expect(errors, _is_int(data["workers"]) and data["workers"] >= 1, "workers: must be an integer >= 1")
        cfg.workers = data["workers"]
    if "conditions" in data:
        conds = data["conditions"]
        try:
            if not isinstance(conds, list) or not conds:
                raise ValueError
            cfg.conditions = tuple(Condition(c) for c in conds)
            if len(set(cfg.conditions)) != len(cfg.conditions):
                errors.append("conditions: duplicates are not allowed")
        except ValueError:
            errors.append(f"conditions: must be a non-empty list drawn from {[c.value for c in Condition]}")
    if "results_dir" in data:
        if isinstance(data["results_dir"], str):
            cfg.results_dir = base_dir / data["results_dir"]
        else:
            errors.append("results_dir: must be a string")

    if "horizon_days" in sim:
        _expect(errors, _is_int(sim["horizon_days"]) and sim["horizon_days"] >= 0,
                "simulation.horizon_days: must be an integer >= 0")
        cfg.horizon_days = sim["horizon_days"]
    if "arrival_rate" in sim:
        _expect(errors, _is_num(sim["arrival_rate"]) and sim["arrival_rate"] >= 0,
                "simulation.arrival_rate: must be a number >= 0")
        cfg.arrival_rate = sim["arrival_rate"]
    if "departure_rate" in sim:
        _expect(errors, _is_num(sim["departure_rate"]) and 0 <= sim["departure_rate"] <= 1,
                "simulation.departure_rate: must be a number in [0, 1]")
        cfg.departure_rate = sim["departure_rate"]
    if "max_cycle_length" in sim:
        _expect(errors, _is_int(sim["max_cycle_length"]) and sim["max_cycle_length"] >= 2,
                "simulation.max_cycle_length: must be an integer >= 2")
        cfg.max_cycle_length = sim["max_cycle_length"]
    for flag in ("pra_enabled", "gumbel_edge_noise"):
        if flag in sim:
            _expect(errors, isinstance(sim[flag], bool), f"simulation.{flag}: must be true or false")
            setattr(cfg, flag, sim[flag])

    for key in ("bt_params", "blp_params"):
        if key in models:
            if isinstance(models[key], str):
                setattr(cfg, key, base_dir / models[key])
            else:
                errors.append(f"models.{key}: must be a string path")
    if "survey_in" in data:
        if isinstance(data["survey_in"], str):
            cfg.survey_in = base_dir / data["survey_in"]
        else:
            errors.append("survey_in: must be a string path")
    if cfg.blp_params is None:
        errors.append("models.blp_params: required (donation ranks use sampled betas in every condition)")
    if Condition.HOMOGENEOUS in cfg.conditions and cfg.bt_params is None:
        errors.append("models.bt_params: required for the HOMOGENEOUS condition")
    if check_paths:
        for label, p in (("models.blp_params", cfg.blp_params), ("models.bt_params", cfg.bt_params),
                         ("survey_in", cfg.survey_in)):
            if p is not None and not p.exists():
                errors.append(f"{label}: file not found: {p}")

    if "generator" in data:
        try:
            cfg.generator = GeneratorConfig.from_dict(data["generator"])
        except (ConfigError, TypeError, AttributeError, ValueError) as exc:
            errors.append(f"generator: {exc}")

    if errors:
        raise ConfigError("invalid experiment config:\n" + "\n".join(f"  - {e}" for e in errors))
    return cfg


def load_config(path: str | Path, check_paths: bool = True) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return parse_config(data, path.parent, check_paths)

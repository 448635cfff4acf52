"""Experiment configuration: JSON files, command-line overrides, validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .divergence import BUILTINS
from .errors import ValidationError

COMMANDS = ("qsolve", "boundary-entropy", "criterion", "tmap", "tmap-inv", "sweep", "amenable",
            "kv", "walk-sim", "oracle-abel", "minimize-check")
FREE_GROUP_COMMANDS = frozenset(COMMANDS) - {"amenable"}


@dataclass
class ExperimentConfig:
    command: str
    d: int = 2
    p: list[float] | None = None
    uniform: bool = False
    lam: list[float] | None = None
    f: str = "kl"
    a: float = 0.4
    a_list: list[float] = field(default_factory=lambda: [0.9, 0.99, 0.999])
    depth: int = 2
    paths: int = 100_000
    samples: int = 1000
    sigma: float = 0.5
    seed: int = 0
    eps: float = 1e-6
    tol: float = 1e-12
    radius: int = 3
    n_list: list[int] = field(default_factory=lambda: [40, 400, 4000])
    k: int = 1
    walk: str = "lazy"
    format: str = "json"
    out: str | None = None
    timings: bool = False

    def to_json(self) -> dict:
        return asdict(self)

    def walk_half(self) -> list[float]:
        """Generator masses of the walk, in the form accepted by ``GeneratorMeasure``."""
        if self.uniform or self.p is None:
            return [1.0 / (2 * self.d)] * self.d
        return list(self.p)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _bad(name: str, msg: str) -> ValidationError:
    return ValidationError(f"config field {name!r}: {msg}")


def _as_float_list(name: str, value: Any) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise _bad(name, "expected a non-empty list of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _bad(name, f"entry {v!r} is not a number")
        out.append(float(v))
    return out


def _coerce(name: str, value: Any) -> Any:
    kind = _FIELD_TYPES[name]
    if value is None:
        if "None" in kind:
            return None
        raise _bad(name, "may not be null")
    if kind.startswith("list[float]"):
        return _as_float_list(name, value)
    if kind.startswith("list[int]"):
        vals = _as_float_list(name, value)
        if any(v != int(v) for v in vals):
            raise _bad(name, "expected integers")
        return [int(v) for v in vals]
    if kind == "bool":
        if not isinstance(value, bool):
            raise _bad(name, f"expected true/false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise _bad(name, f"expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _bad(name, f"expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise _bad(name, f"expected a string, got {value!r}")
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ValidationError(f"unknown config field(s): {', '.join(unknown)}")
    if "command" not in data:
        raise _bad("command", "missing")
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in data.items()})
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON experiment config."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data)


def merge(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply command-line values (``None`` means not given) on top of ``cfg``."""
    data = cfg.to_json()
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.command not in COMMANDS:
        raise _bad("command", f"unknown command {cfg.command!r}")
    if cfg.command in FREE_GROUP_COMMANDS and cfg.d < 2:
        raise _bad("d", "free-group commands need rank d >= 2")
    if cfg.f not in BUILTINS:
        raise _bad("f", f"unknown divergence {cfg.f!r}; choose from {sorted(BUILTINS)}")
    if not 0.0 < cfg.a < 1.0:
        raise _bad("a", f"must lie in the open interval (0, 1), got {cfg.a}")
    for a in cfg.a_list:
        if not 0.0 < a < 1.0:
            raise _bad("a_list", f"entry {a} outside the open interval (0, 1)")
    for name in ("p", "lam"):
        vals = getattr(cfg, name)
        if vals is None:
            continue
        if len(vals) not in (cfg.d, 2 * cfg.d):
            raise _bad(name, f"expected {cfg.d} (symmetric) or {2 * cfg.d} values")
        if any(v <= 0 for v in vals):
            raise _bad(name, "masses must be strictly positive")
        total = sum(vals) * (2 if len(vals) == cfg.d else 1)
        if abs(total - 1.0) > 1e-9:
            raise _bad(name, f"masses sum to {total!r}, not 1 (within 1e-9)")
    for name in ("depth", "paths", "samples", "radius", "k"):
        if getattr(cfg, name) < 1:
            raise _bad(name, "must be >= 1")
    if any(n < 1 for n in cfg.n_list):
        raise _bad("n_list", "entries must be >= 1")
    if not cfg.eps > 0 or not cfg.tol > 0 or not cfg.sigma > 0:
        raise ValidationError("config fields 'eps', 'tol' and 'sigma' must be positive")
    if cfg.walk not in ("lazy", "simple"):
        raise _bad("walk", "choose 'lazy' or 'simple'")
    if cfg.format not in ("json", "csv"):
        raise _bad("format", "choose 'json' or 'csv'")

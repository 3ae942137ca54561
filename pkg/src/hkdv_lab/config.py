"""Experiment configuration: a flat ``key = value`` file with a typed schema.

Keys are dotted paths (``grid.n``, ``data.family``); ``#`` starts a comment.
List values are comma separated. Validation runs before any compute and
reports the offending key.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

FAMILIES = ("gaussian", "gaussian_derivative", "custom")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    m: int = 4
    p: float | None = None  # perturbation exponent; None disables F
    coefficient: float = 0.0
    epsilon: float = 0.05  # target ||u_0||_Sigma
    family: str = "gaussian"
    width: float = 2.0  # Gaussian standard deviation
    samples: str | None = None  # .npy file for the custom family
    nonlinear: bool = True
    n: int = 32768
    length: float = 16384.0
    tol: float = 1e-9
    dt0: float = 0.05
    t_end: float = 500.0
    per_octave: int = 4
    velocities: tuple[float, ...] = (0.5, 1.0, 2.0)
    out: str = "hkdv_out"
    seed: int = 0

    def hash(self) -> str:
        """SHA-256 over the canonical JSON of every field except the output directory."""
        d = {k: v for k, v in self.to_dict().items() if k != "out"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["velocities"] = list(self.velocities)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **changes))


# key path -> (field name, parser)
def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_str(s: str) -> str | None:
    return None if s.strip().lower() in ("", "none") else s.strip()


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


SCHEMA: dict[str, tuple[str, Callable[[str], Any], str]] = {
    "model.m": ("m", int, "dispersion order, integer >= 4"),
    "model.p": ("p", _opt_float, "perturbation exponent p > m, or none"),
    "model.coefficient": ("coefficient", float, "perturbation coefficient c in F(u) = c|u|^{p-1}u"),
    "model.nonlinear": ("nonlinear", _bool, "false runs the free flow"),
    "data.epsilon": ("epsilon", float, "data size ||u_0||_Sigma, 0 <= eps < 1/(2m)"),
    "data.family": ("family", str, "gaussian | gaussian_derivative | custom"),
    "data.width": ("width", float, "Gaussian standard deviation"),
    "data.samples": ("samples", _opt_str, ".npy samples on the grid (custom family)"),
    "grid.n": ("n", int, "number of grid points, power of two"),
    "grid.L": ("length", float, "box length"),
    "solver.tol": ("tol", float, "step-doubling tolerance"),
    "solver.dt0": ("dt0", float, "initial step"),
    "solver.t_end": ("t_end", float, "final time"),
    "snapshots.per_octave": ("per_octave", int, "dyadic snapshots per doubling of t"),
    "probes.velocities": ("velocities", _floats, "packet velocities, comma separated"),
    "run.out": ("out", str, "output directory"),
    "run.seed": ("seed", int, "seed recorded for reproducibility"),
}
FIELD_TO_KEY = {f: k for k, (f, _, _) in SCHEMA.items()}


def parse_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    changes: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        changes.update(_parse_item(key, value))
    cfg = dataclasses.replace(base or ExperimentConfig(), **changes)
    return validate(cfg)


def _parse_item(key: str, value: str) -> dict[str, Any]:
    if key not in SCHEMA:
        raise ConfigError(key, f"unknown key (known: {', '.join(sorted(SCHEMA))})")
    name, parser, _ = SCHEMA[key]
    try:
        return {name: parser(value)}
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None


def apply_overrides(cfg: ExperimentConfig, items: dict[str, str]) -> ExperimentConfig:
    changes: dict[str, Any] = {}
    for k, v in items.items():
        changes.update(_parse_item(k, v))
    return validate(dataclasses.replace(cfg, **changes))


def load(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    return parse_text(text, base)


def dumps(cfg: ExperimentConfig) -> str:
    lines = []
    for key, (name, _, doc) in SCHEMA.items():
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        elif v is None:
            v = "none"
        lines.append(f"{key} = {v}  # {doc}")
    return "\n".join(lines) + "\n"


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def bad(name: str, msg: str):
        raise ConfigError(FIELD_TO_KEY[name], msg)

    if cfg.m < 4:
        bad("m", f"must be >= 4, got {cfg.m}")
    if cfg.p is not None:
        if not cfg.p > cfg.m:
            bad("p", f"must exceed m = {cfg.m}, got {cfg.p}")
        a = max((2 * cfg.m + 1 - 2 * cfg.p) / (2 * cfg.m), 0.0)
        if not a < 1 / (2 * cfg.m):
            bad("p", "perturbation too strong: shift a must stay below 1/(2m)")
        if cfg.epsilon > 1 / (2 * cfg.m) - a + 1e-12:
            bad("epsilon", f"with shift a = {a:.4g} epsilon must not exceed 1/(2m) - a = {1 / (2 * cfg.m) - a:.4g}")
    if not math.isfinite(cfg.coefficient):
        bad("coefficient", "must be finite")
    if not 0 <= cfg.epsilon < 1 / (2 * cfg.m):
        bad("epsilon", f"must lie in [0, 1/(2m)) = [0, {1 / (2 * cfg.m):.4g})")
    if cfg.family not in FAMILIES:
        bad("family", f"must be one of {FAMILIES}, got {cfg.family!r}")
    if cfg.family == "custom" and not cfg.samples:
        bad("samples", "custom family needs a samples file")
    if not cfg.width > 0:
        bad("width", "must be positive")
    if cfg.n < 16 or cfg.n & (cfg.n - 1):
        bad("n", f"must be a power of two >= 16, got {cfg.n}")
    if not cfg.length > 0:
        bad("length", "must be positive")
    if not 0 < cfg.tol < 1:
        bad("tol", "must lie in (0, 1)")
    if not cfg.dt0 > 0:
        bad("dt0", "must be positive")
    if not cfg.t_end > 0:
        bad("t_end", "must be positive")
    if cfg.per_octave < 1:
        bad("per_octave", "must be >= 1")
    if any(not v > 0 for v in cfg.velocities):
        bad("velocities", "velocities must be positive")
    return cfg


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SCHEMA",
    "parse_text",
    "load",
    "dumps",
    "validate",
    "apply_overrides",
]

"""Flat ``key = value`` run configuration with dotted namespaces."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .errors import ConfigError


def _finite_float(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"not a finite number: {text!r}")
    return val


def _strict_int(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}") from None


def _vector(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty vector")
    return tuple(_finite_float(p) for p in parts)


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ConfigError(f"expected one of {options}, got {text!r}")
        return text
    return parse


def _path(text: str) -> str:
    if not text:
        raise ConfigError("empty path")
    return text


# key -> (parser, default); None defaults mean "derived at run time"
SCHEMA = {
    "model.d": (_strict_int, 1),
    "model.alpha": (_finite_float, 4.0),
    "model.D": (_finite_float, None),
    "model.D_rel": (_finite_float, 0.8),
    "solver.L": (_finite_float, None),
    "solver.n": (_strict_int, None),
    "solver.dt": (_finite_float, None),
    "solver.t_end": (_finite_float, None),
    "solver.t_end_scaled": (_finite_float, 50.0),
    "solver.coupling": (_choice("explicit", "semi_implicit"), "explicit"),
    "solver.output_stride": (_strict_int, 50),
    "solver.cfl_max": (_finite_float, 100.0),
    "init.kind": (_choice("gibbs_tilt", "gaussian_bump", "mixture", "impulse"), "gibbs_tilt"),
    "init.eps": (_finite_float, 0.3),
    "init.u0": (_vector, None),
    "init.center": (_vector, None),
    "init.width": (_finite_float, 0.3),
    "init.weight": (_finite_float, 0.5),
    "phase.D_rel_min": (_finite_float, 0.5),
    "phase.D_rel_max": (_finite_float, 1.5),
    "phase.n_D": (_strict_int, 20),
    "phase.D_rel_values": (_vector, None),
    "phase.eps": (_finite_float, 1e-2),
    "phase.coercivity": (_choice("yes", "no"), "yes"),
    "linearize.n_samples": (_strict_int, 100),
    "linearize.eps_fd": (_finite_float, 1e-3),
    "linearize.n": (_strict_int, None),
    "rates.input": (_path, None),
    "rates.window": (_finite_float, 0.3),
    "rates.min_points": (_strict_int, 50),
    "rates.floor_rel": (_finite_float, 1e-10),
    "quad.rel_tol": (_finite_float, 1e-13),
    "quad.n_theta": (_strict_int, 64),
    "seed": (_strict_int, 0),
}


def format_value(val) -> str:
    if isinstance(val, tuple):
        return ",".join(repr(float(x)) for x in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


@dataclass
class RunConfig:
    """Parsed settings; ``values`` only holds keys that were set explicitly."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise KeyError(key)
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    def get(self, key: str, default=None):
        val = self[key]
        return default if val is None else val

    def is_set(self, key: str) -> bool:
        return key in self.values

    def set(self, key: str, text: str) -> None:
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        self.values[key] = SCHEMA[key][0](text.strip())

    def serialize(self) -> str:
        """Canonical text of the explicitly set keys (sorted), parseable by :func:`parse_config`."""
        return "".join(f"{k} = {format_value(self.values[k])}\n" for k in sorted(self.values))

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse ``key = value`` lines ('#' starts a comment) then apply ``key=value`` overrides."""
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        try:
            cfg.set(key, val)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        cfg.set(key, val)
    return cfg


def load_config(path: str | None, overrides=()) -> RunConfig:
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config(text, overrides)

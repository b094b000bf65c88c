"""Run configuration: an INI-style file with fixed sections and keys.

Every key has a default or is required by the command that reads it;
unknown sections and keys are rejected so that a typo cannot silently
change a run.  Two key families are open-ended: ``bins.<column>`` (bin
edges of a continuous column) and ``values.<column>`` (the declared value
order of a categorical column), both in ``[data]``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from .exceptions import ConfigError

METRICS = ("hamming", "l2", "erasure")

_KEYS = {
    "data": {"path", "private", "public"},
    "prior": {"alpha", "file"},
    "distortion": {"metric", "scale"},
    "solve": {"deltas", "k", "max_iters", "tol", "step_rule", "warm_start", "n_jobs"},
    "evaluate": {"mapping", "folds", "l2_penalty"},
    "bounds": {"second_prior", "grid_n", "grid_eps"},
    "synth": {"n", "shows", "fraction", "margin", "class_balance"},
    "run": {"seed", "out"},
}
_PREFIXED = {"data": ("bins.", "values.")}


def _floats(text: str, key: str) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str, key: str) -> Tuple[int, ...]:
    vals = _floats(text, key)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{key}: expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _names(text: str) -> Tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs; built by :func:`load_config`."""

    data_path: Optional[Path] = None
    private: Optional[str] = None
    public: Tuple[str, ...] = ()
    bins: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    values: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    alpha: float = 0.5
    prior_file: Optional[Path] = None
    metric: str = "hamming"
    scale: float = 1.0
    deltas: Tuple[float, ...] = (0.0,)
    k: int = 0
    max_iters: int = 5000
    tol: float = 1e-6
    step_rule: str = "line_search"
    warm_start: bool = True
    n_jobs: int = 1
    mapping: Optional[Path] = None
    folds: int = 10
    l2_penalty: float = 1e-3
    second_prior: Optional[Path] = None
    grid_n: Tuple[int, ...] = (1000, 10000)
    grid_eps: Tuple[float, ...] = (0.05, 0.1)
    synth_n: int = 1200
    synth_shows: int = 50
    synth_fraction: float = 1.0 / 3.0
    synth_margin: float = 0.35
    synth_balance: float = 0.61
    seed: int = 0
    out: Path = Path("out")

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if any(b < a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ConfigError("deltas must be nondecreasing")
        if not self.deltas or any(not math.isfinite(x) or x < 0 for x in self.deltas):
            raise ConfigError("deltas must be a nonempty list of nonnegative numbers")
        if self.k < 0:
            raise ConfigError("k must be nonnegative")
        if self.alpha < 0:
            raise ConfigError("alpha must be nonnegative")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if self.max_iters < 1 or not self.tol > 0:
            raise ConfigError("max_iters must be >= 1 and tol > 0")
        if self.step_rule not in ("line_search", "diminishing"):
            raise ConfigError(f"unknown step_rule {self.step_rule!r}")

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None) -> "RunConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if out is not None:
            kw["out"] = Path(out)
        return replace(self, **kw)


def parse_config(text: str, base_dir: Optional[Path] = None) -> RunConfig:
    """Parse configuration text; relative paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep column names as written
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key in _KEYS[section]:
                continue
            if any(key.startswith(p) and len(key) > len(p) for p in _PREFIXED.get(section, ())):
                continue
            raise ConfigError(f"unknown key {key!r} in [{section}]")

    def get(section, key, conv=str):
        if not cp.has_option(section, key):
            return None
        raw = cp.get(section, key).strip()
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None

    def path(section, key):
        p = get(section, key)
        if p is None or p == "":
            return None
        p = Path(p)
        return p if p.is_absolute() or base_dir is None else base_dir / p

    def boolean(text):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(text)

    kw = {}
    pairs = [
        ("data", "private", "private", str),
        ("data", "public", "public", _names),
        ("prior", "alpha", "alpha", float),
        ("distortion", "metric", "metric", str),
        ("distortion", "scale", "scale", float),
        ("solve", "deltas", "deltas", lambda t: _floats(t, "deltas")),
        ("solve", "k", "k", int),
        ("solve", "max_iters", "max_iters", int),
        ("solve", "tol", "tol", float),
        ("solve", "step_rule", "step_rule", str),
        ("solve", "warm_start", "warm_start", boolean),
        ("solve", "n_jobs", "n_jobs", int),
        ("evaluate", "folds", "folds", int),
        ("evaluate", "l2_penalty", "l2_penalty", float),
        ("bounds", "grid_n", "grid_n", lambda t: _ints(t, "grid_n")),
        ("bounds", "grid_eps", "grid_eps", lambda t: _floats(t, "grid_eps")),
        ("synth", "n", "synth_n", int),
        ("synth", "shows", "synth_shows", int),
        ("synth", "fraction", "synth_fraction", float),
        ("synth", "margin", "synth_margin", float),
        ("synth", "class_balance", "synth_balance", float),
        ("run", "seed", "seed", int),
    ]
    for section, key, name, conv in pairs:
        val = get(section, key, conv)
        if val is not None:
            kw[name] = val
    for section, key, name in [("data", "path", "data_path"), ("prior", "file", "prior_file"),
                               ("evaluate", "mapping", "mapping"), ("bounds", "second_prior", "second_prior"),
                               ("run", "out", "out")]:
        val = path(section, key)
        if val is not None:
            kw[name] = val
    if cp.has_section("data"):
        kw["bins"] = {k[5:]: _floats(v, k) for k, v in cp["data"].items() if k.startswith("bins.")}
        kw["values"] = {k[7:]: _names(v) for k, v in cp["data"].items() if k.startswith("values.")}
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


__all__ = ["RunConfig", "parse_config", "load_config", "METRICS"]

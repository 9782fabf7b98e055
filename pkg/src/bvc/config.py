"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .grid import GridSpec
from .norms import MorreyParams
from .potential import Potential
from .variation import TimeLadder

EXPERIMENTS = (
    "kernel-check",
    "g-envelope",
    "variation-selftest",
    "opnorm-biharmonic",
    "opnorm-schrodinger",
    "opnorm-poisson",
    "morrey-biharmonic",
    "morrey-schrodinger",
    "morrey-poisson",
    "gamma-table",
    "rh-check",
    "lemma25-check",
    "lemma26-check",
    "duhamel-check",
    "maximal-domination",
)


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "kernel-check"
    seed: int = 0
    d: int = 1
    m: int = 256
    box: float = 16.0
    potential: str = "family=periodic_bump amplitude=4 frequency=0.125 n=1 q0=2"
    ladder: str = "geometric:1,0.85,64"
    rho: float = 3.0
    p: tuple = (2.0,)
    lam: float = 0.5
    alpha: float = -1.0
    trials: int = 200
    out: str = "out"
    workers: int = 1
    sigma: float = 0.5
    nodes: int = 64
    substeps: int = 64
    band: int = 8
    radius_count: int = 24
    n_values: tuple = (1, 2, 3, 4, 5, 6)
    eta_max: float = 12.0
    t_count: int = 24
    q: tuple = (2.0, 4.0, 8.0)
    gamma_points: int = 64
    pairs: int = 200
    t_local: float = 0.1
    kernel_N: int = 2
    duhamel_t: float = 0.03
    plot: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.band < 3:
            raise ConfigError("band must be >= 3 so the test band stays below the grid Nyquist")
        # validate the composite pieces eagerly so bad configs fail before any work
        self.grid
        self.time_ladder
        self.morrey_params
        self.potential_obj

    @property
    def grid(self) -> GridSpec:
        try:
            return GridSpec(self.d, self.m, self.box)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def time_ladder(self) -> TimeLadder:
        try:
            return TimeLadder.parse(self.ladder)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def morrey_params(self) -> MorreyParams:
        try:
            return MorreyParams(p=self.p[0], lam=self.lam, alpha=self.alpha, n=self.d)
        except ValueError as exc:
            raise ConfigError(f"invalid Morrey parameters: {exc}") from None

    def morrey_for(self, p) -> MorreyParams:
        return MorreyParams(p=p, lam=self.lam, alpha=self.alpha, n=self.d)

    @property
    def potential_obj(self) -> Potential:
        try:
            return Potential.from_spec(self.potential)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"invalid potential: {exc}") from None

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def as_items(self):
        """Stable (key, text) pairs, written to the summary for provenance."""
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in ("out", "workers", "plot"):
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            out.append((f.name, str(v)))
        return out


_ALIASES = {"lambda": "lam", "output_dir": "out", "experiment_name": "experiment"}
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_TUPLE_PARSERS = {"p": _floats, "q": _floats, "n_values": _ints}


def _coerce(key, text):
    if key in _TUPLE_PARSERS:
        vals = _TUPLE_PARSERS[key](text)
        if not vals:
            raise ConfigError(f"{key} needs at least one value")
        return vals
    default = _FIELDS[key].default
    if isinstance(default, bool):
        low = str(text).strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ConfigError(f"{key} must be a boolean")
        return low in ("1", "true", "yes")
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {text!r}") from None
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {text!r}") from None
    return str(text)


def parse_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = _ALIASES.get(key.strip(), key.strip())
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value.strip())
    return out


def load_config(path=None, experiment=None, **overrides) -> ExperimentConfig:
    kw = {}
    if path is not None:
        try:
            kw.update(parse_text(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for k, v in overrides.items():
        if v is None:
            continue
        k = _ALIASES.get(k, k)
        if k not in _FIELDS:
            raise ConfigError(f"unknown key {k!r}")
        kw[k] = _coerce(k, v) if isinstance(v, str) else v
    if experiment is not None:
        kw["experiment"] = experiment
    return ExperimentConfig(**kw)

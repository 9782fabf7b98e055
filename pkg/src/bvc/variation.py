"""rho-variation seminorms over decreasing time ladders.

For samples ``w_0, ..., w_{m-1}`` along a ladder the seminorm is the maximum
over index subsequences ``i_0 < i_1 < ...`` of
``(sum_k |w_{i_k} - w_{i_{k+1}}|^rho)^{1/rho}``.  The dynamic programme keeps,
for every endpoint ``j``, the best sum of rho-th powers of a chain ending at
``j``; it is vectorised over trailing axes so a whole grid of time series is
processed at once.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import SampledField

BRUTE_FORCE_MAX = 16


class LadderError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TimeLadder:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        if t.size < 2:
            raise LadderError("a ladder needs at least two times")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise LadderError("ladder times must be positive and finite")
        if np.any(np.diff(t) >= 0):
            raise LadderError("ladder times must be strictly decreasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return self.times.size

    @classmethod
    def geometric(cls, t_max=1.0, ratio=0.85, count=64) -> "TimeLadder":
        if not 0 < ratio < 1:
            raise LadderError("ratio must lie in (0, 1)")
        return cls(t_max * ratio ** np.arange(int(count)))

    @classmethod
    def parse(cls, spec: str) -> "TimeLadder":
        """``geometric:t_max,ratio,count`` or an explicit comma list."""
        spec = spec.strip()
        if spec.startswith("geometric:"):
            parts = spec[len("geometric:"):].split(",")
            if len(parts) != 3:
                raise LadderError("geometric ladder needs t_max,ratio,count")
            return cls.geometric(float(parts[0]), float(parts[1]), int(parts[2]))
        try:
            return cls(np.array([float(p) for p in spec.split(",") if p.strip()]))
        except ValueError as exc:
            raise LadderError(f"cannot parse ladder {spec!r}: {exc}") from None

    def refine(self) -> "TimeLadder":
        """Insert the geometric midpoint between neighbours (density doubling)."""
        t = self.times
        mids = np.sqrt(t[:-1] * t[1:])
        out = np.empty(2 * t.size - 1)
        out[0::2], out[1::2] = t, mids
        return TimeLadder(out)


@dataclass(frozen=True)
class VariationParams:
    rho: float = 3.0

    def __post_init__(self):
        if not self.rho > 1:
            raise ValueError(f"rho must be > 1, got {self.rho}")
        if self.rho <= 2:
            warnings.warn("rho <= 2 is outside the range covered by the variation theorems", stacklevel=2)

    @property
    def outside_theorem_range(self) -> bool:
        return self.rho <= 2


def _check_samples(samples):
    w = np.asarray(samples, dtype=float)
    if w.ndim == 0 or w.shape[0] == 0:
        raise ValueError("need at least one sample")
    if np.any(np.isnan(w)):
        raise ValueError("samples contain NaN")
    return w


def variation_power(samples, rho) -> np.ndarray:
    """max over subsequences of sum |increment|^rho, along axis 0."""
    w = _check_samples(samples)
    m = w.shape[0]
    best = np.zeros_like(w)
    for j in range(1, m):
        cand = best[:j] + np.abs(w[:j] - w[j]) ** rho
        # strict improvement only, so ties keep the earlier (shorter) chain
        best[j] = cand.max(axis=0)
    return best.max(axis=0)


def _normalized(w):
    """Samples shifted and scaled into [0, 1] per series, and the scale.

    Powers of tiny or huge increments would under- or overflow; the seminorm
    is homogeneous, so it is computed on the unit range and rescaled.
    """
    lo = w.min(axis=0)
    scale = w.max(axis=0) - lo
    safe = np.where(scale > 0, scale, 1.0)
    return (w - lo) / safe, scale


def rho_variation_seminorm(samples, params: VariationParams, ladder: TimeLadder | None = None):
    """E_rho seminorm of the samples (axis 0 runs along the ladder)."""
    w = _check_samples(samples)
    if ladder is not None and w.shape[0] != len(ladder):
        raise ValueError(f"{w.shape[0]} samples for a ladder of length {len(ladder)}")
    u, scale = _normalized(w)
    out = scale * variation_power(u, params.rho) ** (1.0 / params.rho)
    return float(out) if np.ndim(out) == 0 else out


_MASK_CACHE: dict[int, np.ndarray] = {}


def _subsequence_masks(m):
    if m not in _MASK_CACHE:
        _MASK_CACHE[m] = np.array(list(itertools.product((False, True), repeat=m)), dtype=bool)
    return _MASK_CACHE[m]


def brute_force_seminorm(samples, params: VariationParams) -> float:
    """Exhaustive maximum over all 2^m subsequences (m <= 16)."""
    w = _check_samples(samples)
    if w.ndim != 1:
        raise ValueError("brute force takes a single series")
    m = w.size
    if m > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_MAX} samples")
    w, scale = _normalized(w)
    masks = _subsequence_masks(m)
    # walk left to right keeping the last chosen value per subsequence; the
    # additions happen in the same order as in the dynamic programme
    total = np.zeros(len(masks))
    last = np.full(len(masks), np.nan)
    for j in range(m):
        pick = masks[:, j]
        has_prev = pick & ~np.isnan(last)
        total[has_prev] += np.abs(last[has_prev] - w[j]) ** params.rho
        last[pick] = w[j]
    return float(scale * total.max() ** (1.0 / params.rho))


def _stack(evolve, ladder: TimeLadder):
    fields = [evolve(t) for t in ladder.times]
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("all evolved fields must share one grid")
    return grid, np.stack([f.values for f in fields])


def variation_field(evolve, ladder: TimeLadder, params: VariationParams) -> SampledField:
    """Pointwise rho-variation of t -> evolve(t) restricted to the ladder."""
    grid, series = _stack(evolve, ladder)
    return SampledField(grid, rho_variation_seminorm(series, params))


def variation_from_series(grid, series, params: VariationParams) -> SampledField:
    return SampledField(grid, rho_variation_seminorm(series, params))


def square_function_field(evolve, ladder: TimeLadder) -> SampledField:
    """(sum_i |T_{t_i} f - T_{t_{i+1}} f|^2)^{1/2} over the fixed ladder."""
    grid, series = _stack(evolve, ladder)
    return SampledField(grid, np.sqrt(np.sum(np.diff(series, axis=0) ** 2, axis=0)))

"""Lebesgue, maximal and Morrey-type norms of grid fields.

Ball integrals on the torus are circular convolutions of ``|f|^p`` with the
indicator of ``{periodic distance <= r}``; one FFT of the data is shared by
every radius.  A ball only changes when ``r`` crosses an achievable grid
distance, and ``r^{-lambda}`` decreases in ``r``, so each scanned radius is
snapped down to the nearest achievable distance: that is where the scanned
quantity is largest for the same set of cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, SampledField

DEFAULT_RADII = 24


@dataclass(frozen=True)
class MorreyParams:
    p: float = 2.0
    lam: float = 0.5
    alpha: float = 0.0
    n: int = 1

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("p must be >= 1")
        if not 0 <= self.lam < self.n:
            raise ValueError(f"lambda must lie in [0, n) = [0, {self.n}), got {self.lam}")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


def lp_norm(f: SampledField, p) -> float:
    a = np.abs(f.values)
    if p == math.inf or p == "inf":
        return float(a.max())
    if not p >= 1:
        raise ValueError("p must be >= 1 or inf")
    return float((f.grid.cell_volume * np.sum(a**p)) ** (1.0 / p))


def max_radius(grid: GridSpec) -> float:
    """Largest periodic distance on the grid: every ball beyond it is the whole torus."""
    return float(grid.index_offsets().max())


def achievable_distances(grid: GridSpec) -> np.ndarray:
    return np.unique(grid.index_offsets())


def scan_radii(grid: GridSpec, count=DEFAULT_RADII, r_min=None, r_max=None) -> np.ndarray:
    """``count`` log-spaced radii in [r_min, r_max], snapped down to achievable distances."""
    if count < 2:
        raise ValueError("need at least two radii")
    r_min = grid.h if r_min is None else r_min
    r_max = max_radius(grid) if r_max is None else min(r_max, max_radius(grid))
    if not 0 < r_min <= r_max:
        raise ValueError("need 0 < r_min <= r_max")
    dist = achievable_distances(grid)
    raw = np.geomspace(r_min, r_max, count)
    # tolerance guards exact distances against rounding in geomspace
    idx = np.searchsorted(dist, raw * (1 + 1e-12), side="right") - 1
    snapped = dist[np.clip(idx, 0, None)]
    return np.unique(snapped[snapped > 0])


class BallSums:
    """Sums of a nonnegative field over every periodic ball of a given radius."""

    def __init__(self, grid: GridSpec, values):
        self.grid = grid
        self._axes = tuple(range(grid.d))
        self._spec = np.fft.rfftn(np.asarray(values, dtype=float), axes=self._axes)
        self._offsets = grid.index_offsets()

    def stencil(self, r):
        return self._offsets <= r * (1 + 1e-12)

    def count(self, r) -> int:
        return int(self.stencil(r).sum())

    def sums(self, r) -> np.ndarray:
        """Sum over cells within distance r of each centre (no cell volume)."""
        kern = np.fft.rfftn(self.stencil(r).astype(float), axes=self._axes)
        out = np.fft.irfftn(self._spec * kern, s=self.grid.shape, axes=self._axes)
        return np.maximum(out, 0.0)


def maximal_function(f: SampledField, radius_count=16) -> SampledField:
    """Centred maximal function over the single cell and log-spaced periodic balls."""
    if radius_count < 4:
        raise ValueError("radius_count must be >= 4")
    a = np.abs(f.values)
    bs = BallSums(f.grid, a)
    out = a.copy()
    for r in scan_radii(f.grid, radius_count):
        np.maximum(out, bs.sums(r) / bs.count(r), out=out)
    return f.with_values(out)


def _morrey_scan(f: SampledField, params: MorreyParams, radius_count, r_max, weight):
    grid = f.grid
    bs = BallSums(grid, np.abs(f.values) ** params.p)
    best = 0.0
    for r in scan_radii(grid, radius_count, r_max=r_max):
        vals = bs.sums(r) * grid.cell_volume * r ** (-params.lam)
        if weight is not None:
            vals = vals * weight(r)
        best = max(best, float(vals.max()))
    return best ** (1.0 / params.p)


def morrey_norm(f: SampledField, params: MorreyParams, radius_count=DEFAULT_RADII, r_max=None) -> float:
    """(sup_{x0, r} r^{-lambda} int_{B(x0, r)} |f|^p)^{1/p} over all centres and scanned radii."""
    return _morrey_scan(f, params, radius_count, r_max, None)


def morrey_potential_norm(f: SampledField, params: MorreyParams, gamma, radius_count=DEFAULT_RADII,
                          r_max=None) -> float:
    """Morrey scan with the extra factor (1 + r / gamma(x0))^alpha.

    ``gamma`` is the critical radius at every grid point (``inf`` for V = 0).
    """
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), f.grid.shape)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive (inf allowed)")
    alpha = params.alpha

    def weight(r):
        return (1.0 + r / gamma) ** alpha

    return _morrey_scan(f, params, radius_count, r_max, weight)


def refinement_delta(coarse: float, fine: float) -> float:
    if coarse == 0:
        return 0.0 if fine == 0 else math.inf
    return abs(fine - coarse) / abs(coarse)

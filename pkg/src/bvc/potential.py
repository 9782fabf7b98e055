"""Potentials, reverse-Hoelder estimates and the critical radius.

The critical radius is

    gamma(x) = sup { r > 0 : r^{2-n} int_{B(x, r)} V <= 1 },

computed by a logarithmic scan followed by bisection on the last crossing of
the level 1.  Ball integrals are exact or quadrature based depending on the
family:

* constant and power (``coef |x|^a``) families are radial, so a ball around an
  off-origin centre is integrated shell by shell with the fraction of each
  sphere that lies inside the ball (a regularised incomplete beta function);
* periodic bumps and sampled fields in one dimension use cumulative cell
  tables, so any interval is integrated exactly up to per-cell quadrature;
* non-radial families in two or three dimensions use a polar product rule.
"""

from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy import special
from scipy.ndimage import map_coordinates

from .grid import GridSpec, SampledField
from .reports import BoundSweepReport, build_points, make_report
from .specfun import A1, ball_volume, gauss_legendre_panels, sphere_area

FAMILIES = ("constant", "power", "periodic_bump", "sampled")
RH_FLAG_LIMIT = 1e6
R_MIN, R_MAX = 1e-6, 1e6
SCAN_PER_DECADE = 12
# balls wider than this many periods are replaced by mean(V)|B| in n >= 2
_HOMOGENIZE_PERIODS = 4.0


class PotentialError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Potential:
    family: str
    n: int = 1
    q0: float = 2.0
    c: float = 1.0
    a: float = 2.0
    coef: float = 1.0
    amplitude: float = 4.0
    frequency: float = 0.125
    field: SampledField | None = None
    A: float = A1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PotentialError(f"unknown potential family {self.family!r}")
        if int(self.n) != self.n or self.n < 1:
            raise PotentialError(f"n must be a positive integer, got {self.n}")
        if not self.q0 > 0:
            raise PotentialError("q0 must be positive")
        if self.family == "constant" and self.c < 0:
            raise PotentialError("constant potential must be >= 0")
        if self.family == "power":
            if self.coef < 0:
                raise PotentialError("power coefficient must be >= 0")
            if not self.a > -1.0:
                raise PotentialError("power exponent must be > -1 for local integrability")
        if self.family == "periodic_bump":
            if self.amplitude < 0:
                raise PotentialError("bump amplitude must be >= 0")
            if not self.frequency > 0:
                raise PotentialError("bump frequency must be > 0")
        if self.family == "sampled":
            if self.field is None:
                raise PotentialError("sampled potential needs a field")
            if self.field.grid.d != self.n:
                raise PotentialError("sampled field dimension must equal n")
            if np.any(self.field.values < 0):
                raise PotentialError("sampled potential must be >= 0")
            if self.n > 3:
                raise PotentialError("sampled potentials are limited to n <= 3")
        if self.family == "periodic_bump" and self.n > 3:
            raise PotentialError("periodic bumps are limited to n <= 3")

    # ------------------------------------------------------------- metadata

    @classmethod
    def from_spec(cls, text: str, **overrides) -> "Potential":
        """Parse ``family=power a=2 n=5 q0=3``; ``field=PATH`` loads a BVC1 file."""
        kw = {}
        for tok in shlex.split(text):
            if "=" not in tok:
                raise PotentialError(f"expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            kw[k.strip()] = v.strip()
        kw.update({k: str(v) for k, v in overrides.items() if v is not None})
        if "family" not in kw:
            raise PotentialError("potential spec needs family=...")
        args = {"family": kw.pop("family")}
        for k, v in kw.items():
            if k == "n":
                args["n"] = int(v)
            elif k == "field":
                args["field"] = SampledField.load(v)
            elif k in ("q0", "c", "a", "coef", "amplitude", "frequency", "A"):
                args[k] = float(v)
            else:
                raise PotentialError(f"unknown potential key {k!r}")
        return cls(**args)

    @property
    def delta(self) -> float:
        return 2.0 - self.n / self.q0

    @property
    def A4(self) -> float:
        return min(self.A, A1)

    @property
    def in_theorem_regime(self) -> bool:
        return self.n >= 5 and self.q0 > self.n / 2.0

    @property
    def is_radial(self) -> bool:
        return self.family in ("constant", "power")

    @property
    def is_zero(self) -> bool:
        if self.family == "constant":
            return self.c == 0
        if self.family == "power":
            return self.coef == 0
        if self.family == "periodic_bump":
            return self.amplitude == 0
        return not np.any(self.field.values)

    @property
    def period(self) -> float:
        if self.family == "periodic_bump":
            return 1.0 / self.frequency
        if self.family == "sampled":
            return self.field.grid.box
        return math.inf

    @property
    def mean_value(self) -> float:
        """Average over one period (non-radial families)."""
        if self.family == "periodic_bump":
            return 0.5 * self.amplitude
        if self.family == "sampled":
            return float(np.mean(self.field.values))
        raise PotentialError("mean value only defined for periodic families")

    # ------------------------------------------------------------ evaluation

    def radial(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "constant":
            return np.full(s.shape, float(self.c))
        if self.family == "power":
            with np.errstate(divide="ignore"):
                return self.coef * s**self.a
        raise PotentialError(f"{self.family} is not radial")

    def __call__(self, points):
        """V at points with a trailing coordinate axis (missing axes are zero)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0:
            pts = pts[None]
        if self.is_radial:
            return self.radial(np.sqrt(np.sum(pts**2, axis=-1)))
        if self.family == "periodic_bump":
            s = np.sin(2.0 * np.pi * self.frequency * pts) ** 2
            # average over the n ambient coordinates; absent ones contribute sin(0)
            return self.amplitude * np.sum(s, axis=-1) / self.n
        return self._interp(pts)

    def _interp(self, pts):
        grid = self.field.grid
        if pts.shape[-1] != grid.d:
            raise PotentialError("points must have the sampled field's dimension")
        idx = (pts + 0.5 * grid.box) / grid.h
        if grid.d == 1:
            i = idx[..., 0]
            lo = np.floor(i)
            frac = i - lo
            lo = lo.astype(np.int64) % grid.m
            v = self.field.values
            return (1.0 - frac) * v[lo] + frac * v[(lo + 1) % grid.m]
        coords = np.moveaxis(idx, -1, 0).reshape(grid.d, -1)
        out = map_coordinates(self.field.values, coords, order=1, mode="grid-wrap")
        return out.reshape(pts.shape[:-1])

    def sample(self, grid: GridSpec) -> SampledField:
        if self.family == "sampled":
            if grid == self.field.grid:
                return self.field
            return SampledField(grid, self._interp(_embed(grid.points(), self.n)))
        return SampledField(grid, self(grid.points()))

    # ----------------------------------------------------- 1-D cell tables

    @cached_property
    def _cell_table(self):
        """(origin, period, cell width, cumulative integrals per power) for n = 1."""
        if self.family == "periodic_bump":
            return 0.0, self.period, 64, 8
        grid = self.field.grid
        return -0.5 * grid.box, grid.box, grid.m, 4

    def _cumulative(self, q):
        cache = self.__dict__.setdefault("_cum_cache", {})
        if q not in cache:
            origin, period, cells, order = self._cell_table
            width = period / cells
            x, w = gauss_legendre_panels(origin, origin + period, cells, order)
            per_cell = (self(x[:, None]) ** q * w).reshape(cells, order).sum(axis=1)
            cache[q] = np.concatenate([[0.0], np.cumsum(per_cell)])
        return cache[q]

    def _antiderivative(self, u, q):
        """int_{origin}^{u} V^q for n = 1 periodic families."""
        origin, period, cells, order = self._cell_table
        width = period / cells
        cum = self._cumulative(q)
        u = np.asarray(u, dtype=float)
        rel = u - origin
        k = np.floor(rel / period)
        rem = rel - k * period
        j = np.minimum(np.floor(rem / width).astype(np.int64), cells - 1)
        left = origin + j * width
        part = rem - j * width
        xg, wg = np.polynomial.legendre.leggauss(order)
        nodes = left[..., None] + 0.5 * part[..., None] * (xg + 1.0)
        partial = np.sum(self(nodes[..., None]) ** q * wg, axis=-1) * 0.5 * part
        return k * cum[-1] + cum[j] + partial


def _embed(pts, n):
    d = pts.shape[-1]
    if d == n:
        return pts
    if d > n:
        raise PotentialError(f"cannot embed {d}-dimensional points in R^{n}")
    pad = np.zeros(pts.shape[:-1] + (n - d,))
    return np.concatenate([pts, pad], axis=-1)


def _center(V: Potential, center):
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.ndim != 1:
        raise PotentialError("center must be a single point")
    return _embed(c, V.n)


# ---------------------------------------------------------- ball integrals


def _cap_fraction(n, s, d, r):
    """Fraction of the sphere |y| = s inside B(c, r) with |c| = d > 0 (n >= 2)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        u0 = (s**2 + d**2 - r**2) / (2.0 * s * d)
    u0 = np.clip(u0, -1.0, 1.0)
    half = 0.5 * special.betainc((n - 1) / 2.0, 0.5, 1.0 - u0**2)
    return np.where(u0 >= 0, half, 1.0 - half)


def _smoothstep_rule(a, b, panels=8, order=16):
    """GL nodes on [a, b] (broadcast over rows) after s = a + (b-a)(3tau^2 - 2tau^3)."""
    tau, w = gauss_legendre_panels(0.0, 1.0, panels, order)
    a = np.asarray(a, float)[..., None]
    b = np.asarray(b, float)[..., None]
    s = a + (b - a) * (3 * tau**2 - 2 * tau**3)
    ws = (b - a) * 6 * tau * (1 - tau) * w
    return s, ws


def _power_ball_integral(V, d, radii, q, method):
    n, p = V.n, V.a * q
    coefq = V.coef**q
    r = radii
    if n == 1:
        def F(u):
            return np.sign(u) * np.abs(u) ** (p + 1) / (p + 1)

        if method == "quadrature":
            lo, hi = d - r, d + r
            # split at the origin where |y|^p may be singular
            out = np.zeros_like(r)
            for a_, b_ in ((np.minimum(lo, 0), np.minimum(hi, 0)), (np.maximum(lo, 0), np.maximum(hi, 0))):
                s, ws = _smoothstep_rule(a_, b_)
                out += np.sum(np.abs(s) ** p * ws, axis=-1)
            return coefq * out
        return coefq * (F(d + r) - F(d - r))
    area = sphere_area(n)
    inner = np.maximum(r - d, 0.0)
    if method == "quadrature" or d == 0:
        if method == "quadrature":
            s, ws = _smoothstep_rule(np.zeros_like(inner), inner)
            inner_val = np.sum(s ** (n - 1 + p) * ws, axis=-1)
        else:
            inner_val = inner ** (n + p) / (n + p)
    else:
        inner_val = inner ** (n + p) / (n + p)
    if d == 0:
        return coefq * area * inner_val
    lo, hi = np.abs(r - d), r + d
    s, ws = _smoothstep_rule(lo, hi, panels=16)
    frac = _cap_fraction(n, s, d, r[:, None])
    cap = np.sum(s ** (n - 1 + p) * frac * ws, axis=-1)
    return coefq * area * (inner_val + cap)


def _polar_rule(n, r, radial_nodes, angular_nodes):
    """Nodes (N, n) and weights for the ball B(0, r) in n = 2, 3."""
    s, ws = gauss_legendre_panels(0.0, r, max(1, radial_nodes // 8), 8)
    if n == 2:
        th = 2.0 * np.pi * np.arange(angular_nodes) / angular_nodes
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        wdir = np.full(angular_nodes, 2.0 * np.pi / angular_nodes)
    else:
        u, wu = np.polynomial.legendre.leggauss(max(8, angular_nodes // 2))
        ph = 2.0 * np.pi * np.arange(angular_nodes) / angular_nodes
        su = np.sqrt(1.0 - u**2)
        dirs = np.stack(
            [np.outer(su, np.cos(ph)), np.outer(su, np.sin(ph)), np.outer(u, np.ones_like(ph))], axis=-1
        ).reshape(-1, 3)
        wdir = np.outer(wu, np.full(angular_nodes, 2.0 * np.pi / angular_nodes)).ravel()
    pts = s[:, None, None] * dirs[None, :, :]
    w = (ws * s ** (n - 1))[:, None] * wdir[None, :]
    return pts.reshape(-1, n), w.ravel()


def _product_ball_integral(V, center, r, q, rtol=1e-7):
    period = V.period
    if r > _HOMOGENIZE_PERIODS * period:
        return _mean_power(V, q) * ball_volume(V.n) * r**V.n
    per = max(1.0, r / period)
    radial, angular = int(16 * math.ceil(per)), int(32 * math.ceil(per))
    prev = None
    for _ in range(5):
        pts, w = _polar_rule(V.n, r, radial, angular)
        cur = float(np.sum(V(center + pts) ** q * w))
        if prev is not None and abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev, radial, angular = cur, 2 * radial, 2 * angular
    return cur


def _mean_power(V, q):
    if V.family == "sampled":
        return float(np.mean(V.field.values**q))
    # mean of (A/n sum sin^2)^q over a period cell by a tensor trapezoid
    k = 64
    th = np.arange(k) / (k * V.frequency)
    axes = np.meshgrid(*([th] * V.n), indexing="ij")
    pts = np.stack(axes, axis=-1)
    return float(np.mean(V(pts) ** q))


def ball_integral(V: Potential, center, radii, q=1.0, method="auto"):
    """int_{B(center, r)} V^q for each radius (array in, array out)."""
    if method not in ("auto", "quadrature"):
        raise ValueError("method must be 'auto' or 'quadrature'")
    r = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise ValueError("radii must be positive and finite")
    if q < 1:
        raise ValueError("q must be >= 1")
    c = _center(V, center)
    if V.family == "constant":
        return float(V.c) ** q * ball_volume(V.n) * r**V.n
    if V.family == "power":
        return _power_ball_integral(V, float(np.linalg.norm(c)), r, q, method)
    if V.n == 1:
        return V._antiderivative(c[0] + r, q) - V._antiderivative(c[0] - r, q)
    return np.array([_product_ball_integral(V, c, float(ri), q) for ri in r])


def ball_average(V: Potential, center, r, q=1.0, method="auto") -> float:
    """((1/|B|) int_B V^q)^{1/q} over the ball B(center, r)."""
    if not r > 0:
        raise ValueError("r must be positive")
    if V.family == "constant":
        return float(V.c)
    total = float(ball_integral(V, center, [r], q, method)[0])
    return (max(total, 0.0) / (ball_volume(V.n) * r**V.n)) ** (1.0 / q)


# ------------------------------------------------------------- RH constant


@dataclass
class RHEstimate:
    value: float
    flag: str
    worst_center: np.ndarray
    worst_radius: float
    ratios: np.ndarray = dc_field(repr=False, default=None)

    def __float__(self):
        return self.value


def default_plan(V: Potential, centers=256, radii=16, seed=0):
    """Seeded (centers, radii) for the reverse-Hoelder scan."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    if V.family == "power":
        half, rs = 1.0, np.geomspace(1e-2, 1e1, radii)
    elif V.family == "periodic_bump":
        half, rs = V.period, np.geomspace(1e-2 * V.period, 2.0 * V.period, radii)
    elif V.family == "sampled":
        g = V.field.grid
        half, rs = 0.5 * g.box, np.geomspace(g.h, 0.5 * g.box, radii)
    else:
        half, rs = 1.0, np.geomspace(1e-2, 1e1, radii)
    cs = rng.uniform(-half, half, size=(centers, V.n))
    return cs, rs


def rh_constant_estimate(V: Potential, q, sample_plan=None) -> RHEstimate:
    """Empirical sup over a plan of ball_average(q) / ball_average(1)."""
    if V.family == "constant":
        return RHEstimate(1.0, "", np.zeros(V.n), 1.0, np.ones(1))
    centers, radii = default_plan(V) if sample_plan is None else sample_plan
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float)
    vol = ball_volume(V.n) * radii**V.n
    ratios = np.empty((len(centers), len(radii)))
    for i, c in enumerate(centers):
        avg_q = (np.maximum(ball_integral(V, c, radii, q), 0.0) / vol) ** (1.0 / q)
        avg_1 = np.maximum(ball_integral(V, c, radii, 1.0), 0.0) / vol
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[i] = np.where(avg_1 > 0, avg_q / avg_1, np.where(avg_q > 0, np.inf, 1.0))
    i, j = np.unravel_index(np.argmax(ratios), ratios.shape)
    value = float(ratios[i, j])
    flag = "rh_fail" if value > RH_FLAG_LIMIT else ""
    return RHEstimate(value, flag, centers[i], float(radii[j]), ratios)


# ---------------------------------------------------------- critical radius


@dataclass
class CriticalRadius:
    gamma: float
    iterations: int
    flag: str


def level_function(V: Potential, x, radii, method="auto"):
    """r^{2-n} int_{B(x, r)} V."""
    r = np.atleast_1d(np.asarray(radii, dtype=float))
    return r ** (2.0 - V.n) * ball_integral(V, x, r, 1.0, method)


def critical_radius_closed_form(V: Potential, x=None):
    """Closed form for constant V and for the power family at the origin, else None."""
    n = V.n
    if V.family == "constant":
        return math.inf if V.c == 0 else (V.c * ball_volume(n)) ** -0.5
    if V.family == "power" and (x is None or not np.any(_center(V, x))):
        if V.coef == 0:
            return math.inf
        return (n / (n + V.a) * V.coef * ball_volume(n)) ** (-1.0 / (V.a + 2.0))
    return None


def critical_radius_info(V: Potential, x, tol=1e-10, r_min=R_MIN, r_max=R_MAX,
                         method="auto", fast=True) -> CriticalRadius:
    if not tol > 0:
        raise ValueError("tol must be positive")
    if fast:
        closed = critical_radius_closed_form(V, x)
        if closed is not None:
            flag = "inf" if math.isinf(closed) else ""
            return CriticalRadius(closed, 0, flag)
    if V.is_zero:
        return CriticalRadius(math.inf, 0, "inf")
    decades = math.log10(r_max / r_min)
    radii = np.geomspace(r_min, r_max, int(round(decades * SCAN_PER_DECADE)) + 1)
    ok = level_function(V, x, radii, method) <= 1.0
    if ok[-1]:
        return CriticalRadius(math.inf, 0, "inf")
    if not np.any(ok):
        return CriticalRadius(0.0, 0, "zero")
    i = int(np.flatnonzero(ok)[-1])
    lo, hi = radii[i], radii[i + 1]
    it = 0
    while hi - lo > tol * lo and it < 200:
        mid = math.sqrt(lo * hi)
        if level_function(V, x, [mid], method)[0] <= 1.0:
            lo = mid
        else:
            hi = mid
        it += 1
    return CriticalRadius(0.5 * (lo + hi), it, "")


def critical_radius(V: Potential, x, tol=1e-10, **kw) -> float:
    return critical_radius_info(V, x, tol, **kw).gamma


def critical_radius_field(V: Potential, grid: GridSpec, tol=1e-8):
    """gamma at every grid point (points embedded in R^n); returns (gamma, iterations, flags)."""
    pts = grid.points().reshape(-1, grid.d)
    if V.family == "constant" or V.is_zero:
        info = critical_radius_info(V, pts[0], tol)
        gam = np.full(grid.shape, info.gamma)
        return gam, np.zeros(grid.shape, int), np.full(grid.shape, info.flag, dtype=object)
    out, its, flags = [], [], []
    for p in pts:
        info = critical_radius_info(V, p, tol)
        out.append(info.gamma)
        its.append(info.iterations)
        flags.append(info.flag)
    shape = grid.shape
    return np.array(out).reshape(shape), np.array(its).reshape(shape), np.array(flags, dtype=object).reshape(shape)


# -------------------------------------------------------- comparability


@dataclass
class ComparabilityReport:
    C: float
    k0: float
    feasible: bool
    worst_pair: tuple
    per_k0: dict
    flag: str = ""


def check_gamma_comparability(V: Potential, pairs, k0_grid=(0.5, 1, 2, 4, 8, 16), c_limit=1e6,
                              gammas=None) -> ComparabilityReport:
    """Smallest C over ``k0_grid`` such that both comparability inequalities hold on all pairs.

    For each pair (x, y) with r = |x - y| / gamma(x) the two inequalities are
    gamma(y) >= gamma(x) (1 + r)^{-k0} / C and gamma(y) <= C gamma(x) (1 + r)^{k0/(k0+1)}.
    ``gammas`` may pass precomputed (gamma(x), gamma(y)) arrays.
    """
    pairs = [(_center(V, x), _center(V, y)) for x, y in pairs]
    if gammas is None:
        gx = np.array([critical_radius(V, x) for x, _ in pairs])
        gy = np.array([critical_radius(V, y) for _, y in pairs])
    else:
        gx, gy = (np.asarray(g, dtype=float) for g in gammas)
    if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
        if np.all(np.isinf(gx)) and np.all(np.isinf(gy)):
            return ComparabilityReport(1.0, float(k0_grid[0]), True, (), {float(k): 1.0 for k in k0_grid}, "inf")
        raise PotentialError("comparability needs finite critical radii")
    dist = np.array([np.linalg.norm(x - y) for x, y in pairs])
    r = dist / gx
    per_k0, worst_idx = {}, {}
    for k0 in k0_grid:
        lower = gx * (1.0 + r) ** (-k0) / gy
        upper = gy / (gx * (1.0 + r) ** (k0 / (k0 + 1.0)))
        need = np.maximum(np.maximum(lower, upper), 1.0)
        per_k0[float(k0)] = float(need.max()) if need.size else 1.0
        worst_idx[float(k0)] = int(np.argmax(need)) if need.size else -1
    k_best = min(per_k0, key=lambda k: (per_k0[k], k))
    C = per_k0[k_best]
    feasible = bool(np.isfinite(C) and C <= c_limit)
    wi = worst_idx[k_best]
    worst = (pairs[wi][0], pairs[wi][1]) if wi >= 0 else ()
    return ComparabilityReport(C, k_best, feasible, worst, per_k0, "" if feasible else "infeasible")


# ---------------------------------------------------------------- lemma V


# e^{-A w^4} < 1e-25 beyond this w for A >= A1 / 2
_W_MAX = 4.0


def _radial_rule(n, A4):
    """Nodes/weights in rho for int_0^inf rho^{n-1} e^{-A4 rho^{4/3}} (.) drho via rho = w^3."""
    w, ww = gauss_legendre_panels(0.0, _W_MAX * (A1 / A4) ** 0.25, 16, 16)
    rho = w**3
    weight = 3.0 * w**2 * rho ** (n - 1) * np.exp(-A4 * w**4) * ww
    return rho, weight


def smoothed_square_integral(V: Potential, x, t, nodes=32):
    """int V(x + t^{1/4} z)^2 e^{-A4 |z|^{4/3}} dz (the t^{-n/4} is absorbed by z)."""
    n = V.n
    xc = _center(V, x)
    s = t**0.25
    rho, wr = _radial_rule(n, V.A4)
    if V.family == "constant":
        return float(V.c) ** 2 * sphere_area(n) * float(np.sum(wr))
    if n == 1:
        vals = V(xc[None, :] + s * rho[:, None]) ** 2 + V(xc[None, :] - s * rho[:, None]) ** 2
        return float(np.sum(vals * wr))
    if V.family == "power":
        # angular average of |x + s rho theta|^{2a} by Gauss-Jacobi in u = cos(angle)
        alpha = (n - 3) / 2.0
        u, wu = special.roots_jacobi(nodes, alpha, alpha)
        d = float(np.linalg.norm(xc))
        r2 = d**2 + (s * rho[:, None]) ** 2 + 2.0 * d * s * rho[:, None] * u[None, :]
        avg = (np.maximum(r2, 0.0) ** V.a * wu).sum(axis=1) / wu.sum()
        return float(V.coef**2 * sphere_area(n) * np.sum(avg * wr))
    if n == 2:
        th = 2.0 * np.pi * np.arange(64) / 64
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        wd = np.full(64, 2.0 * np.pi / 64)
    else:
        u, wu = np.polynomial.legendre.leggauss(32)
        ph = 2.0 * np.pi * np.arange(64) / 64
        su = np.sqrt(1.0 - u**2)
        dirs = np.stack([np.outer(su, np.cos(ph)), np.outer(su, np.sin(ph)), np.outer(u, np.ones(64))], -1)
        dirs = dirs.reshape(-1, 3)
        wd = np.outer(wu, np.full(64, 2.0 * np.pi / 64)).ravel()
    vals = V(xc + s * rho[:, None, None] * dirs[None, :, :]) ** 2
    return float(np.sum((vals * wd).sum(axis=1) * wr))


def constant_lemma_V_lhs(c, n, A4=A1):
    """Closed form of the smoothed integral for V = c."""
    return c**2 * sphere_area(n) * 0.75 * math.gamma(0.75 * n) * A4 ** (-0.75 * n)


def lemma_V_rhs(t, gamma, delta):
    return t**-1.0 * (t**0.25 / gamma) ** (2.0 * delta)


def _geometric_refine(t):
    t = np.sort(np.asarray(t, dtype=float))
    mids = np.sqrt(t[:-1] * t[1:])
    return np.sort(np.concatenate([t, mids]))


def _lemma_V_points(V: Potential, x, g, ts):
    if np.any(ts > g**4 * (1 + 1e-12)):
        raise ValueError(f"t exceeds gamma(x)^4 = {g**4:.4g} at x = {x}")
    lhs = np.array([smoothed_square_integral(V, x, t) for t in ts])
    rhs = lemma_V_rhs(ts, g, V.delta)
    return build_points(V.n, float(np.linalg.norm(x)), ts, ts**0.25 / g, lhs, rhs)


def check_lemma_V(V: Potential, x_list, t_grid, gammas=None, tol=0.01, relative=False) -> BoundSweepReport:
    """Ratios LHS/RHS with LHS = int V^2(y) t^{-n/4} e^{-A4 |x-y|^{4/3} t^{-1/3}} dy.

    ``stabilized`` compares the sweep maximum with the maximum after inserting
    geometric midpoints into the t grid (relative change < ``tol``).  The
    ``eta`` column holds t^{1/4} / gamma(x).  With ``relative`` the grid is
    read as fractions s in (0, 1] and each point uses t = s gamma(x)^4.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(t_grid <= 0):
        raise ValueError("t_grid must be a non-empty 1-D array of positive times")
    xs = [_center(V, x) for x in x_list]
    if gammas is None:
        gammas = [critical_radius(V, x) for x in xs]
    header = {"A4": V.A4, "n": V.n, "delta": V.delta, "theorem_regime": V.in_theorem_regime}

    def sweep(ts):
        pts = []
        for x, g in zip(xs, gammas):
            if relative:
                if np.any(ts > 1.0 + 1e-12):
                    raise ValueError("relative t grid must lie in (0, 1]")
                ts_x = ts * g**4
            else:
                ts_x = ts
            pts += _lemma_V_points(V, x, g, ts_x)
        return pts

    if V.is_zero:
        ts = t_grid
        pts = []
        for x in xs:
            pts += build_points(V.n, float(np.linalg.norm(x)), ts, np.zeros_like(ts), np.zeros_like(ts), ts**-1.0)
        return BoundSweepReport("V", pts, 0.0, True, header)
    coarse = sweep(t_grid)
    fine = sweep(_geometric_refine(t_grid))
    rep = make_report("V", coarse, header=header)
    fine_c = max(p.ratio for p in fine if not p.excluded)
    rep.stabilized = bool(abs(fine_c - rep.empirical_C) <= tol * rep.empirical_C)
    rep.header["refined_C"] = float(fine_c)
    return rep

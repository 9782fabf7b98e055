"""Evolution on the periodic grid.

* ``biharmonic_step``: exact spectral propagator of ``d_t u + Delta^2 u = 0``;
* ``schrodinger4_evolve``: Strang splitting for ``L = Delta^2 + V^2``;
* ``dense_*``: eigendecomposition oracle for ``exp(-t M)`` on 1-D grids, where
  ``M`` is the spectral biharmonic matrix plus ``diag(V^2)``;
* kernel columns, the locally truncated operator, the perturbation-formula
  residual and the subordinated Poisson operator built on top of those.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from threading import Lock

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .grid import GridSpec, SampledField
from .potential import Potential, critical_radius_field

DENSE_MAX_M = 512
POISSON_RULES = ("log-trapezoid", "exp-sinh", "laguerre")


class DenseLimitError(ValueError):
    pass


# ------------------------------------------------------------ spectral part


@lru_cache(maxsize=32)
def _rfft_symbol(grid: GridSpec) -> np.ndarray:
    """|xi|^4 on the half-spectrum layout of ``np.fft.rfftn``."""
    k_full = 2.0 * np.pi / grid.box * np.fft.fftfreq(grid.m, d=1.0 / grid.m)
    k_half = 2.0 * np.pi / grid.box * np.fft.rfftfreq(grid.m, d=1.0 / grid.m)
    axes = [k_full] * (grid.d - 1) + [k_half]
    mesh = np.meshgrid(*axes, indexing="ij")
    sym = sum(k**2 for k in mesh) ** 2
    sym.setflags(write=False)
    return sym


def _apply_multiplier(values, grid: GridSpec, mult):
    spec = np.fft.rfftn(values, axes=tuple(range(grid.d)))
    return np.fft.irfftn(spec * mult, s=grid.shape, axes=tuple(range(grid.d)))


def biharmonic_step(f: SampledField, t: float) -> SampledField:
    """exp(-t Delta^2) f, exact on the discretised problem."""
    if not t > 0:
        raise ValueError("t must be positive")
    mult = np.exp(-t * _rfft_symbol(f.grid))
    return f.with_values(_apply_multiplier(f.values, f.grid, mult))


def potential_values(V, grid: GridSpec) -> np.ndarray:
    """Samples of V on ``grid`` (Potential, SampledField, array or None)."""
    if V is None:
        vals = np.zeros(grid.shape)
    elif isinstance(V, Potential):
        vals = V.sample(grid).values
    elif isinstance(V, SampledField):
        if V.grid != grid:
            raise ValueError("potential lives on a different grid")
        vals = V.values
    else:
        vals = np.broadcast_to(np.asarray(V, dtype=float), grid.shape)
    if np.any(vals < 0):
        raise ValueError("potential samples must be nonnegative")
    if not np.all(np.isfinite(vals)):
        raise ValueError("potential samples must be finite")
    return np.asarray(vals, dtype=float)


def schrodinger4_evolve(f: SampledField, V, t: float, substeps: int = 64) -> SampledField:
    """Strang splitting: half potential step, full biharmonic step, half potential step."""
    if not t > 0:
        raise ValueError("t must be positive")
    if int(substeps) != substeps or substeps < 1:
        raise ValueError("substeps must be a positive integer")
    grid = f.grid
    v2 = potential_values(V, grid) ** 2
    if not np.any(v2):
        return biharmonic_step(f, t)
    dt = t / substeps
    half = np.exp(-0.5 * dt * v2)
    mult = np.exp(-dt * _rfft_symbol(grid))
    u = f.values
    for _ in range(substeps):
        u = half * _apply_multiplier(half * u, grid, mult)
    return f.with_values(u)


# --------------------------------------------------------------- dense part


def _check_dense(grid: GridSpec):
    if grid.d != 1:
        raise DenseLimitError("dense oracle needs a 1-D grid")
    if grid.m > DENSE_MAX_M:
        raise DenseLimitError(f"dense oracle is limited to m <= {DENSE_MAX_M}")


def dense_generator(grid: GridSpec, V=None) -> np.ndarray:
    """Symmetric matrix of the spectral biharmonic operator plus diag(V^2)."""
    _check_dense(grid)
    sym = grid.biharmonic_symbol()
    col = np.fft.ifft(sym).real
    idx = (np.arange(grid.m)[:, None] - np.arange(grid.m)[None, :]) % grid.m
    M = col[idx]
    M = 0.5 * (M + M.T)
    M[np.diag_indices(grid.m)] += potential_values(V, grid) ** 2
    return M


_EIG_CACHE: OrderedDict = OrderedDict()
_EIG_ZERO = 64 * np.finfo(float).eps
_EIG_LOCK = Lock()


def dense_eig(grid: GridSpec, V=None):
    """(eigenvalues, eigenvectors) of the dense generator, cached per (grid, V)."""
    _check_dense(grid)
    v = potential_values(V, grid)
    key = (grid, v.tobytes())
    with _EIG_LOCK:
        hit = _EIG_CACHE.get(key)
        if hit is not None:
            _EIG_CACHE.move_to_end(key)
            return hit
    lam, Q = np.linalg.eigh(dense_generator(grid, v))
    # the generator is positive semidefinite; eigenvalues within roundoff of zero
    # are zero (the square root in the Poisson multiplier would amplify them)
    lam[lam < _EIG_ZERO * lam[-1]] = 0.0
    lam.setflags(write=False)
    Q.setflags(write=False)
    with _EIG_LOCK:
        _EIG_CACHE[key] = (lam, Q)
        while len(_EIG_CACHE) > 8:
            _EIG_CACHE.popitem(last=False)
    return lam, Q


def dense_apply(f: SampledField, V, func) -> SampledField:
    """func(M) f for a spectral function ``func`` of the eigenvalues."""
    lam, Q = dense_eig(f.grid, V)
    return f.with_values(Q @ (func(lam) * (Q.T @ f.values)))


def dense_evolve(f: SampledField, V, t: float) -> SampledField:
    if not t > 0:
        raise ValueError("t must be positive")
    return dense_apply(f, V, lambda lam: np.exp(-t * lam))


def kernel_matrix(grid: GridSpec, V, t: float) -> np.ndarray:
    """B_t(x_i, y_j): exp(-tM) acting on unit-mass deltas (divided by the cell width)."""
    if not t > 0:
        raise ValueError("t must be positive")
    lam, Q = dense_eig(grid, V)
    return (Q * np.exp(-t * lam)) @ Q.T / grid.h


def heat_kernel_column(grid: GridSpec, V, t: float, y_index: int) -> SampledField:
    if not 0 <= y_index < grid.m:
        raise IndexError("y_index out of range")
    delta = np.zeros(grid.m)
    delta[y_index] = 1.0 / grid.h
    return dense_evolve(SampledField(grid, delta), V, t)


def heat_kernel_time_derivative(grid: GridSpec, V, t: float, y_index: int, rel_step=0.01) -> SampledField:
    """Centred difference in t with step ``rel_step * t``."""
    dt = rel_step * t
    plus = heat_kernel_column(grid, V, t + dt, y_index).values
    minus = heat_kernel_column(grid, V, t - dt, y_index).values
    return SampledField(grid, (plus - minus) / (2.0 * dt))


def grid_distance_matrix(grid: GridSpec) -> np.ndarray:
    x = grid.axis()
    return grid.periodic_distance(x[:, None], x[None, :])


def local_truncated_evolve(f: SampledField, V, t: float, gamma=None) -> SampledField:
    """Kernel of exp(-tL) restricted to |x - y| < gamma(x)."""
    grid = f.grid
    _check_dense(grid)
    if gamma is None:
        if isinstance(V, Potential):
            gamma = critical_radius_field(V, grid)[0]
        elif V is None or not np.any(potential_values(V, grid)):
            gamma = np.full(grid.shape, np.inf)
        else:
            raise ValueError("gamma must be given when V is not a Potential")
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), grid.shape)
    K = kernel_matrix(grid, V, t)
    mask = grid_distance_matrix(grid) < gamma[:, None]
    return f.with_values((K * mask) @ f.values * grid.h)


def l2_norm(values, grid: GridSpec) -> float:
    return float(math.sqrt(grid.cell_volume * np.sum(np.asarray(values) ** 2)))


def duhamel_residual(f: SampledField, V, t: float, s_nodes: int = 64) -> float:
    """L^2 norm of exp(-tL)f - exp(-t Delta^2)f + int_0^t exp(-(t-s)Delta^2) V^2 exp(-sL) f ds.

    The s-integral uses composite Simpson on ``s_nodes`` panels (even).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if int(s_nodes) != s_nodes or s_nodes < 4 or s_nodes % 2:
        raise ValueError("s_nodes must be an even integer >= 4")
    grid = f.grid
    lam, Q = dense_eig(grid, V)
    v2 = potential_values(V, grid) ** 2
    s = np.linspace(0.0, t, s_nodes + 1)
    coef = Q.T @ f.values
    U = Q @ (np.exp(-np.outer(lam, s)) * coef[:, None])  # columns exp(-s_k L) f
    W = v2[:, None] * U
    spec = np.fft.rfft(W, axis=0)
    spec *= np.exp(-np.outer(_rfft_symbol(grid), t - s))
    G = np.fft.irfft(spec, n=grid.m, axis=0)
    w = np.ones(s_nodes + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    integral = G @ w * (t / s_nodes / 3.0)
    full = U[:, -1]
    free = biharmonic_step(f, t).values
    return l2_norm(full - free + integral, grid)


# ----------------------------------------------------------- subordination


@dataclass(frozen=True)
class PoissonParams:
    sigma: float = 0.5
    nodes: int = 64
    rule: str = "log-trapezoid"

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if int(self.nodes) != self.nodes or self.nodes < 8:
            raise ValueError("nodes must be an integer >= 8")
        if self.rule not in POISSON_RULES:
            raise ValueError(f"rule must be one of {POISSON_RULES}")


@lru_cache(maxsize=64)
def gen_laguerre_rule(nodes: int, sigma: float):
    """Golub-Welsch nodes/weights for r^{sigma-1} e^{-r}, weights divided by Gamma(sigma)."""
    alpha = sigma - 1.0
    k = np.arange(nodes)
    diag = 2.0 * k + alpha + 1.0
    off = np.sqrt(k[1:] * (k[1:] + alpha))
    r, vecs = eigh_tridiagonal(diag, off)
    w = vecs[0] ** 2  # mu_0 = Gamma(sigma) cancels the 1/Gamma(sigma) prefactor
    return r, w


# integrand tails below e^{-38} are dropped by the exp-sinh truncation
_DE_EPS = 38.0
_DE_RIGHT = 42.0
# left end of the log-trapezoid window at a_min / 40, where e^{-a/r} <= e^{-40}
_LT_LEFT = 40.0


@lru_cache(maxsize=64)
def exp_sinh_rule(nodes: int, sigma: float):
    """Trapezoid nodes/weights in v for r = exp((pi/2) sinh v), weight r^{sigma-1} e^{-r} / Gamma(sigma)."""
    scale = 0.5 * np.pi
    vl = -math.asinh(_DE_EPS / sigma / scale)
    vr = math.asinh(math.log(_DE_RIGHT) / scale)
    v = np.linspace(vl, vr, nodes)
    h = v[1] - v[0]
    log_r = scale * np.sinh(v)
    r = np.exp(log_r)
    w = h * scale * np.cosh(v) * np.exp(sigma * log_r - r) / math.gamma(sigma)
    return r, w


def log_trapezoid_rule(nodes: int, sigma: float, a_min: float):
    """Trapezoid in x = log r on [log(a_min / 40), log 42].

    In x the integrand exp(sigma x - e^x - a e^{-x}) is entire and decays
    double exponentially at both ends once ``a >= a_min > 0``, so the rule
    converges geometrically; the window adapts to the smallest positive
    ``a = t^2 lambda / 4`` of the spectrum being integrated.
    """
    x = np.linspace(math.log(a_min) - math.log(_LT_LEFT), math.log(_DE_RIGHT), nodes)
    h = x[1] - x[0]
    r = np.exp(x)
    w = h * np.exp(sigma * x - r) / math.gamma(sigma)
    return r, w


def poisson_multiplier(lam, t: float, params: PoissonParams):
    """Quadrature value of (1/Gamma(s)) int e^{-r} r^{s-1} e^{-(t^2/4r) lam} dr per eigenvalue.

    The exact value at lam = 0 is 1 and is used directly.
    """
    lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
    a = 0.25 * t * t * lam
    pos = a > 0
    out = np.ones(a.shape)
    if not np.any(pos):
        return out
    if params.rule == "laguerre":
        r, w = gen_laguerre_rule(params.nodes, params.sigma)
    elif params.rule == "exp-sinh":
        r, w = exp_sinh_rule(params.nodes, params.sigma)
    else:
        r, w = log_trapezoid_rule(params.nodes, params.sigma, float(a[pos].min()))
    out[pos] = np.exp(-np.multiply.outer(a[pos], 1.0 / r)) @ w
    return out


def poisson_apply(f: SampledField, V, t: float, params: PoissonParams = PoissonParams()) -> SampledField:
    """Generalised Poisson operator by subordination to exp(-sL).

    V = 0 (or None) uses the spectral route in any dimension; otherwise the
    dense 1-D route.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    v = potential_values(V, f.grid)
    if not np.any(v):
        mult = poisson_multiplier(_rfft_symbol(f.grid), t, params)
        return f.with_values(_apply_multiplier(f.values, f.grid, mult))
    return dense_apply(f, v, lambda lam: poisson_multiplier(lam, t, params))


def evolve_family(kind: str, f: SampledField, V=None, substeps=64, params: PoissonParams | None = None):
    """Map t -> T_t f for the semigroups used by the experiments."""
    if kind == "biharmonic":
        return lambda t: biharmonic_step(f, t)
    if kind == "schrodinger":
        if V is None or not np.any(potential_values(V, f.grid)):
            return lambda t: biharmonic_step(f, t)
        if f.grid.d == 1 and f.grid.m <= DENSE_MAX_M:
            return lambda t: dense_evolve(f, V, t)
        return lambda t: schrodinger4_evolve(f, V, t, substeps)
    if kind == "poisson":
        params = params or PoissonParams()
        return lambda t: poisson_apply(f, V, t, params)
    raise ValueError(f"unknown semigroup {kind!r}")


def semigroup_series(kind: str, f: SampledField, V, times, params: PoissonParams | None = None,
                     substeps: int = 64) -> np.ndarray:
    """Stack of T_t f over ``times`` (first axis), batched where the route allows it.

    ``kind`` is ``biharmonic``, ``schrodinger`` or ``poisson``.  A zero
    potential always takes the spectral route, so the Schroedinger series with
    V = 0 is bit-identical to the biharmonic one.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    grid = f.grid
    axes = tuple(range(1, grid.d + 1))
    v = potential_values(V, grid) if kind != "biharmonic" else np.zeros(grid.shape)
    zero = not np.any(v)
    if kind == "poisson":
        params = params or PoissonParams()
    elif kind not in ("biharmonic", "schrodinger"):
        raise ValueError(f"unknown semigroup {kind!r}")
    if zero:
        sym = _rfft_symbol(grid)
        spec = np.fft.rfftn(f.values, axes=tuple(range(grid.d)))
        if kind == "poisson":
            mult = np.stack([poisson_multiplier(sym, t, params) for t in times])
        else:
            mult = np.exp(-np.multiply.outer(times, sym))
        return np.fft.irfftn(spec[None] * mult, s=grid.shape, axes=axes)
    if grid.d == 1 and grid.m <= DENSE_MAX_M:
        lam, Q = dense_eig(grid, v)
        coef = Q.T @ f.values
        if kind == "poisson":
            mult = np.stack([poisson_multiplier(lam, t, params) for t in times])
        else:
            mult = np.exp(-np.outer(times, lam))
        return (mult * coef) @ Q.T
    if kind == "poisson":
        raise DenseLimitError("the Poisson operator with V != 0 needs the dense 1-D route")
    return np.stack([schrodinger4_evolve(f, v, t, substeps).values for t in times])

"""Bessel functions and the biharmonic heat profile.

The profile is the inverse Fourier transform of ``exp(-|k|^4)`` in R^n,

    g(eta) = (2 pi)^{-n} int exp(i eta.k - |k|^4) dk,

normalised so that ``int g = 1`` (``b(x, t) = t^{-n/4} g(x t^{-1/4})`` is then
the heat kernel of ``exp(-t Delta^2)``).  It is evaluated through the radial
(Hankel) reduction

    g(eta) = (2 pi)^{-n/2} int_0^inf exp(-s^4) s^{n-1} Phi_v(|eta| s) ds,

with ``v = n/2 - 1``
and ``Phi_v(z) = z^{-v} J_v(z)``.  Writing the integrand with ``Phi_v``
keeps it regular at ``eta = 0`` and gives the radial derivatives through
``Phi_v'(z) = -z Phi_{v+1}(z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .reports import RESOLUTION_FLOOR, BoundSweepReport, build_points, make_report

A1 = 3.0 * 2.0 ** (1.0 / 3.0) / 16.0

# exp(-S^4) < 1e-16 for S >= 2.46; S = 3 leaves exp(-81)
CUTOFF = 3.0
QUAD_TOL = 1e-10
MAX_ORDER = 4
_SERIES_Z = 8.0
_MAX_BESSEL_ORDER = 40


class QuadratureError(RuntimeError):
    """Raised when panel doubling fails to meet the tolerance."""

    def __init__(self, message, estimate):
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")
        self.estimate = estimate


# ---------------------------------------------------------------- quadrature


@lru_cache(maxsize=None)
def _legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_panels(a, b, panels, order=16):
    """Nodes and weights of a composite Gauss-Legendre rule on [a, b]."""
    x, w = _legendre(order)
    edges = np.linspace(a, b, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * x
    weights = half * w
    return nodes.ravel(), weights.ravel()


def composite_quad(func, a, b, tol=QUAD_TOL, panels=8, order=16, max_panels=2048):
    """Integrate ``func`` over [a, b], doubling the panel count until converged.

    ``func`` maps a 1-D node array to an array whose *last* axis runs over the
    nodes, so a whole family of integrals converges together.  Returns
    ``(value, error_estimate)``.
    """
    nodes, weights = gauss_legendre_panels(a, b, panels, order)
    prev = func(nodes) @ weights
    while True:
        panels *= 2
        nodes, weights = gauss_legendre_panels(a, b, panels, order)
        cur = func(nodes) @ weights
        err = float(np.max(np.abs(cur - prev))) if np.size(cur) else 0.0
        if err < tol:
            return cur, err
        if panels >= max_panels:
            raise QuadratureError("composite Gauss-Legendre did not converge", err)
        prev = cur


# ------------------------------------------------------------------- Bessel


def _check_order(v):
    two_v = 2.0 * v
    if not float(two_v).is_integer() or two_v < -1:
        raise ValueError(f"unsupported Bessel order {v}: need a half-integer >= -1/2")
    if v > _MAX_BESSEL_ORDER:
        raise ValueError(f"Bessel order {v} exceeds {_MAX_BESSEL_ORDER}")
    return int(two_v)


def _phi_series(v, z):
    z = np.asarray(z, float)
    q = -0.25 * z * z
    term = np.full(z.shape, 1.0 / (2.0**v * math.gamma(v + 1.0)))
    total = term.copy()
    for j in range(1, 60):
        term = term * q / (j * (j + v))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _j_halfint(k, z):
    """J_{k+1/2}(z) via Riccati-Bessel upward recurrence (stable for z > k)."""
    s_prev, s = np.cos(z), np.sin(z)  # orders -1/2, 1/2
    if k == -1:
        s = s_prev
    else:
        for i in range(k):
            s_prev, s = s, (2 * i + 1) / z * s - s_prev
    return np.sqrt(2.0 / (np.pi * z)) * s


def _j_integer_miller(nu, z):
    """J_nu(z) for integer nu >= 0 by Miller backward recurrence.

    Normalised with J_0 + 2 sum_k J_{2k} = 1; per-element rescaling keeps the
    recurrence inside the floating range.
    """
    big = max(float(nu), float(np.max(z)))
    top = 2 * ((int(big) + 20 + int(math.sqrt(60.0 * big + 1.0))) // 2)
    inv = 2.0 / z
    j_next = np.zeros_like(z)
    j_cur = np.ones_like(z)
    acc = 2.0 * j_cur  # top is even
    result = np.zeros_like(z)
    for k in range(top, 0, -1):
        j_prev = k * inv * j_cur - j_next
        j_next, j_cur = j_cur, j_prev  # j_cur = J_{k-1}
        if k - 1 == nu:
            result = j_cur.copy()
        if (k - 1) % 2 == 0 and k > 1:
            acc = acc + 2.0 * j_cur
        huge = np.abs(j_cur) > 1e200
        if np.any(huge):
            for arr in (j_cur, j_next, acc, result):
                arr[huge] *= 1e-200
    norm = acc + j_cur
    return result / norm


def _j_large(v, z):
    two_v = _check_order(v)
    if two_v % 2:
        return _j_halfint((two_v - 1) // 2, z)
    return _j_integer_miller(two_v // 2, z)


def bessel_j(v, z):
    """Bessel function of the first kind for half-integer orders ``v >= -1/2``.

    Power series for ``z <= 8`` (or ``z`` below the order), closed half-integer
    forms with upward recurrence and Miller's backward recurrence otherwise.
    """
    _check_order(v)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise ValueError("bessel_j requires finite z >= 0")
    out = np.empty(z.shape)
    small = (z <= _SERIES_Z) | (z < v)
    if np.any(small):
        zs = z[small]
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(zs > 0, zs**v, 1.0 if v == 0 else (np.inf if v < 0 else 0.0))
        out[small] = _phi_series(v, zs) * scale
    if np.any(~small):
        out[~small] = _j_large(v, z[~small])
    return out if out.ndim else float(out)


def bessel_phi(v, z):
    """``z^{-v} J_v(z)``, finite at ``z = 0``."""
    _check_order(v)
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape)
    small = (z <= _SERIES_Z) | (z < v)
    if np.any(small):
        out[small] = _phi_series(v, z[small])
    if np.any(~small):
        zl = z[~small]
        out[~small] = _j_large(v, zl) / zl**v
    return out if out.ndim else float(out)


def _phi_derivative(v, z, m):
    """m-th derivative in z of Phi_v, m <= 4."""
    if m == 0:
        return bessel_phi(v, z)
    if m == 1:
        return -z * bessel_phi(v + 1, z)
    if m == 2:
        return -bessel_phi(v + 1, z) + z**2 * bessel_phi(v + 2, z)
    if m == 3:
        return 3 * z * bessel_phi(v + 2, z) - z**3 * bessel_phi(v + 3, z)
    if m == 4:
        return 3 * bessel_phi(v + 2, z) - 6 * z**2 * bessel_phi(v + 3, z) + z**4 * bessel_phi(v + 4, z)
    raise ValueError(f"derivative order {m} > {MAX_ORDER}")


# ------------------------------------------------------------------ profile


@dataclass(frozen=True)
class ProfileQuery:
    n: int
    eta: float
    order: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension must be an integer >= 1, got {self.n}")
        if not self.eta >= 0 or not math.isfinite(self.eta):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta}")
        if int(self.order) != self.order or self.order < 0:
            raise ValueError(f"order must be an integer >= 0, got {self.order}")


def _check_n(n):
    if int(n) != n or n < 1 or n > 8:
        raise ValueError(f"dimension must be an integer in [1, 8], got {n}")


def profile(n, eta, order=0, tol=QUAD_TOL):
    """m-th radial derivative of g at radii ``eta`` (vectorised Hankel route)."""
    _check_n(n)
    if order < 0 or order > MAX_ORDER:
        raise ValueError(f"derivative order must be in [0, {MAX_ORDER}]")
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("eta must be finite and >= 0")
    flat = np.unique(eta.ravel())
    v = n / 2.0 - 1.0

    def integrand(s):
        weight = np.exp(-(s**4)) * s ** (n - 1 + order)
        return _phi_derivative(v, np.outer(flat, s), order) * weight

    vals, _ = composite_quad(integrand, 0.0, CUTOFF, tol=tol)
    vals = vals * (2.0 * math.pi) ** (-n / 2.0)
    out = vals[np.searchsorted(flat, eta.ravel())].reshape(eta.shape)
    return out if out.ndim else float(out)


def g_profile(q: ProfileQuery) -> float:
    if q.order != 0:
        raise ValueError("g_profile takes order=0; use g_derivative for m >= 1")
    return float(profile(q.n, q.eta, 0))


def g_derivative(q: ProfileQuery) -> float:
    if not 1 <= q.order <= MAX_ORDER:
        raise ValueError(f"g_derivative needs 1 <= order <= {MAX_ORDER}")
    return float(profile(q.n, q.eta, q.order))


def profile_direct_1d(eta, order=0, tol=QUAD_TOL):
    """n = 1 cosine-transform route, (1/pi) int_0^S k^m cos(eta k + m pi/2) e^{-k^4} dk."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))

    def integrand(k):
        phase = np.outer(eta, k) + order * np.pi / 2.0
        return np.cos(phase) * (k**order * np.exp(-(k**4)))

    vals, _ = composite_quad(integrand, 0.0, CUTOFF, tol=tol)
    return vals / math.pi


def profile_tensor(n, eta, tol=QUAD_TOL, order=16):
    """Direct tensor-product quadrature of the Fourier integral, n <= 3.

    eta lies on the first axis; the transverse directions are integrated on
    the same product grid, so nothing radial is used.
    """
    if n not in (1, 2, 3):
        raise ValueError("tensor quadrature supports n <= 3")
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    panels, prev = 4, None
    while True:
        k, w = gauss_legendre_panels(0.0, CUTOFF, panels, order)
        if n == 1:
            marginal = np.exp(-(k**4))
        elif n == 2:
            r2 = k[:, None] ** 2 + k[None, :] ** 2
            marginal = np.exp(-(r2**2)) @ w
        else:
            t2 = k[:, None] ** 2 + k[None, :] ** 2
            marginal = np.array([np.einsum("ij,i,j->", np.exp(-((k1**2 + t2) ** 2)), w, w) for k1 in k])
        cur = (np.cos(np.outer(eta, k)) * marginal) @ w
        cur = cur / math.pi**n
        if prev is not None and np.max(np.abs(cur - prev)) < tol:
            return cur
        if panels >= 128:
            raise QuadratureError("tensor quadrature did not converge", float(np.max(np.abs(cur - prev))))
        prev, panels = cur, panels * 2


def sphere_area(n):
    """Surface measure of the unit sphere S^{n-1} in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def ball_volume(n):
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def profile_mass(n, radius=36.0, panels=144):
    """Integral of g over R^n by radial quadrature (should be 1)."""
    rho, w = gauss_legendre_panels(0.0, radius, panels, 16)
    vals = profile(n, rho)
    return float(sphere_area(n) * np.sum(w * vals * rho ** (n - 1)))


def g_zero(n):
    """g(0) = Gamma(n/4) / (2^{n+1} pi^{n/2} Gamma(n/2))."""
    return math.gamma(n / 4.0) / (2.0 ** (n + 1) * math.pi ** (n / 2.0) * math.gamma(n / 2.0))


def envelope(n, eta, m):
    eta = np.asarray(eta, dtype=float)
    return (1.0 + eta) ** (-(n - m) / 3.0) * np.exp(-A1 * eta ** (4.0 / 3.0))


def check_g_envelope(n, eta_grid, m, split=None) -> BoundSweepReport:
    """Ratios |g^(m)(eta)| / envelope over a sorted eta grid.

    ``empirical_C`` is the sweep maximum; ``stabilized`` applies the 1%-tail
    rule (default split at two thirds of the grid end).
    """
    eta = np.asarray(eta_grid, dtype=float)
    if eta.ndim != 1 or eta.size == 0 or np.any(eta < 0) or np.any(np.diff(eta) < 0):
        raise ValueError("eta_grid must be a non-empty sorted array of non-negative values")
    vals = profile(n, eta, m)
    bound = envelope(n, eta, m)
    low = np.exp(-A1 * eta ** (4.0 / 3.0)) < RESOLUTION_FLOOR
    pts = build_points(n, eta, 1.0, eta, vals, bound, unresolved=low)
    return make_report("envelope", pts, split=split, header={"A1": A1, "n": n, "m": m})

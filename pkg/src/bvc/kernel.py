"""Pointwise biharmonic heat kernel and sweeps of its decay bounds.

``b(x, t) = t^{-n/4} g(eta)`` with ``eta = |x| t^{-1/4}``.  Every derivative
used here factors as a power of ``t`` times a function of ``eta`` alone, so
ratio sweeps only need the profile on the distinct ``eta`` values.
"""

from __future__ import annotations

import numpy as np

from .reports import RESOLUTION_FLOOR, BoundSweepReport, build_points, make_report, tail_stabilized
from .specfun import A1, profile

DEFAULT_T_GRID = np.geomspace(1e-3, 1e3, 24)
DEFAULT_ETA_GRID = np.linspace(0.0, 12.0, 32)
# (space order k, time order l) pairs for the polynomial bound
BXT_ORDERS = ((0, 1), (1, 1))


def _prep(x_mag, t):
    x_mag = np.asarray(x_mag, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise ValueError("t must be positive and finite")
    if np.any(x_mag < 0) or not np.all(np.isfinite(x_mag)):
        raise ValueError("x_mag must be finite and >= 0")
    x_mag, t = np.broadcast_arrays(x_mag, t)
    return x_mag, t, x_mag * t**-0.25


def _out(a):
    return a if a.ndim else float(a)


def time_bracket(n, eta):
    """(n/4) g + (eta/4) g'; ``d_t b = -t^{-n/4-1}`` times this."""
    eta = np.asarray(eta, dtype=float)
    return n / 4.0 * profile(n, eta, 0) + eta / 4.0 * profile(n, eta, 1)


def mixed_bracket(n, eta):
    """((n+1)/4) g' + (eta/4) g''; ``d_t d_r b = -t^{-(n+5)/4}`` times this."""
    eta = np.asarray(eta, dtype=float)
    return (n + 1) / 4.0 * profile(n, eta, 1) + eta / 4.0 * profile(n, eta, 2)


def b_eval(n, x_mag, t):
    x_mag, t, eta = _prep(x_mag, t)
    return _out(t ** (-n / 4.0) * profile(n, eta, 0))


def b_time_derivative(n, x_mag, t):
    x_mag, t, eta = _prep(x_mag, t)
    return _out(-(t ** (-n / 4.0 - 1.0)) * time_bracket(n, eta))


def b_radial_derivative(n, x_mag, t):
    """Signed derivative of b in |x|."""
    x_mag, t, eta = _prep(x_mag, t)
    return _out(t ** (-(n + 1) / 4.0) * profile(n, eta, 1))


def b_space_gradient(n, x_mag, t):
    """|grad_x b|, equal to the absolute radial derivative for a radial kernel."""
    return np.abs(b_radial_derivative(n, x_mag, t))


def b_mixed_derivative(n, x_mag, t):
    """d/dt of the radial derivative of b."""
    x_mag, t, eta = _prep(x_mag, t)
    return _out(-(t ** (-(n + 5) / 4.0)) * mixed_bracket(n, eta))


def b_periodic(x, t, box, images=3):
    """1-D kernel on the torus of length ``box`` by image summation over |j| <= images."""
    x = np.asarray(x, dtype=float)
    shifts = box * np.arange(-images, images + 1)
    return np.sum(b_eval(1, np.abs(x[..., None] + shifts), t), axis=-1)


# ------------------------------------------------------------------- sweeps


def _exp_decay(eta):
    return np.exp(-A1 * eta ** (4.0 / 3.0))


def _sweep_points(x_grid, t_grid, eta_grid=None):
    t_grid = DEFAULT_T_GRID if t_grid is None else np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(t_grid <= 0) or not np.all(np.isfinite(t_grid)):
        raise ValueError("t_grid must be a 1-D array of positive finite times")
    if x_grid is None:
        eta_grid = DEFAULT_ETA_GRID if eta_grid is None else np.asarray(eta_grid, dtype=float)
        if eta_grid.ndim != 1 or np.any(eta_grid < 0) or not np.all(np.isfinite(eta_grid)):
            raise ValueError("eta_grid must be a 1-D array of finite non-negative values")
        tt, ee = np.meshgrid(t_grid, eta_grid, indexing="ij")
        xx = ee * tt**0.25
    else:
        x_grid = np.asarray(x_grid, dtype=float)
        if x_grid.ndim != 1 or np.any(x_grid < 0) or not np.all(np.isfinite(x_grid)):
            raise ValueError("x_grid must be a 1-D array of finite non-negative values")
        tt, xx = np.meshgrid(t_grid, x_grid, indexing="ij")
        ee = xx * tt**-0.25
    return xx.ravel(), tt.ravel(), ee.ravel()


def _safe(func, n, eta):
    # per-point failure is recorded as NaN (flagged downstream), not raised
    try:
        return func(n, eta)
    except ArithmeticError:
        out = np.empty(eta.shape)
        for i, e in enumerate(eta):
            try:
                out[i] = func(n, np.array([e]))[0]
            except ArithmeticError:
                out[i] = np.nan
        return out


def _g0(n, eta):
    return profile(n, eta, 0)


def _g1(n, eta):
    return profile(n, eta, 1)


def combine_reports(bound_name, reports, header=None) -> BoundSweepReport:
    """Merge per-label reports: max of the constants, all must stabilise."""
    points = [p for r in reports for p in r.points]
    emp = max(r.empirical_C for r in reports)
    stab = all(r.stabilized for r in reports)
    return BoundSweepReport(bound_name, points, emp, stab, dict(header or {}))


def verify_lemma_K(n, x_grid=None, t_grid=None, split=None, eta_grid=None) -> dict[str, BoundSweepReport]:
    """Ratio sweeps of |b|, |d_t b|, |grad b| and the mixed bounds against their envelopes.

    Returns reports keyed ``k``, ``kt``, ``kx``, ``bxt``.  Without ``x_grid``
    the points cover ``eta_grid`` (default [0, 12]) for each time.  The tail rule is
    applied in ``eta`` (split at 2/3 of the largest swept ``eta``).
    """
    x, t, eta = _sweep_points(x_grid, t_grid, eta_grid)
    header = {"A1": A1, "n": n}
    g = _safe(_g0, n, eta)
    g1 = _safe(_g1, n, eta)
    tb = _safe(time_bracket, n, eta)
    mb = _safe(mixed_bracket, n, eta)
    decay = _exp_decay(eta)
    low = decay < RESOLUTION_FLOOR

    value_k = t ** (-n / 4.0) * g
    bound_k = t ** (-n / 4.0) * decay
    value_kt = -(t ** (-n / 4.0 - 1.0)) * tb
    bound_kt = t ** (-n / 4.0 - 1.0) * (1.0 + eta) ** ((4.0 - n) / 3.0) * decay
    value_kx = t ** (-(n + 1) / 4.0) * np.abs(g1)
    bound_kx = t ** (-(n + 1) / 4.0) * (1.0 + eta) ** (-(n - 1) / 3.0) * decay

    out = {
        "k": make_report("k", build_points(n, x, t, eta, value_k, bound_k, unresolved=low), split=split, header=header),
        "kt": make_report("kt", build_points(n, x, t, eta, value_kt, bound_kt, unresolved=low), split=split, header=header),
        "kx": make_report("kx", build_points(n, x, t, eta, value_kx, bound_kx, unresolved=low), split=split, header=header),
    }
    parts = []
    for k, l in BXT_ORDERS:
        value = value_kt if k == 0 else -(t ** (-(n + 5) / 4.0)) * mb
        bound = (t**0.25 + x) ** (-n - k - 4 * l)
        pts = build_points(n, x, t, eta, value, bound, label=f"k{k}l{l}", unresolved=low)
        parts.append(make_report("bxt", pts, split=split))
    out["bxt"] = combine_reports("bxt", parts, header=header)
    return out


def ratio_profile(report: BoundSweepReport, label=None):
    """(eta, ratio) arrays of the non-excluded points, optionally for one label."""
    pts = [p for p in report.points if not p.excluded and (label is None or p.label == label)]
    return np.array([p.eta for p in pts]), np.array([p.ratio for p in pts])


def restabilize(report: BoundSweepReport, split, tol=0.01) -> bool:
    """Re-apply the tail rule with another split (used by the extended diagnostic)."""
    labels = sorted({p.label for p in report.points})
    return all(tail_stabilized(*ratio_profile(report, lab), split=split, tol=tol) for lab in labels)

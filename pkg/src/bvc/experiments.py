"""Registered experiments: sweeps, operator-constant estimates and diagnostics.

Every experiment maps an :class:`ExperimentConfig` to an
:class:`ExperimentReport`.  Random inputs come from counter-based Philox
streams keyed by ``(seed, trial)``, so a trial's data does not depend on which
worker runs it; per-trial results are always reduced in trial-index order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import engine, kernel, potential as pot, specfun
from .config import ConfigError, ExperimentConfig
from .grid import GridSpec, SampledField
from .norms import lp_norm, maximal_function, morrey_norm, morrey_potential_norm, refinement_delta
from .output import ExperimentReport
from .reports import BoundSweepReport, build_points, make_report
from .variation import VariationParams, brute_force_seminorm, rho_variation_seminorm

SCOPE_NOTE = "grid experiments run at d <= 2; the boundedness results they probe assume n >= 5"
LADDER_GATE = 0.02
GRID_GATE = 0.05
SCAN_GATE = 0.01
MAXIMAL_GATE = 1.05
SELFTEST_RHOS = (2.5, 3.0, 4.0)
DUHAMEL_NODES = (8, 16, 32, 64, 128)
DUHAMEL_RATE = 8.0
DUHAMEL_ZERO_TOL = 1e-10
KERNEL_ETA_POINTS = 32
ENVELOPE_ETA_POINTS = 97
A3_FRACTIONS = tuple(np.round(np.linspace(1.0, 0.1, 10), 2))


# ------------------------------------------------------------- random data


def philox(seed, stream):
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def random_coefficients(d, kmax, seed, trial):
    """Independent standard normal complex coefficients for |k_i| <= kmax."""
    rng = philox(seed, trial)
    shape = (2 * kmax + 1,) * d
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def evaluate_coefficients(grid: GridSpec, coef) -> SampledField:
    """Real part of sum_k c_k exp(2 pi i k.x / box), one axis at a time."""
    kmax = (coef.shape[0] - 1) // 2
    if 2 * kmax >= grid.m:
        raise ValueError(f"band limit {kmax} needs more than {grid.m} points per axis")
    k = np.arange(-kmax, kmax + 1)
    E = np.exp(2j * np.pi * np.outer(grid.axis(), k) / grid.box)
    out = coef
    for _ in range(grid.d):
        out = np.moveaxis(np.tensordot(E, out, axes=([1], [0])), 0, -1)
    return SampledField(grid, np.ascontiguousarray(out.real))


def band_limit(cfg: ExperimentConfig) -> int:
    return cfg.m // cfg.band


def random_field(grid: GridSpec, seed, trial, kmax) -> SampledField:
    """Band-limited test field; the same (seed, trial) gives the same function on any grid."""
    return evaluate_coefficients(grid, random_coefficients(grid.d, kmax, seed, trial))


# ----------------------------------------------------------------- helpers


def _map(cfg, func, items):
    items = list(items)
    if cfg.workers == 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(func, items))


def _potential(cfg: ExperimentConfig):
    V = cfg.potential_obj
    if V.n != cfg.d:
        raise ConfigError(f"potential dimension n={V.n} does not match grid dimension d={cfg.d}")
    return V


def _poisson(cfg):
    return engine.PoissonParams(sigma=cfg.sigma, nodes=cfg.nodes)


def _vrho(kind, f, V, times, cfg):
    series = engine.semigroup_series(kind, f, V, times, _poisson(cfg), cfg.substeps)
    return f.with_values(rho_variation_seminorm(series, VariationParams(cfg.rho)))


def _gamma_field(V, grid):
    if V is None:
        return np.full(grid.shape, math.inf)
    return pot.critical_radius_field(V, grid)[0]


def _ptag(p):
    return f"p{p:g}"


def _add_config(rep, cfg):
    for k, v in cfg.as_items():
        rep.add_summary(f"config.{k}", v)


# --------------------------------------------------- operator constants


_KIND = {
    "opnorm-biharmonic": "biharmonic",
    "opnorm-schrodinger": "schrodinger",
    "opnorm-poisson": "poisson",
    "morrey-biharmonic": "biharmonic",
    "morrey-schrodinger": "schrodinger",
    "morrey-poisson": "poisson",
}


def _operator_experiment(cfg: ExperimentConfig, morrey: bool) -> ExperimentReport:
    kind = _KIND[cfg.experiment]
    V = None if kind == "biharmonic" else _potential(cfg)
    grid, fine_grid = cfg.grid, cfg.grid.refine()
    ladder = cfg.time_ladder
    times, fine_times = ladder.times, ladder.refine().times
    kmax = band_limit(cfg)
    if morrey:
        for p in cfg.p:
            try:
                cfg.morrey_for(p)
            except ValueError as exc:
                raise ConfigError(f"invalid Morrey parameters: {exc}") from None
        # the biharmonic result is stated for the classical norm, the others for the V-weighted one
        weighted = V is not None
        gamma = _gamma_field(V, grid) if weighted else None
        gamma_fine = _gamma_field(V, fine_grid) if weighted else None

    def norm(field, p, g, radius_count=cfg.radius_count):
        if not morrey:
            return lp_norm(field, p)
        params = cfg.morrey_for(p)
        if g is None:
            return morrey_norm(field, params, radius_count)
        return morrey_potential_norm(field, params, g, radius_count)

    def trial(i):
        f = random_field(grid, cfg.seed, i, kmax)
        f_fine = random_field(fine_grid, cfg.seed, i, kmax)
        out = _vrho(kind, f, V, times, cfg)
        out_ladder = _vrho(kind, f, V, fine_times, cfg)
        out_grid = _vrho(kind, f_fine, V, times, cfg)
        rows = []
        for p in cfg.p:
            g, gf = (gamma, gamma_fine) if morrey else (None, None)
            n_in, n_out = norm(f, p, g), norm(out, p, g)
            row = [i, p, n_in, n_out, n_out / n_in,
                   norm(out_ladder, p, g) / n_in,
                   norm(out_grid, p, gf) / norm(f_fine, p, gf)]
            if morrey:
                rc = 2 * cfg.radius_count
                row.append(norm(out, p, g, rc) / norm(f, p, g, rc))
            rows.append(tuple(row))
        return rows

    columns = ["trial", "p", "input_norm", "output_norm", "ratio", "ratio_ladder_refined", "ratio_grid_refined"]
    if morrey:
        columns.append("ratio_scan_refined")
    rep = ExperimentReport(cfg.experiment, tuple(columns), plot=("input_norm", "ratio"))
    for rows in _map(cfg, trial, range(cfg.trials)):
        rep.rows.extend(rows)

    passed = True
    if morrey:
        rep.add_summary("norm", "morrey_weighted" if weighted else "morrey")
        rep.add_summary("lambda", cfg.lam)
        rep.add_summary("alpha", cfg.alpha if weighted else 0.0)
    else:
        rep.add_summary("norm", "lp")
    for p in cfg.p:
        sel = [r for r in rep.rows if r[1] == p]
        ratio = np.array([r[4] for r in sel])
        base = float(ratio.max())
        tag = _ptag(p)
        rep.add_summary(f"max_ratio.{tag}", base)
        rep.add_summary(f"mean_ratio.{tag}", float(ratio.mean()))
        deltas = {
            "ladder_delta": (refinement_delta(base, max(r[5] for r in sel)), LADDER_GATE),
            "grid_delta": (refinement_delta(base, max(r[6] for r in sel)), GRID_GATE),
        }
        if morrey:
            deltas["scan_delta"] = (refinement_delta(base, max(r[7] for r in sel)), SCAN_GATE)
        for key, (val, gate) in deltas.items():
            ok = bool(math.isfinite(val) and val < gate)
            rep.add_summary(f"{key}.{tag}", val)
            rep.add_summary(f"{key}_ok.{tag}", ok)
            passed &= ok
        passed &= bool(np.isfinite(base))
    rep.add_summary("scope", SCOPE_NOTE)
    rep.passed = passed
    return rep


# ----------------------------------------------------------- kernel sweeps

_SWEEP_COLUMNS = ("n", "bound_name", "label", "x_mag", "t", "eta", "value", "bound", "ratio", "flag")


def _sweep_rows(rep: BoundSweepReport, n=None):
    return [(p.n if n is None else n, rep.bound_name, p.label, p.x_mag, p.t, p.eta, p.value, p.bound, p.ratio, p.flag)
            for p in rep.points]


def _kernel_check(cfg: ExperimentConfig) -> ExperimentReport:
    t_grid = np.geomspace(1e-3, 1e3, cfg.t_count)
    eta_grid = np.linspace(0.0, cfg.eta_max, KERNEL_ETA_POINTS)
    reps = _map(cfg, lambda n: kernel.verify_lemma_K(n, t_grid=t_grid, eta_grid=eta_grid), cfg.n_values)
    out = ExperimentReport(cfg.experiment, _SWEEP_COLUMNS, plot=("eta", "ratio"))
    passed = True
    for n, by_bound in zip(cfg.n_values, reps):
        for name, rep in by_bound.items():
            out.rows.extend(_sweep_rows(rep))
            out.add_summary(f"C.{name}.n{n}", rep.empirical_C)
            out.add_summary(f"stabilized.{name}.n{n}", rep.stabilized)
            passed &= bool(rep.stabilized and np.isfinite(rep.empirical_C))
    out.add_summary("A1", specfun.A1)
    out.passed = passed
    return out


def _g_envelope(cfg: ExperimentConfig) -> ExperimentReport:
    eta = np.linspace(0.0, cfg.eta_max, ENVELOPE_ETA_POINTS)
    jobs = [(n, m) for n in cfg.n_values for m in (0, 1, 2)]
    reps = _map(cfg, lambda job: specfun.check_g_envelope(job[0], eta, job[1]), jobs)
    out = ExperimentReport(cfg.experiment, ("n", "m", "eta", "value", "bound", "ratio", "flag"), plot=("eta", "ratio"))
    passed = True
    for (n, m), rep in zip(jobs, reps):
        out.rows.extend((n, m, p.eta, p.value, p.bound, p.ratio, p.flag) for p in rep.points)
        out.add_summary(f"C.n{n}.m{m}", rep.empirical_C)
        out.add_summary(f"stabilized.n{n}.m{m}", rep.stabilized)
        passed &= bool(rep.stabilized and np.isfinite(rep.empirical_C))
    out.passed = passed
    return out


# --------------------------------------------------------- variation oracle


def _variation_selftest(cfg: ExperimentConfig) -> ExperimentReport:
    def trial(i):
        rng = philox(cfg.seed, i)
        m = int(rng.integers(2, 13))
        rho = SELFTEST_RHOS[i % len(SELFTEST_RHOS)]
        w = rng.standard_normal(m)
        params = VariationParams(rho)
        dp = rho_variation_seminorm(w, params)
        bf = brute_force_seminorm(w, params)
        return (i, m, rho, dp, bf, dp == bf)

    out = ExperimentReport(cfg.experiment, ("trial", "m", "rho", "dp", "brute_force", "match"), plot=("m", "dp"))
    out.rows = _map(cfg, trial, range(cfg.trials))
    mismatches = sum(not r[5] for r in out.rows)
    out.add_summary("mismatches", mismatches)
    out.passed = mismatches == 0
    return out


# --------------------------------------------------- potential diagnostics


def _sample_half_width(V):
    if V.family in ("periodic_bump", "sampled"):
        return V.period if V.family == "periodic_bump" else 0.5 * V.period
    return 2.0


def sample_points(V, count, seed, stream=0):
    rng = philox(seed, stream)
    half = _sample_half_width(V)
    return rng.uniform(-half, half, size=(count, V.n))


def sample_pairs(V, count, seed, stream=1):
    """Pairs (x, y) with log-uniform separations in [1e-2, 4] half-widths, random directions."""
    rng = philox(seed, stream)
    half = _sample_half_width(V)
    x = rng.uniform(-half, half, size=(count, V.n))
    u = rng.standard_normal((count, V.n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    dist = half * np.exp(rng.uniform(math.log(1e-2), math.log(4.0), size=count))
    return x, x + dist[:, None] * u


def _gamma_table(cfg: ExperimentConfig) -> ExperimentReport:
    V = cfg.potential_obj
    pts = sample_points(V, cfg.gamma_points, cfg.seed)
    infos = _map(cfg, lambda x: pot.critical_radius_info(V, x, fast=False), pts)
    out = ExperimentReport(cfg.experiment, ("index", "x_norm", "gamma", "iterations", "flag", "x"),
                           plot=("x_norm", "gamma"))
    for i, (x, info) in enumerate(zip(pts, infos)):
        out.rows.append((i, float(np.linalg.norm(x)), info.gamma, info.iterations, info.flag,
                         " ".join(repr(float(v)) for v in x)))
    passed = not any(info.flag == "zero" for info in infos)
    closed = pot.critical_radius_closed_form(V)
    if closed is not None:
        generic = pot.critical_radius(V, np.zeros(V.n), fast=False)
        out.add_summary("gamma_origin_closed_form", closed)
        out.add_summary("gamma_origin_generic", generic)
        if math.isfinite(closed):
            passed &= abs(generic - closed) <= 1e-6 * closed
    xs, ys = sample_pairs(V, cfg.pairs, cfg.seed)
    gx = _map(cfg, lambda x: pot.critical_radius(V, x), xs)
    gy = _map(cfg, lambda y: pot.critical_radius(V, y), ys)
    comp = pot.check_gamma_comparability(V, list(zip(xs, ys)), gammas=(gx, gy))
    out.add_summary("comparability_C", comp.C)
    out.add_summary("comparability_k0", comp.k0)
    out.add_summary("comparability_feasible", comp.feasible)
    for k0, c in comp.per_k0.items():
        out.add_summary(f"comparability_C.k0={k0:g}", c)
    out.add_summary("pairs", cfg.pairs)
    out.passed = bool(passed and comp.feasible)
    return out


def _rh_check(cfg: ExperimentConfig) -> ExperimentReport:
    V = cfg.potential_obj
    plan = pot.default_plan(V, seed=cfg.seed)
    ests = _map(cfg, lambda q: pot.rh_constant_estimate(V, q, plan), cfg.q)
    out = ExperimentReport(cfg.experiment, ("q", "value", "flag", "worst_radius", "worst_center_norm"),
                           plot=("q", "value"))
    for q, e in zip(cfg.q, ests):
        out.rows.append((q, e.value, e.flag, e.worst_radius, float(np.linalg.norm(e.worst_center))))
    out.add_summary("q0", V.q0)
    out.passed = all(math.isfinite(e.value) and not e.flag for e in ests)
    return out


def _lemma25_check(cfg: ExperimentConfig) -> ExperimentReport:
    V = cfg.potential_obj
    pts = sample_points(V, cfg.gamma_points, cfg.seed)
    gammas = _map(cfg, lambda x: pot.critical_radius(V, x), pts)
    fractions = np.geomspace(1e-4, 1.0, cfg.t_count)
    rep = pot.check_lemma_V(V, pts, fractions, gammas=gammas, relative=True)
    out = ExperimentReport(cfg.experiment, _SWEEP_COLUMNS, plot=("t", "ratio"))
    out.rows = _sweep_rows(rep)
    out.add_summary("C", rep.empirical_C)
    out.add_summary("C_refined", rep.header.get("refined_C", rep.empirical_C))
    out.add_summary("stabilized", rep.stabilized)
    out.add_summary("delta", V.delta)
    out.add_summary("theorem_regime", V.in_theorem_regime)
    out.passed = bool(rep.stabilized and np.isfinite(rep.empirical_C))
    return out


# ------------------------------------------------------ dense-grid checks


def _dense_grid(cfg):
    grid = cfg.grid
    if grid.d != 1 or grid.m > engine.DENSE_MAX_M:
        raise ConfigError(f"{cfg.experiment} needs d = 1 and m <= {engine.DENSE_MAX_M}")
    return grid


def _lemma26_check(cfg: ExperimentConfig) -> ExperimentReport:
    grid = _dense_grid(cfg)
    V = _potential(cfg)
    gamma = _gamma_field(V, grid)
    m = grid.m
    y_idx = [m // 2, m // 2 + m // 16, 3 * m // 4, m // 8]
    t_max = (grid.box / 8.0) ** 4
    times = np.geomspace((4.0 * grid.h) ** 4, t_max, cfg.t_count)
    A2 = specfun.A1 / 2.0
    N = cfg.kernel_N
    dist = engine.grid_distance_matrix(grid)

    def column(args):
        y, t = args
        return (engine.heat_kernel_column(grid, V, t, y).values,
                engine.heat_kernel_time_derivative(grid, V, t, y).values)

    jobs = [(y, t) for y in y_idx for t in times]
    cols = _map(cfg, column, jobs)
    near = {y: np.flatnonzero(dist[:, y] <= grid.box / 4.0) for y in y_idx}
    xs, ts, etas, vb, vbt, loc = [], [], [], [], [], []
    for (y, t), (b, bt) in zip(jobs, cols):
        idx = near[y]
        d = dist[idx, y]
        xs.append(d)
        ts.append(np.full(d.shape, t))
        etas.append(d * t**-0.25)
        vb.append(b[idx])
        vbt.append(bt[idx])
        loc.append(1.0 + math.sqrt(t) / gamma[idx] ** 2 + math.sqrt(t) / gamma[y] ** 2)
    x, t, eta, vb, vbt, loc = map(np.concatenate, (xs, ts, etas, vb, vbt, loc))
    decay = eta ** (4.0 / 3.0)
    bound_b = t**-0.25 * loc ** (-N) * np.exp(-A2 * decay)
    rep_b = make_report("B", build_points(1, x, t, eta, vb, bound_b), header={"A2": A2, "N": N})
    best = None
    for frac in A3_FRACTIONS:
        A3 = float(frac) * A2
        bound_bt = t ** -1.25 * loc ** (-N) * np.exp(-A3 * decay)
        rep_bt = make_report("Bt", build_points(1, x, t, eta, vbt, bound_bt), header={"A3": A3, "N": N})
        if best is None:
            best = (A3, rep_bt)
        if rep_bt.stabilized:
            best = (A3, rep_bt)
            break
    A3, rep_bt = best
    out = ExperimentReport(cfg.experiment, _SWEEP_COLUMNS, plot=("eta", "ratio"))
    out.rows = _sweep_rows(rep_b) + _sweep_rows(rep_bt)
    out.add_summary("A2", A2)
    out.add_summary("N", N)
    out.add_summary("C.B", rep_b.empirical_C)
    out.add_summary("stabilized.B", rep_b.stabilized)
    out.add_summary("A3", A3)
    out.add_summary("C.Bt", rep_bt.empirical_C)
    out.add_summary("stabilized.Bt", rep_bt.stabilized)
    out.passed = bool(rep_b.stabilized and rep_bt.stabilized)
    return out


def _duhamel_check(cfg: ExperimentConfig) -> ExperimentReport:
    grid = _dense_grid(cfg)
    V = _potential(cfg)
    f = random_field(grid, cfg.seed, 0, band_limit(cfg))
    # the residual is linear in f, so a unit-norm input makes the tolerance absolute
    f = f.with_values(f.values / engine.l2_norm(f.values, grid))
    t = cfg.duhamel_t
    res = _map(cfg, lambda k: (engine.duhamel_residual(f, None, t, k), engine.duhamel_residual(f, V, t, k)),
               DUHAMEL_NODES)
    out = ExperimentReport(cfg.experiment, ("s_nodes", "residual_zero_potential", "residual", "rate"),
                           plot=("s_nodes", "residual"))
    prev = None
    rates = {}
    for k, (r0, r) in zip(DUHAMEL_NODES, res):
        rate = prev / r if prev is not None and r > 0 else math.nan
        rates[k] = rate
        out.rows.append((k, r0, r, rate))
        prev = r
    zero_ok = all(r0 <= DUHAMEL_ZERO_TOL for r0, _ in res)
    rate_ok = all(rates[k] >= DUHAMEL_RATE for k in DUHAMEL_NODES if 16 < k <= 64)
    out.add_summary("t", t)
    out.add_summary("zero_potential_ok", zero_ok)
    out.add_summary("rate_ok", rate_ok)
    out.passed = bool(zero_ok and rate_ok)
    return out


def _maximal_domination(cfg: ExperimentConfig) -> ExperimentReport:
    grid = _dense_grid(cfg)
    V = _potential(cfg)
    gamma = _gamma_field(V, grid)
    times = cfg.time_ladder.times
    lam, Q = engine.dense_eig(grid, V)
    far = engine.grid_distance_matrix(grid) >= gamma[:, None]
    # (exp(-tL) - exp_loc(-tL)) as matrices: the kernel restricted to |x - y| >= gamma(x)
    stack = np.stack([((Q * np.exp(-t * lam)) @ Q.T) * far for t in times])
    params = VariationParams(cfg.rho)
    kmax = band_limit(cfg)

    def trial(i):
        f = random_field(grid, cfg.seed, i, kmax)
        series = stack @ f.values
        v = rho_variation_seminorm(series, params)
        mf = maximal_function(f).values
        return (i, float(np.max(v / mf)), float(v.max()), float(mf.max()))

    out = ExperimentReport(cfg.experiment, ("trial", "ratio", "variation_sup", "maximal_sup"),
                           plot=("maximal_sup", "ratio"))
    out.rows = _map(cfg, trial, range(cfg.trials))
    ratios = np.array([r[1] for r in out.rows])
    C = float(ratios.max())
    C_half = float(ratios[: max(1, len(ratios) // 2)].max())
    stable = bool(np.isfinite(C) and C <= MAXIMAL_GATE * C_half)
    out.add_summary("C", C)
    out.add_summary("C_first_half", C_half)
    out.add_summary("stable", stable)
    out.passed = stable
    return out


# ------------------------------------------------------------------ driver

_RUNNERS = {
    "kernel-check": _kernel_check,
    "g-envelope": _g_envelope,
    "variation-selftest": _variation_selftest,
    "opnorm-biharmonic": lambda cfg: _operator_experiment(cfg, morrey=False),
    "opnorm-schrodinger": lambda cfg: _operator_experiment(cfg, morrey=False),
    "opnorm-poisson": lambda cfg: _operator_experiment(cfg, morrey=False),
    "morrey-biharmonic": lambda cfg: _operator_experiment(cfg, morrey=True),
    "morrey-schrodinger": lambda cfg: _operator_experiment(cfg, morrey=True),
    "morrey-poisson": lambda cfg: _operator_experiment(cfg, morrey=True),
    "gamma-table": _gamma_table,
    "rh-check": _rh_check,
    "lemma25-check": _lemma25_check,
    "lemma26-check": _lemma26_check,
    "duhamel-check": _duhamel_check,
    "maximal-domination": _maximal_domination,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    start = time.perf_counter()
    try:
        runner = _RUNNERS[cfg.experiment]
    except KeyError:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}") from None
    rep = runner(cfg)
    _add_config(rep, cfg)
    rep.add_summary("passed", rep.passed)
    rep.wall_time = time.perf_counter() - start
    return rep

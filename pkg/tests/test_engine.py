import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from bvc import engine, kernel
from bvc.engine import PoissonParams
from bvc.experiments import random_field
from bvc.grid import GridSpec, SampledField
from bvc.norms import maximal_function

BOX = 16.0


def rel(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def cos_mode(grid, j=1):
    return SampledField.from_function(grid, lambda x: np.cos(2 * np.pi * j * x / grid.box))


def bump(grid):
    return np.sin(2 * np.pi * grid.axis() / grid.box) ** 2


# --------------------------------------------------------------- biharmonic


def test_constant_is_invariant(grid1):
    f = SampledField(grid1, np.ones(grid1.shape))
    assert np.allclose(engine.biharmonic_step(f, 3.0).values, 1.0, atol=1e-15)


def test_cosine_is_an_eigenfunction(grid1):
    f = cos_mode(grid1)
    t = 0.7
    expect = math.exp(-t * (2 * np.pi / BOX) ** 4) * f.values
    assert np.max(np.abs(engine.biharmonic_step(f, t).values - expect)) < 1e-14


def test_semigroup_law(grid1):
    f = random_field(grid1, 3, 0, 8)
    two = engine.biharmonic_step(engine.biharmonic_step(f, 0.3), 0.5)
    assert rel(two.values, engine.biharmonic_step(f, 0.8).values) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 10.0), st.sampled_from([1, 2]))
def test_mass_and_contraction(seed, t, d):
    grid = GridSpec(d, 32, BOX)
    f = random_field(grid, seed, 0, 4)
    g = engine.biharmonic_step(f, t)
    assert g.values.sum() == pytest.approx(f.values.sum(), rel=1e-12, abs=1e-12 * np.abs(f.values).sum())
    assert engine.l2_norm(g.values, grid) <= engine.l2_norm(f.values, grid) * (1 + 1e-14)


def test_identity_limit_is_monotone(grid1):
    f = random_field(grid1, 1, 0, 8)
    ts = np.geomspace(1.0, 1e-8, 17)
    err = [engine.l2_norm(engine.biharmonic_step(f, t).values - f.values, grid1) for t in ts]
    assert np.all(np.diff(err) < 0) and err[-1] < 1e-6 * err[0]


# ------------------------------------------------------------- Schroedinger


def test_constant_potential_commutes(grid1):
    f = random_field(grid1, 2, 0, 8)
    c, t = 1.3, 0.4
    split = engine.schrodinger4_evolve(f, c, t, substeps=4).values
    expect = math.exp(-t * c * c) * engine.biharmonic_step(f, t).values
    assert np.max(np.abs(split - expect)) < 1e-13
    assert np.max(np.abs(engine.dense_evolve(f, c, t).values - expect)) < 1e-10


def test_zero_potential_is_biharmonic(grid1):
    f = random_field(grid1, 2, 0, 8)
    free = engine.biharmonic_step(f, 0.5).values
    assert np.array_equal(engine.schrodinger4_evolve(f, 0.0, 0.5).values, free)
    assert np.max(np.abs(engine.dense_evolve(f, None, 0.5).values - free)) < 1e-10


def strang_errors(m, steps):
    grid = GridSpec(1, m, BOX)
    f = random_field(grid, 5, 0, 4)
    V = bump(grid)
    ref = engine.dense_evolve(f, V, 1.0).values
    return [engine.l2_norm(engine.schrodinger4_evolve(f, V, 1.0, s).values - ref, grid) for s in steps]


def test_strang_halving_reduces_error_fourfold():
    e = strang_errors(64, [8, 16])
    assert 3.2 < e[0] / e[1] < 4.9


def test_strang_order():
    e = strang_errors(128, [8, 16, 32, 64])
    orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all((orders >= 1.7) & (orders <= 2.3))


# ----------------------------------------------------------------- dense


def test_dense_generator_spectrum():
    grid = GridSpec(1, 32, BOX)
    M = engine.dense_generator(grid)
    f = cos_mode(grid, 3).values
    assert np.allclose(M @ f, (2 * np.pi * 3 / BOX) ** 4 * f, atol=1e-10)
    M = engine.dense_generator(grid, bump(grid) * 3)
    assert np.max(np.abs(M - M.T)) <= 1e-10
    assert np.linalg.eigvalsh(M).min() >= -1e-10


def test_dense_evolve_matches_matrix_exponential():
    grid = GridSpec(1, 32, BOX)
    V = 2 * bump(grid)
    f = random_field(grid, 4, 0, 6)
    ref = linalg.expm(-0.3 * engine.dense_generator(grid, V)) @ f.values
    assert np.max(np.abs(engine.dense_evolve(f, V, 0.3).values - ref)) < 1e-10


def test_dense_size_limit():
    with pytest.raises(engine.DenseLimitError):
        engine.dense_generator(GridSpec(1, 1024, BOX))


def test_dense_semigroup_and_contraction(grid1):
    V = 3 * bump(grid1)
    f = random_field(grid1, 6, 0, 8)
    two = engine.dense_evolve(engine.dense_evolve(f, V, 0.2), V, 0.3).values
    one = engine.dense_evolve(f, V, 0.5).values
    assert rel(two, one) < 1e-12
    assert engine.l2_norm(one, grid1) <= engine.l2_norm(f.values, grid1)


# ------------------------------------------------------------ kernel matrix


def test_free_kernel_column_matches_periodic_kernel():
    grid = GridSpec(1, 256, BOX)
    y = grid.m // 2
    for t in (0.05, 1.0, 10.0):
        col = engine.heat_kernel_column(grid, None, t, y).values
        ref = kernel.b_periodic(grid.axis() - grid.axis()[y], t, BOX)
        assert np.max(np.abs(col - ref)) <= 0.01 * np.max(np.abs(ref))


def test_kernel_symmetry(grid1):
    V = 4 * bump(grid1)
    for t in (0.01, 0.5, 5.0):
        K = engine.kernel_matrix(grid1, V, t)
        assert np.max(np.abs(K - K.T)) <= 1e-8


@pytest.mark.parametrize("V", [None, 0.7])
def test_kernel_mass_for_flat_potentials(grid1, V):
    for t in (0.01, 0.5, 5.0):
        mass = engine.kernel_matrix(grid1, V, t).sum(axis=0) * grid1.h
        assert mass.max() <= 1 + 1e-8
        assert np.allclose(mass, math.exp(-t * (V or 0.0) ** 2), rtol=1e-10)


def test_kernel_mass_can_exceed_one():
    # no maximum principle at fourth order: exp(-tL)1 overshoots 1 near the
    # zeros of a varying potential, and the overshoot is grid independent
    masses = []
    for m in (64, 256):
        grid = GridSpec(1, m, BOX)
        masses.append(engine.kernel_matrix(grid, 4 * bump(grid), 0.1).sum(axis=0).max() * grid.h)
    assert masses[0] > 1.02
    assert masses[0] == pytest.approx(masses[1], rel=1e-9)


def test_time_derivative_column():
    grid = GridSpec(1, 64, BOX)
    V = bump(grid)
    lam, Q = engine.dense_eig(grid, V)
    t, y = 0.4, 10
    exact = -(Q * (lam * np.exp(-t * lam))) @ Q[y] / grid.h
    fd = engine.heat_kernel_time_derivative(grid, V, t, y).values
    assert np.max(np.abs(fd - exact)) <= 1e-3 * np.max(np.abs(exact))


# --------------------------------------------------------- local operator


def test_local_operator_limits(grid1):
    f = random_field(grid1, 7, 0, 8)
    V = 2 * bump(grid1)
    full = engine.local_truncated_evolve(f, V, 0.3, gamma=np.inf).values
    assert np.allclose(full, engine.dense_evolve(f, V, 0.3).values, atol=1e-12)
    assert np.array_equal(engine.local_truncated_evolve(f, V, 0.3, gamma=0.0).values, np.zeros(grid1.shape))


def test_far_part_dominated_by_maximal_function():
    grid = GridSpec(1, 128, BOX)
    V = 2 * bump(grid)
    gamma = 1.0
    ratios = []
    for trial in range(20):
        f = random_field(grid, 9, trial, 16)
        diff = engine.dense_evolve(f, V, 0.5).values - engine.local_truncated_evolve(f, V, 0.5, gamma).values
        ratios.append(np.max(np.abs(diff)) / np.max(maximal_function(f).values))
    assert max(ratios) <= 1.05 * max(ratios[:10])


# ---------------------------------------------------------------- Duhamel


def test_duhamel_zero_potential(grid1):
    f = random_field(grid1, 1, 0, 8)
    f = f.with_values(f.values / engine.l2_norm(f.values, grid1))
    assert engine.duhamel_residual(f, None, 0.5, 16) <= 1e-10


def test_duhamel_constant_potential(grid1):
    f = random_field(grid1, 1, 0, 8)
    f = f.with_values(f.values / engine.l2_norm(f.values, grid1))
    assert engine.duhamel_residual(f, 1.5, 0.1, 64) <= 1e-6


def test_duhamel_simpson_rate():
    grid = GridSpec(1, 128, BOX)
    f = random_field(grid, 2, 0, 16)
    V = 2 * (np.sin(2 * np.pi * grid.axis() / 8.0) ** 2)
    r16, r32 = (engine.duhamel_residual(f, V, 0.03, k) for k in (16, 32))
    assert r16 / r32 >= 8.0


def test_duhamel_node_validation(grid1):
    f = random_field(grid1, 1, 0, 8)
    with pytest.raises(ValueError):
        engine.duhamel_residual(f, None, 0.1, 15)


# ------------------------------------------------------------ subordination


def test_poisson_identity_limit(grid1):
    f = SampledField.from_function(grid1, lambda x: np.exp(-(x**2) / (2 * 0.5**2)))
    g = engine.poisson_apply(f, None, 1e-3)
    assert engine.l2_norm(g.values - f.values, grid1) <= 0.01 * engine.l2_norm(f.values, grid1)


@pytest.mark.parametrize("t", [1e-3, 0.1, 1.0, 5.0])
def test_poisson_eigenfunction_identity(grid1, t):
    f = cos_mode(grid1)
    mu = (2 * np.pi / BOX) ** 4
    g = engine.poisson_apply(f, None, t, PoissonParams(0.5, 64))
    assert np.max(np.abs(g.values - math.exp(-t * math.sqrt(mu)) * f.values)) <= 1e-8


@pytest.mark.parametrize("t", [0.1, 0.2, 0.5, 1.0])
def test_poisson_node_doubling(grid1, t):
    f = cos_mode(grid1)
    a = engine.poisson_apply(f, None, t, PoissonParams(0.5, 32)).values
    b = engine.poisson_apply(f, None, t, PoissonParams(0.5, 64)).values
    assert np.max(np.abs(a - b)) < 1e-8


def test_poisson_general_sigma_matches_bessel_k():
    from scipy import special

    lam = np.geomspace(1e-3, 1e3, 25)
    for sigma in (0.2, 0.5, 0.8):
        a = 0.25 * lam
        exact = 2 / math.gamma(sigma) * a ** (sigma / 2) * special.kv(sigma, 2 * np.sqrt(a))
        got = engine.poisson_multiplier(lam, 1.0, PoissonParams(sigma, 64))
        assert np.max(np.abs(got - exact)) < 1e-10


def test_poisson_dense_route_agrees_with_spectral(grid1):
    f = random_field(grid1, 8, 0, 8)
    spectral = engine.poisson_apply(f, None, 0.4).values
    dense = engine.dense_apply(f, None, lambda lam: engine.poisson_multiplier(lam, 0.4, PoissonParams())).values
    assert np.max(np.abs(spectral - dense)) < 1e-10


def test_poisson_params_validation():
    with pytest.raises(ValueError):
        PoissonParams(sigma=1.0)
    with pytest.raises(ValueError):
        PoissonParams(rule="simpson")


# ---------------------------------------------------------------- series


@pytest.mark.parametrize("kind", ["biharmonic", "schrodinger", "poisson"])
def test_series_matches_single_applications(grid1, kind):
    f = random_field(grid1, 3, 0, 8)
    V = None if kind == "biharmonic" else 2 * bump(grid1)
    times = [1.0, 0.3, 0.05]
    series = engine.semigroup_series(kind, f, V, times)
    evolve = engine.evolve_family(kind, f, V)
    for t, row in zip(times, series):
        assert np.max(np.abs(row - evolve(t).values)) < 1e-12

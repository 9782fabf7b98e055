import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bvc import kernel
from bvc.specfun import g_zero, profile

G0 = g_zero(1)


def direct_b(x, t):
    """n = 1 kernel by adaptive quadrature of (1/pi) int_0^inf cos(x k) e^{-t k^4} dk."""
    f = lambda k: math.cos(x * k) * math.exp(-t * k**4)
    return integrate.quad(f, 0.0, 8.0 * t**-0.25, limit=400, epsabs=1e-14)[0] / math.pi


def fd_t(func, n, x, t, h=1e-5):
    return (func(n, x, t * (1 + h)) - func(n, x, t * (1 - h))) / (2 * h * t)


def test_kernel_at_origin_unit_time():
    assert kernel.b_eval(1, 0.0, 1.0) == pytest.approx(G0, rel=1e-12)


def test_self_similarity():
    n, x, t = 2, 1.3, 0.7
    assert kernel.b_eval(n, x, t) == pytest.approx(t ** (-n / 4) * kernel.b_eval(n, x * t**-0.25, 1.0), rel=1e-14)


@pytest.mark.parametrize("x,t", [(2.0, 1.0), (0.5, 0.1), (3.0, 7.0)])
def test_kernel_matches_direct_quadrature(x, t):
    assert kernel.b_eval(1, x, t) == pytest.approx(direct_b(x, t), abs=1e-11 * t**-0.25)


def test_time_derivative_at_origin():
    assert kernel.b_time_derivative(1, 0.0, 1.0) == pytest.approx(-G0 / 4, rel=1e-12)
    assert kernel.b_time_derivative(1, 0.0, 1.0) == pytest.approx(fd_t(kernel.b_eval, 1, 0.0, 1.0), rel=1e-7)


def test_time_derivative_finite_differences():
    assert kernel.b_time_derivative(1, 1.5, 0.5) == pytest.approx(fd_t(kernel.b_eval, 1, 1.5, 0.5), rel=1e-6)


def test_time_derivative_scaling():
    n, x, t = 2, 1.0, 2.0
    expect = -(t ** (-n / 4 - 1)) * kernel.time_bracket(n, x * t**-0.25)
    assert kernel.b_time_derivative(n, x, t) == pytest.approx(expect, rel=1e-14)


def test_space_gradient():
    h = 1e-5
    assert kernel.b_space_gradient(1, 0.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    fd = (profile(1, 1 + h) - profile(1, 1 - h)) / (2 * h)
    assert kernel.b_space_gradient(1, 1.0, 1.0) == pytest.approx(abs(fd), rel=1e-6)
    assert kernel.b_space_gradient(3, 2.0, 16.0) == pytest.approx(abs(profile(3, 1.0, 1)) / 16, rel=1e-13)


def test_mixed_derivative_finite_differences():
    for n, x, t in [(1, 1.2, 0.8), (3, 0.6, 2.0)]:
        fd = fd_t(kernel.b_radial_derivative, n, x, t)
        assert kernel.b_mixed_derivative(n, x, t) == pytest.approx(fd, rel=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(0.0, 8.0), st.floats(1e-2, 1e2))
def test_scaling_of_every_derivative(n, x, t):
    eta = x * t**-0.25
    assert kernel.b_eval(n, x, t) == pytest.approx(t ** (-n / 4) * profile(n, eta), rel=1e-12, abs=1e-300)
    assert kernel.b_radial_derivative(n, x, t) == pytest.approx(
        t ** (-(n + 1) / 4) * profile(n, eta, 1), rel=1e-12, abs=1e-300)


def test_periodic_kernel_is_image_sum():
    x = np.array([0.0, 1.0, 7.5])
    expect = sum(kernel.b_eval(1, np.abs(x + 16.0 * j), 2.0) for j in range(-3, 4))
    assert np.allclose(kernel.b_periodic(x, 2.0, 16.0), expect, rtol=1e-14)


def test_input_validation():
    with pytest.raises(ValueError):
        kernel.b_eval(1, 1.0, 0.0)
    with pytest.raises(ValueError):
        kernel.b_eval(1, -1.0, 1.0)


# ------------------------------------------------------------------ sweeps


def test_single_point_ratio_is_g_zero():
    rep = kernel.verify_lemma_K(1, x_grid=[0.0], t_grid=[1.0])["k"]
    assert rep.empirical_C == pytest.approx(G0, rel=1e-12)


def test_far_points_are_flagged_and_excluded():
    rep = kernel.verify_lemma_K(1, x_grid=[0.0, 60.0], t_grid=[1e-3])["k"]
    far = [p for p in rep.points if p.x_mag == 60.0]
    assert far and all(p.flag for p in far)
    assert rep.empirical_C == pytest.approx(G0, rel=1e-12)


def test_dimension_five_sweep_stabilises():
    reps = kernel.verify_lemma_K(5, eta_grid=np.linspace(0, 10, 27))
    for name in ("k", "kt", "kx"):
        assert reps[name].stabilized and math.isfinite(reps[name].empirical_C)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_polynomial_bound_holds_on_an_extended_sweep(n):
    # the time-derivative ratio peaks near eta = 10-12, so it settles only past eta = 12
    rep = kernel.verify_lemma_K(n, eta_grid=np.linspace(0, 24, 97))["bxt"]
    assert kernel.restabilize(rep, split=16.0)
    etas, ratios = kernel.ratio_profile(rep, "k0l1")
    assert 8.0 < etas[np.argmax(ratios)] < 14.0


def test_bxt_report_combines_both_orders():
    rep = kernel.verify_lemma_K(2, t_grid=[1.0])["bxt"]
    assert {p.label for p in rep.points} == {"k0l1", "k1l1"}
    assert rep.empirical_C == pytest.approx(np.nanmax([p.ratio for p in rep.points]))

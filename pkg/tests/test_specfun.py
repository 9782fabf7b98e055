import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from bvc import specfun
from bvc.specfun import ProfileQuery, bessel_j, bessel_phi, g_derivative, g_profile, g_zero, profile

G0_1D = math.gamma(0.25) / (4.0 * math.pi)


def cosine_oracle(eta, order=0):
    """(1/pi) int_0^inf k^m cos(eta k + m pi/2) e^{-k^4} dk by adaptive quadrature."""
    f = lambda k: k**order * math.cos(eta * k + order * math.pi / 2) * math.exp(-(k**4))
    return integrate.quad(f, 0.0, 8.0, limit=400, epsabs=1e-14, epsrel=1e-13)[0] / math.pi


# ------------------------------------------------------------------ Bessel


def test_bessel_j0_at_zero():
    assert bessel_j(0, 0.0) == 1.0


def test_bessel_half_order_closed_form():
    assert bessel_j(0.5, math.pi / 2) == pytest.approx(2.0 / math.pi, rel=1e-13)


def test_bessel_first_zero_matches_integral_representation():
    z = 2.4048256
    oracle = integrate.quad(lambda th: math.cos(z * math.sin(th)), 0.0, math.pi, epsabs=1e-12)[0] / math.pi
    assert abs(bessel_j(0, z)) < 1e-6
    assert bessel_j(0, z) == pytest.approx(oracle, abs=1e-11)


@pytest.mark.parametrize("v", [0, 0.5, 1, 1.5, 2, 2.5, 3.5, 5])
def test_bessel_matches_scipy(v):
    z = np.linspace(0.0, 50.0, 401)
    assert np.max(np.abs(bessel_j(v, z) - special.jv(v, z))) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0]), st.floats(0.05, 40.0))
def test_bessel_three_term_recurrence(v, z):
    lhs = bessel_j(v - 1, z) + bessel_j(v + 1, z)
    rhs = 2.0 * v / z * bessel_j(v, z)
    assert lhs == pytest.approx(rhs, abs=1e-11 * max(1.0, abs(rhs)))


def test_phi_regular_at_origin():
    # Phi_v(0) = 1 / (2^v Gamma(v + 1))
    for v in (-0.5, 0.0, 0.5, 1.0, 2.0):
        assert bessel_phi(v, 0.0) == pytest.approx(1.0 / (2**v * math.gamma(v + 1)), rel=1e-14)


# ----------------------------------------------------------------- profile


def test_g_zero_closed_form_against_quadrature():
    assert g_profile(ProfileQuery(1, 0.0)) == pytest.approx(G0_1D, abs=1e-12)
    assert cosine_oracle(0.0) == pytest.approx(G0_1D, abs=1e-12)
    for n in range(1, 7):
        assert profile(n, 0.0) == pytest.approx(g_zero(n), rel=1e-10)


def test_g_is_even():
    # radial: the value at -eta is the value at radius |eta|
    assert profile(1, 3.0) == profile(1, abs(-3.0))
    assert profile(1, 3.0) == pytest.approx(cosine_oracle(-3.0), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_unit_mass(n):
    assert specfun.profile_mass(n) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("eta", [0.0, 0.7, 2.0, 4.5, 9.0])
def test_hankel_matches_cosine_route(eta):
    for m in (0, 1, 2):
        assert profile(1, eta, m) == pytest.approx(cosine_oracle(eta, m), abs=1e-11)
    assert profile(1, eta) == pytest.approx(specfun.profile_direct_1d(eta)[0], abs=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_hankel_matches_tensor_route(n):
    eta = np.array([0.0, 0.5, 1.5, 3.0, 6.0])
    assert np.max(np.abs(profile(n, eta) - specfun.profile_tensor(n, eta))) < 1e-8


def test_first_derivative_vanishes_at_origin():
    assert g_derivative(ProfileQuery(1, 0.0, 1)) == pytest.approx(0.0, abs=1e-15)


def test_derivatives_match_finite_differences():
    h = 1e-4
    fd1 = (profile(1, 1.0 + h) - profile(1, 1.0 - h)) / (2 * h)
    assert g_derivative(ProfileQuery(1, 1.0, 1)) == pytest.approx(fd1, rel=1e-6)
    fd2 = (profile(2, 0.5 + h) - 2 * profile(2, 0.5) + profile(2, 0.5 - h)) / h**2
    assert g_derivative(ProfileQuery(2, 0.5, 2)) == pytest.approx(fd2, rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(0.0, 15.0))
def test_profile_bounded_by_its_peak(n, eta):
    # |g(eta)| <= (2 pi)^{-n} int e^{-|k|^4} dk = g(0)
    assert abs(profile(n, eta)) <= g_zero(n) * (1 + 1e-10)


def test_query_validation():
    with pytest.raises(ValueError):
        ProfileQuery(0, 1.0)
    with pytest.raises(ValueError):
        ProfileQuery(1, -1.0)
    with pytest.raises(ValueError):
        g_profile(ProfileQuery(1, 1.0, 1))
    with pytest.raises(ValueError):
        profile(1, [1.0, np.nan])


# ---------------------------------------------------------------- envelope


def test_envelope_at_origin_is_g_zero():
    rep = specfun.check_g_envelope(1, [0.0], 0)
    assert rep.empirical_C == pytest.approx(G0_1D, rel=1e-12)


def test_envelope_sweep_stabilises_and_reports_a1():
    rep = specfun.check_g_envelope(1, np.linspace(0, 12, 97), 0)
    assert math.isfinite(rep.empirical_C) and rep.stabilized
    assert rep.header["A1"] == pytest.approx(3 * 2 ** (1 / 3) / 16)
    assert specfun.A1 == pytest.approx(0.236235, abs=1e-6)


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("m", [0, 1, 2])
def test_envelope_maximum_is_interior(n, m):
    eta = np.linspace(0, 12, 97)
    rep = specfun.check_g_envelope(n, eta, m)
    assert rep.stabilized
    assert np.argmax(rep.ratios) < len(eta) - 1

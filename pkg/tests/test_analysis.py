from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_genlaguerre

from logkpp.analysis import linfit, logfit, ma_operator, ma_residual, ma_spectrum, powfit, principal_q
from logkpp.errors import ModelError
from logkpp.model import alpha_of


def test_linfit_exact():
    x = np.arange(10.0)
    r = linfit(x, 3.0 * x + 1.0)
    assert r.coefficient == pytest.approx(3.0, abs=1e-13)
    assert r.intercept == pytest.approx(1.0, abs=1e-12)
    assert r.rms < 1e-12
    assert r.n_points == 10


def test_powfit_matching_beta():
    t = np.geomspace(100.0, 1000.0, 30)
    beta = 1.0 / 3.0
    r = powfit(t, 5.0 * t**beta, beta)
    assert r.coefficient == pytest.approx(5.0, rel=1e-12)
    assert r.intercept == pytest.approx(0.0, abs=1e-10)


def test_logfit_synthetic():
    t = np.geomspace(50.0, 5000.0, 60)
    r = logfit(t, 1.5 * np.log(t) + 0.3, window=(500.0, 5000.0))
    assert r.coefficient == pytest.approx(1.5, abs=1e-12)
    assert r.intercept == pytest.approx(0.3, abs=1e-11)
    assert r.window[0] >= 500.0


def test_noisy_fit_within_three_sigma():
    rng = np.random.default_rng(20240611)
    x = np.linspace(0.0, 10.0, 200)
    y = 2.5 * x - 1.0 + rng.normal(0.0, 0.3, x.size)
    r = linfit(x, y)
    assert abs(r.coefficient - 2.5) <= 3.0 * r.stderr


def test_fit_preconditions():
    with pytest.raises(ModelError):
        linfit(np.arange(7.0), np.arange(7.0))
    with pytest.raises(ModelError):
        linfit(np.ones(10), np.arange(10.0))
    with pytest.raises(ModelError):
        linfit(np.arange(10.0), np.arange(10.0), window=(100.0, 200.0))
    with pytest.raises(ModelError):
        logfit(np.linspace(-1.0, 1.0, 10), np.ones(10))


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
    seed=st.integers(0, 2**31 - 1),
)
def test_fits_bit_reproducible(a, b, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(1.0, 100.0, 40))
    y = a * np.log(x) + b + rng.normal(0.0, 0.1, x.size)
    r1 = logfit(x, y)
    r2 = logfit(x.copy(), y.copy())
    assert r1 == r2


# --- radial oscillator --------------------------------------------------------


def _potential(A, y):
    a = alpha_of(A)
    return y * y / 16.0 + 0.25 + A / (y * y) - 0.5 * (1.0 + a)


def test_principal_eigenfunction_closed_form_a2():
    # for A = 2, Q = y^2 exp(-y^2/8) and Q'' = (2 - 5y^2/4 + y^4/16) exp(-y^2/8)
    y = np.linspace(0.1, 30.0, 500)
    e = np.exp(-y * y / 8.0)
    q = y * y * e
    q2 = (2.0 - 1.25 * y * y + y**4 / 16.0) * e
    # independent check of the second derivative by central differences
    h = 1e-4
    fd = ((y + h) ** 2 * np.exp(-((y + h) ** 2) / 8.0) - 2.0 * q + (y - h) ** 2 * np.exp(-((y - h) ** 2) / 8.0)) / h**2
    np.testing.assert_allclose(fd, q2, atol=1e-6)
    np.testing.assert_allclose(-q2 + _potential(2.0, y) * q, 0.0, atol=1e-13)


@pytest.mark.parametrize("A", [1.0, 2.0, 4.0])
@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_laguerre_oracle(A, n):
    # y^a L_n^(a-1/2)(y^2/4) e^{-y^2/8} is an eigenfunction with eigenvalue n
    a = alpha_of(A)

    def psi(y):
        return y**a * np.exp(-y * y / 8.0) * eval_genlaguerre(n, a - 0.5, y * y / 4.0)

    y = np.linspace(0.5, 8.0, 40)
    h = 1e-3
    d2 = (psi(y + h) - 2.0 * psi(y) + psi(y - h)) / h**2
    res = -d2 + _potential(A, y) * psi(y) - n * psi(y)
    assert np.max(np.abs(res)) <= 1e-5 * np.max(np.abs(psi(y)))


@pytest.mark.parametrize("A", [1.0, 2.0, 4.0])
def test_residual_second_order_consistent(A):
    r1 = ma_residual(A, 1.0 / 100.0, 40.0)
    r2 = ma_residual(A, 1.0 / 200.0, 40.0)
    assert r2 <= 1e-3
    assert 3.5 <= r1 / r2 <= 4.5


@pytest.mark.parametrize("A", [1.0, 4.0])
def test_standard_stencil_rate(A):
    # sampling A/y^2 at the nodes gives an O(h^(alpha - 3/2)) residual for non-integer alpha
    a = alpha_of(A)
    r1 = ma_residual(A, 1.0 / 100.0, 40.0, "standard")
    r2 = ma_residual(A, 1.0 / 200.0, 40.0, "standard")
    assert math.log2(r1 / r2) == pytest.approx(min(a - 1.5, 2.0), abs=0.05)


def test_stencils_coincide_for_integer_alpha():
    _, d1, _ = ma_operator(2.0, 0.01, 30.0, "consistent")
    _, d2, _ = ma_operator(2.0, 0.01, 30.0, "standard")
    np.testing.assert_allclose(d1, d2, rtol=1e-9)


@pytest.mark.parametrize("A", [1.0, 2.0, 4.0])
def test_spectrum_levels(A):
    s = ma_spectrum(A, 1.0 / 200.0, 40.0, 5)
    lam = s.eigenvalues
    assert np.all(np.diff(lam) > 0.0)
    assert abs(lam[0]) <= 1e-3
    assert lam[1] - lam[0] >= 0.9
    np.testing.assert_allclose(lam, np.arange(5.0), atol=1e-2)
    np.testing.assert_allclose(np.diff(lam), 1.0, atol=1e-2)
    assert s.ground_state_distance <= 1e-2


def test_spectrum_a2_reference():
    s = ma_spectrum(2.0, 1.0 / 200.0, 40.0, 2)
    assert s.eigenvalues[0] == pytest.approx(0.0, abs=1e-3)
    assert s.eigenvalues[1] == pytest.approx(1.0, abs=1e-2)


def test_principal_q_normalized():
    h = 0.01
    y = np.arange(1, 4000) * h
    q = principal_q(1.0, y, h)
    assert h * float(np.dot(q, q)) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize(
    "kw",
    [
        dict(h=0.06, L=40.0),
        dict(h=0.0, L=40.0),
        dict(h=0.01, L=20.0),
        dict(h=0.03, L=40.0),
        dict(h=0.01, L=math.inf),
    ],
)
def test_degenerate_grid(kw):
    with pytest.raises(ModelError):
        ma_residual(2.0, **kw)


@pytest.mark.parametrize("k", [0, 11, 2.5])
def test_spectrum_k_range(k):
    with pytest.raises(ModelError):
        ma_spectrum(2.0, 0.01, 40.0, k)


def test_unknown_stencil():
    with pytest.raises(ModelError):
        ma_operator(2.0, 0.01, 40.0, "five-point")

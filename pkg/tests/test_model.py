from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logkpp.errors import ModelError, SchemeViolation
from logkpp.model import (
    ReactionEvalPolicy,
    alpha_of,
    gamma_curve,
    gamma_prime,
    gamma_second,
    make_params,
    reaction,
    reaction_array,
)

LATTICE = [(r, A) for r in (1.2, 1.5, 2.0, 2.5, 2.9, 3.0, 4.0, 5.0) for A in (0.5, 1.0, 2.0, 4.0)]


def test_params_r2_a1():
    p = make_params(2.0, 1.0)
    assert p.gamma == pytest.approx(2.0 / 3.0, rel=1e-15)
    assert p.beta == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert p.nu == pytest.approx(math.e, rel=1e-15)
    assert p.y_bar == pytest.approx(3.0 ** (2.0 / 3.0), rel=1e-14)
    assert p.y_bar == pytest.approx(2.080084, abs=1e-6)


def test_params_r3_boundary():
    p = make_params(3.0, 2.0)
    assert p.beta == 0.0
    assert p.alpha == 2.0
    assert p.s_a == 2.5
    assert p.regime == "r=3"


@pytest.mark.parametrize("A,expected", [(2.0, 2.0), (6.0, 3.0), (1.0, (1.0 + math.sqrt(5.0)) / 2.0)])
def test_alpha_of(A, expected):
    assert alpha_of(A) == pytest.approx(expected, rel=1e-15)
    assert alpha_of(A) > 1.0


@pytest.mark.parametrize("r,A", [(1.0, 1.0), (0.5, 1.0), (2.0, 0.0), (2.0, -1.0), (math.nan, 1.0), (2.0, math.inf)])
def test_make_params_rejects(r, A):
    with pytest.raises(ModelError):
        make_params(r, A)


def test_alpha_rejects_nonpositive():
    with pytest.raises(ModelError):
        alpha_of(0.0)


def test_nu_normalization_gives_steady_state():
    # with the literal exponent -1/(r-1) the value at u=1 would be 1 - A^2
    for r, A in LATTICE:
        p = make_params(r, A)
        assert abs(reaction(1.0, p)) <= 1e-12
        assert p.log_nu == pytest.approx(A ** (1.0 / (r - 1.0)), rel=1e-15)


def test_large_log_nu_kept_finite():
    p = make_params(1.2, 4.0)
    assert p.log_nu == pytest.approx(1024.0)
    assert p.nu == math.inf
    from decimal import Decimal

    nu = Decimal(p.manifest()["nu"])
    assert float(nu.ln()) == pytest.approx(p.log_nu, rel=1e-15)


def test_manifest_digits():
    m = make_params(2.0, 1.0).manifest()
    assert set(m) == {"r", "A", "nu", "gamma", "beta", "alpha", "s_a", "y_bar", "log_nu"}
    mant = m["gamma"].split("e")[0].replace(".", "").lstrip("-")
    assert len(mant) >= 15
    assert float(m["nu"]) == pytest.approx(math.e, rel=1e-15)


def test_reaction_examples():
    p = make_params(2.0, 1.0)
    assert reaction(0.0, p) == 0.0
    assert reaction(math.exp(-1.0), p) == pytest.approx(1.0 / (2.0 * math.e), rel=1e-14)
    assert reaction(math.exp(-1.0), p) == pytest.approx(0.183940, abs=1e-6)


def test_reaction_small_u_limit():
    p = make_params(2.0, 1.0)
    for u in (1e-10, 1e-50, 1e-200):
        assert reaction(u, p) / u == pytest.approx(1.0, abs=1.0 / math.log(1.0 / u) * 1.01)
    assert reaction(1e-310, p) == 1e-310


def test_reaction_rejects_scheme_violations():
    p = make_params(2.0, 0.01)  # nu = exp(0.01)
    with pytest.raises(SchemeViolation):
        reaction(-1e-3, p)
    with pytest.raises(SchemeViolation):
        reaction(1.5, p)
    with pytest.raises(SchemeViolation):
        reaction(math.nan, p)
    # overshoot below nu is clamped to the steady state
    assert reaction(1.005, p) == reaction(1.0, p)


def test_reaction_array_matches_scalar():
    p = make_params(1.5, 2.0)
    u = np.concatenate([[0.0, 1e-305], np.linspace(1e-6, 1.0, 50)])
    np.testing.assert_allclose(reaction_array(u, p), [reaction(v, p) for v in u], rtol=1e-14, atol=0)
    with pytest.raises(SchemeViolation):
        reaction_array(np.array([0.5, -0.1]), p)


def test_policy_validation():
    with pytest.raises(ModelError):
        ReactionEvalPolicy(clamp_low=0.0)
    with pytest.raises(ModelError):
        ReactionEvalPolicy(clamp_low=1.0)
    with pytest.raises(ModelError):
        ReactionEvalPolicy(clamp_high=2.0)


def test_gamma_curve_examples():
    p = make_params(2.0, 1.0)
    yb = p.y_bar
    assert gamma_curve(yb, p) == pytest.approx(2.0 * 3.0 ** (1.0 / 3.0), rel=1e-14)
    assert gamma_curve(yb, p) == pytest.approx(2.884499, abs=1e-6)
    assert gamma_prime(yb, p) == pytest.approx(3.0 ** (-1.0 / 3.0), rel=1e-14)
    assert gamma_prime(yb, p) == pytest.approx(p.gamma * yb / 2.0, rel=1e-14)
    assert gamma_curve(1e-12, p) > 1e12


def test_gamma_curve_domain():
    p = make_params(2.0, 1.0)
    with pytest.raises(ModelError):
        gamma_curve(0.0, p)
    with pytest.raises(ModelError):
        gamma_curve(-1.0, p)
    with pytest.raises(ModelError):
        gamma_curve(1.0, make_params(3.0, 1.0))
    with pytest.raises(ModelError):
        gamma_curve(1.0, make_params(4.0, 1.0))


def test_gamma_convex_single_minimum():
    p = make_params(1.7, 3.0)
    y = np.linspace(0.05, 20.0, 4000)
    assert np.all(gamma_second(y, p) > 0.0)
    g = gamma_curve(y, p)
    i = int(np.argmin(g))
    assert 0 < i < y.size - 1
    assert np.all(np.diff(g[: i + 1]) < 0.0) and np.all(np.diff(g[i:]) > 0.0)


@pytest.mark.parametrize("r,A", LATTICE)
def test_constant_identities(r, A):
    p = make_params(r, A)
    assert abs(math.sqrt(p.gamma**2 - p.beta) - (1.0 - p.gamma)) <= 1e-12
    assert p.gamma - p.beta == pytest.approx((r - 1.0) / (1.0 + r), abs=1e-15)
    assert abs(p.alpha * (p.alpha - 1.0) - A) <= 1e-12
    if r < 3.0:
        target = p.gamma * p.y_bar / 2.0
        assert abs(gamma_prime(p.y_bar, p) - target) <= 1e-10 * (1.0 + abs(target))


@settings(max_examples=300, deadline=None)
@given(
    r=st.floats(1.05, 6.0),
    A=st.floats(0.05, 5.0),
    u=st.floats(0.0, 1.0, allow_subnormal=False),
)
def test_reaction_between_zero_and_u(r, A, u):
    p = make_params(r, A)
    f = reaction(u, p)
    assert -1e-15 <= f <= u * (1.0 + 1e-15)


@settings(max_examples=100, deadline=None)
@given(r=st.floats(1.2, 6.0), A=st.floats(0.25, 5.0))
def test_slope_at_one_matches_difference(r, A):
    p = make_params(r, A)
    h = 1e-6 / (1.0 + abs(p.slope_at_one))
    fd = (reaction(1.0, p) - reaction(1.0 - h, p)) / h
    assert fd == pytest.approx(p.slope_at_one, rel=1e-3, abs=1e-9)

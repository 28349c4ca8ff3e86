"""Critical profile of the first-order delay equation for ``1 < r < 3``.

For ``theta`` real, ``phi_theta`` solves

    phi' = gamma y / 2 - sqrt(beta (Gamma - phi)),   phi(0) = theta,

below the barrier ``Gamma(y) = gamma^2 y^2 / (4 beta) + A y^(1-r) / beta``.
``Theta`` is the largest ``theta`` for which ``phi_theta`` stays strictly
below ``Gamma``; the critical curve touches ``Gamma`` tangentially at
``y_bar = (1+r)^gamma A^(gamma/2)`` and continues past it on the plus root
as ``Phi``.

Two independent routes compute ``Theta``:

* :func:`solve_phi_terminal` integrates backward from the tangency point and
  reads off ``phi(0)``;
* :func:`compute_theta_bisection` bisects on ``theta`` with the forward
  initial value problem as the exists/crosses predicate.

Numerical notes
---------------
Both endpoints are non-Lipschitz.  Near ``y = 0`` the solver integrates the
regular quantity ``psi = phi + a y^p`` (``a = 2 sqrt(A)/(3-r)``,
``p = (3-r)/2``) in ``s = log y``; its right-hand side is written without
the cancellation between ``sqrt(beta (Gamma - phi))`` and ``sqrt(A) y^((1-r)/2)``.
Near ``y_bar`` it integrates the gap ``Z = Gamma - phi`` directly, started
from the tangency series ``Z ~ kappa (y - y_bar)^2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .analysis import linfit
from .errors import BranchViolation, ModelError, NumericalError
from .model import ModelParams, gamma_curve, gamma_prime, gamma_second, make_params

logger = logging.getLogger(__name__)

# radicands more negative than this (relative to Gamma) are branch violations
RADICAND_SNAP = 1e-14
TANGENCY_OFFSET = 1e-4
FLOOR_RATIO = 1e-12


@dataclass
class ProfileCurve:
    """Samples of ``phi`` (minus root) and, if extended, ``Phi`` (plus root)."""

    y: np.ndarray
    value: np.ndarray
    derivative: np.ndarray
    second: np.ndarray
    gap: np.ndarray
    branch: np.ndarray
    theta: float

    def __len__(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class ThetaResult:
    theta: float
    theta_r: float
    method: str
    residual: float
    ybar: float


@dataclass
class IvpOutcome:
    """Result of the forward problem.

    ``status`` is ``"exists"`` when ``phi`` stays below the barrier up to
    ``y_max``, ``"touched"`` when it meets the barrier with matching slope,
    and ``"crossed"`` otherwise.
    """

    status: str
    curve: ProfileCurve
    y_event: float = math.nan

    @property
    def exists(self) -> bool:
        return self.status == "exists"


@dataclass
class SweepRow:
    r: float
    A: float
    theta: float = math.nan
    theta_r: float = math.nan
    ybar: float = math.nan
    method_residual: float = math.nan
    error: str = ""
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return not self.error


def _require_subcritical(params: ModelParams) -> None:
    if not 1.0 < params.r < 3.0:
        raise ModelError(f"the profile equations need 1 < r < 3, got r = {params.r}")


class _Equations:
    """Right-hand sides shared by the terminal, forward, and plus-root solves."""

    def __init__(self, params: ModelParams):
        _require_subcritical(params)
        self.p = params
        r, A = params.r, params.A
        self.g = params.gamma
        self.b = params.beta
        self.sb = math.sqrt(params.beta)
        self.sA = math.sqrt(A)
        self.expo = (3.0 - r) / 2.0
        self.a = params.tail_coefficient
        self.ybar = params.y_bar
        self.c = gamma_second(self.ybar, params) - self.g / 2.0
        if not self.c > 0.0:
            raise BranchViolation(f"tangency curvature c = {self.c} is not positive")
        m = (-self.sb + math.sqrt(self.b + 8.0 * self.c)) / 4.0
        self.m = m
        self.kappa = m * m

    # barrier pieces, scalar fast paths
    def G(self, y: float) -> float:
        return self.g * self.g * y * y / (4.0 * self.b) + self.p.A * y ** (1.0 - self.p.r) / self.b

    def Y(self, y: float) -> float:
        """``Gamma'(y) - gamma y / 2``: negative left of ``y_bar``, positive right."""
        g, b, r = self.g, self.b, self.p.r
        return g * g * y / (2.0 * b) + (1.0 - r) * self.p.A * y ** (-r) / b - g * y / 2.0

    def root(self, z: float, y: float) -> float:
        if z >= 0.0:
            return math.sqrt(self.b * z)
        if z >= -RADICAND_SNAP * self.G(y):
            return 0.0
        raise BranchViolation(f"barrier crossed at y = {y}: Gamma - phi = {z}")

    def psi_rhs(self, s: float, state):
        """d psi / d(log y) for the minus root."""
        y = math.exp(s)
        phi = state[0] - self.a * y**self.expo
        z = self.G(y) - phi
        if z <= 0.0:
            # only reachable on the forward solve after a crossing event
            return [y * (self.g * y / 2.0 + self.sA * y ** ((1.0 - self.p.r) / 2.0))]
        den = math.sqrt(self.b * z) + self.sA * y ** ((1.0 - self.p.r) / 2.0)
        return [y * (self.g * y / 2.0 - (self.g * self.g * y * y / 4.0 - self.b * phi) / den)]

    def gap_rhs_minus(self, y: float, state):
        return [self.Y(y) + self.root(state[0], y)]

    def gap_rhs_plus(self, y: float, state):
        return [self.Y(y) - self.root(state[0], y)]

    def gap_rhs_forward(self, y: float, state):
        z = state[0]
        return [self.Y(y) + (math.sqrt(self.b * z) if z > 0.0 else 0.0)]

    def psi_series(self, theta: float, y: float) -> float:
        """Two-term endpoint series of ``psi`` near ``y = 0``."""
        r = self.p.r
        return theta + self.b * theta / (self.sA * (r + 1.0)) * y ** ((r + 1.0) / 2.0)

    # samples -------------------------------------------------------------
    def minus_samples(self, y, gap):
        y = np.asarray(y, dtype=float)
        gap = np.asarray(gap, dtype=float)
        G = gamma_curve(y, self.p)
        root = np.sqrt(self.b * np.maximum(gap, 0.0))
        deriv = self.g * y / 2.0 - root
        Yv = gamma_prime(y, self.p) - self.g * y / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(gap > 0.0, Yv / np.sqrt(np.maximum(gap, 1e-300)), -self.c / self.m)
        second = (self.g - self.b) / 2.0 - self.sb / 2.0 * ratio
        return G - gap, deriv, second

    def plus_samples(self, y, gap):
        y = np.asarray(y, dtype=float)
        gap = np.asarray(gap, dtype=float)
        G = gamma_curve(y, self.p)
        root = np.sqrt(self.b * np.maximum(gap, 0.0))
        deriv = self.g * y / 2.0 + root
        Yv = gamma_prime(y, self.p) - self.g * y / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(gap > 0.0, Yv / np.sqrt(np.maximum(gap, 1e-300)), self.c / self.m)
        second = (self.g - self.b) / 2.0 + self.sb / 2.0 * ratio
        return G - gap, deriv, second


def _ivp(fun, span, y0, tol, **kw):
    sol = solve_ivp(fun, span, y0, method="DOP853", rtol=tol, atol=tol * 1e-3, dense_output=True, **kw)
    if sol.status == -1:
        raise NumericalError(f"integration failed: {sol.message}")
    return sol


def _curve(eq: _Equations, ys, gaps, branch: str, theta: float, values=None) -> ProfileCurve:
    """Assemble samples.  ``values`` overrides ``Gamma - gap`` where the value
    itself was integrated (near ``y = 0`` that difference cancels badly)."""
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(ys)
    ys = ys[order]
    gaps = np.asarray(gaps, dtype=float)[order]
    if branch == "minus":
        value, deriv, second = eq.minus_samples(ys, gaps)
    else:
        value, deriv, second = eq.plus_samples(ys, gaps)
    if values is not None:
        values = np.asarray(values, dtype=float)[order]
        value = np.where(np.isnan(values), value, values)
    return ProfileCurve(
        y=ys,
        value=value,
        derivative=deriv,
        second=second,
        gap=gaps,
        branch=np.full(ys.size, branch),
        theta=theta,
    )


def solve_phi_terminal(
    params: ModelParams, y_floor: float | None = None, tol: float = 1e-12, samples_per_decade: int = 40
) -> tuple[ProfileCurve, ThetaResult]:
    """Integrate the critical curve backward from the tangency point.

    Parameters
    ----------
    params:
        Model with ``1 < r < 3``.
    y_floor:
        Smallest abscissa reached; defaults to ``1e-12 * y_bar``.
    tol:
        Relative tolerance of the integrator.

    Returns
    -------
    curve, result
        ``result.theta`` is the extrapolated ``phi(0+)``.
    """
    eq = _Equations(params)
    ybar = eq.ybar
    if y_floor is None:
        y_floor = FLOOR_RATIO * ybar
    if not 0.0 < y_floor < 1e-2 * ybar:
        raise ModelError("y_floor must lie in (0, y_bar / 100)")

    dt = TANGENCY_OFFSET * ybar
    y_mid = ybar / 2.0
    near = _ivp(eq.gap_rhs_minus, (ybar - dt, y_mid), [eq.kappa * dt * dt], tol)
    z_mid = float(near.y[0, -1])
    psi_mid = gamma_curve(y_mid, params) - z_mid + eq.a * y_mid**eq.expo
    far = _ivp(eq.psi_rhs, (math.log(y_mid), math.log(y_floor)), [psi_mid], tol)

    # Theta: intercept of psi against the leading correction y^((r+1)/2)
    y_fit = np.geomspace(y_floor, 10.0 * y_floor, 24)
    psi_fit = far.sol(np.log(y_fit))[0]
    theta = linfit(y_fit ** ((params.r + 1.0) / 2.0), psi_fit).intercept

    n_far = max(8, int(samples_per_decade * math.log10(y_mid / y_floor)))
    y_far = np.geomspace(y_floor, y_mid, n_far)[:-1]
    phi_far = far.sol(np.log(y_far))[0] - eq.a * y_far**eq.expo
    gap_far = gamma_curve(y_far, params) - phi_far
    y_near = np.linspace(y_mid, ybar - dt, 200)
    gap_near = near.sol(y_near)[0]
    y_tan = ybar - dt * np.linspace(1.0, 0.0, 9)[1:]
    gap_tan = eq.kappa * (ybar - y_tan) ** 2

    ys = np.concatenate([y_far, y_near, y_tan])
    gaps = np.concatenate([gap_far, gap_near, gap_tan])
    values = np.concatenate([phi_far, np.full(y_near.size + y_tan.size, np.nan)])
    if np.any(gaps < -RADICAND_SNAP * gamma_curve(ys, params)):
        raise BranchViolation("critical curve rose above the barrier")
    curve = _curve(eq, ys, gaps, "minus", theta, values)
    result = ThetaResult(theta=theta, theta_r=theta / params.A**params.gamma, method="terminal", residual=math.nan, ybar=ybar)
    logger.debug("terminal Theta(r=%g, A=%g) = %.15g", params.r, params.A, theta)
    return curve, result


def solve_phi_ivp(
    theta: float,
    params: ModelParams,
    y_max: float | None = None,
    tol: float = 1e-12,
    y_start: float | None = None,
) -> IvpOutcome:
    """Integrate ``phi_theta`` forward from the endpoint series.

    The outcome is ``"exists"`` if the curve stays below the barrier on
    ``(0, y_max]``, else ``"touched"``/``"crossed"`` with the location.
    """
    eq = _Equations(params)
    ybar = eq.ybar
    if y_max is None:
        y_max = 2.0 * ybar
    if y_max < ybar:
        raise ModelError(f"y_max = {y_max} is below the tangency abscissa {ybar}")
    if not math.isfinite(theta):
        raise ModelError("theta must be finite")
    if y_start is None:
        y_start = FLOOR_RATIO * ybar
    y_mid = ybar / 2.0

    def cross_far(s, state):
        y = math.exp(s)
        return gamma_curve(y, params) - (state[0] - eq.a * y**eq.expo)

    cross_far.terminal = True
    cross_far.direction = -1

    psi0 = eq.psi_series(theta, y_start)
    far = _ivp(eq.psi_rhs, (math.log(y_start), math.log(y_mid)), [psi0], tol, events=cross_far)
    if not np.all(np.isfinite(far.y)):
        raise NumericalError("non-finite state in the forward profile solve")

    def sample_far(y_hi):
        yy = np.geomspace(y_start, y_hi, 120)
        ph = far.sol(np.log(yy))[0] - eq.a * yy**eq.expo
        return yy, gamma_curve(yy, params) - ph, ph

    if far.t_events[0].size:
        y_ev = math.exp(far.t_events[0][0])
        yy, gg, ph = sample_far(y_ev)
        curve = _curve(eq, yy, np.maximum(gg, 0.0), "minus", theta, ph)
        return IvpOutcome(_contact_kind(eq, y_ev), curve, y_ev)

    z_mid = gamma_curve(y_mid, params) - (far.y[0, -1] - eq.a * y_mid**eq.expo)

    def cross_near(y, state):
        return state[0]

    cross_near.terminal = True
    cross_near.direction = -1
    near = _ivp(eq.gap_rhs_forward, (y_mid, y_max), [z_mid], tol, events=cross_near)
    if not np.all(np.isfinite(near.y)):
        raise NumericalError("non-finite state in the forward profile solve")
    yy, gg, ph = sample_far(y_mid)
    y_hi = float(near.t_events[0][0]) if near.t_events[0].size else y_max
    y2 = np.linspace(y_mid, y_hi, 400)[1:]
    ys = np.concatenate([yy, y2])
    gaps = np.concatenate([gg, near.sol(y2)[0]])
    values = np.concatenate([ph, np.full(y2.size, np.nan)])
    if near.t_events[0].size:
        curve = _curve(eq, ys, np.maximum(gaps, 0.0), "minus", theta, values)
        return IvpOutcome(_contact_kind(eq, y_hi), curve, y_hi)
    curve = _curve(eq, ys, gaps, "minus", theta, values)
    return IvpOutcome("exists", curve)


def _contact_kind(eq: _Equations, y: float) -> str:
    # at a contact Z = 0, so Z' = Gamma' - gamma y / 2; zero slope means tangency
    scale = 1.0 + abs(gamma_prime(y, eq.p))
    return "touched" if abs(eq.Y(y)) <= 1e-6 * scale else "crossed"


def compute_theta_bisection(params: ModelParams, tol: float = 1e-9, ivp_tol: float = 1e-12) -> ThetaResult:
    """Bisect on ``theta`` using the forward solve as the predicate.

    The bracket ``[lo, hi]`` starts at ``[0, 1]`` and doubles ``hi`` until the
    forward curve fails to exist; bisection stops at width
    ``tol * (1 + Theta)``.
    """
    if not tol >= 1e-10:
        raise ModelError("bisection tolerance must be at least 1e-10")
    _require_subcritical(params)

    def exists(theta: float) -> bool:
        return solve_phi_ivp(theta, params, tol=ivp_tol).exists

    if not exists(0.0):
        raise NumericalError("theta = 0 does not give a global curve; integrator tolerance too loose")
    lo, hi = 0.0, 1.0
    while exists(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise NumericalError("no crossing found below theta = 1e12")
    while hi - lo > tol * (1.0 + lo):
        mid = 0.5 * (lo + hi)
        if exists(mid):
            lo = mid
        else:
            hi = mid
    # probe a geometric ladder and a uniform grid on both sides; any
    # disagreement means the exists/crosses decision is not resolved reliably
    width = max(hi - lo, 1e-300)
    below = [lo - width * 2.0**k for k in range(1, 80)]
    below = [b for b in below if b >= 0.0] + [lo * j / 8.0 for j in range(8)]
    above = [hi + width * 2.0**k for k in range(1, 80) if width * 2.0**k <= hi] + [hi * (1.0 + j / 8.0) for j in range(1, 9)]
    for b in below:
        if not exists(b):
            raise NumericalError(f"predicate non-monotone: crossing at theta = {b:.10g} < {lo:.10g}; tighten ivp_tol")
    for a in above:
        if exists(a):
            raise NumericalError(f"predicate non-monotone: global curve at theta = {a:.10g} > {hi:.10g}; tighten ivp_tol")
    theta = 0.5 * (lo + hi)
    return ThetaResult(theta=theta, theta_r=theta / params.A**params.gamma, method="bisection", residual=math.nan, ybar=params.y_bar)


def extend_Phi(params: ModelParams, critical_curve: ProfileCurve, y_max: float, tol: float = 1e-12) -> ProfileCurve:
    """Continue the critical curve past ``y_bar`` on the plus root.

    Returns the global curve: ``critical_curve`` on ``(0, y_bar]`` followed
    by ``Phi`` on ``(y_bar, y_max]``.
    """
    eq = _Equations(params)
    ybar = eq.ybar
    if y_max <= ybar:
        raise ModelError("y_max must exceed the tangency abscissa")
    dt = TANGENCY_OFFSET * ybar
    y_tan = ybar + dt * np.linspace(0.0, 1.0, 9)[1:]
    gap_tan = eq.kappa * (y_tan - ybar) ** 2
    sol = _ivp(eq.gap_rhs_plus, (ybar + dt, y_max), [eq.kappa * dt * dt], tol)
    y_plus = np.linspace(ybar + dt, y_max, 800)[1:]
    gap_plus = sol.sol(y_plus)[0]
    plus = _curve(eq, np.concatenate([y_tan, y_plus]), np.concatenate([gap_tan, gap_plus]), "plus", critical_curve.theta)
    if np.any(plus.gap < -RADICAND_SNAP * gamma_curve(plus.y, params)):
        raise BranchViolation("plus-root continuation rose above the barrier")

    left = critical_curve.y < ybar
    # the tangency point itself carries the minus label
    y0 = np.array([ybar])
    v0, d0, s0 = eq.minus_samples(y0, np.zeros(1))
    parts = [
        (critical_curve.y[left], critical_curve.value[left], critical_curve.derivative[left], critical_curve.second[left], critical_curve.gap[left], critical_curve.branch[left]),
        (y0, v0, d0, s0, np.zeros(1), np.array(["minus"])),
        (plus.y, plus.value, plus.derivative, plus.second, plus.gap, plus.branch),
    ]
    cat = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    order = np.argsort(cat[0], kind="stable")
    return ProfileCurve(*(c[order] for c in cat), theta=critical_curve.theta)


def hj_residual(curve: ProfileCurve, params: ModelParams, y_lo: float = 0.0) -> float:
    """Sup over samples of the normalized residual of the quadratic identity.

    The identity is ``phi'^2 - gamma y phi' - A y^(1-r) + beta phi = 0``; each
    term is scaled by ``gamma^2 y^2 / 4 + A y^(1-r)`` so that the check is
    meaningful both near ``0`` and for large ``y``.
    """
    m = curve.y >= y_lo
    y = curve.y[m]
    d = curve.derivative[m]
    v = curve.value[m]
    g = params.gamma
    scale = g * g * y * y / 4.0 + params.A * y ** (1.0 - params.r)
    res = d * d - g * y * d - params.A * y ** (1.0 - params.r) + params.beta * v
    return float(np.max(np.abs(res) / scale))


def theta_sweep(r_grid, A: float, tol: float = 1e-9) -> list[SweepRow]:
    """Run both ``Theta`` routes for every ``r`` and cross-check them.

    Failures are recorded per row and do not stop the sweep.  Rows are sorted
    by ``r``.
    """
    rows = []
    for r in sorted(float(x) for x in r_grid):
        row = SweepRow(r=r, A=float(A))
        try:
            params = make_params(r, A)
            _require_subcritical(params)
            _, term = solve_phi_terminal(params)
            bis = compute_theta_bisection(params, tol=tol)
            row.theta = term.theta
            row.theta_r = term.theta_r
            row.ybar = params.y_bar
            row.method_residual = abs(term.theta - bis.theta) / (1.0 + term.theta)
            row.extra = {"theta_bisection": bis.theta}
        except (ModelError, NumericalError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            logger.warning("theta sweep point r=%g failed: %s", r, exc)
        rows.append(row)
    return rows

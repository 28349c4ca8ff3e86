"""Minimal-speed traveling wave and its tail laws.

The profile solves ``U'' + 2 U' + f(U) = 0`` with ``U(-inf) = 1`` and
``U(+inf) = 0``.  Far ahead ``U`` underflows long before the asymptotic regime
is reached, so the tail is integrated in

    W = xi + log U,    P = W' = 1 + U'/U,

which satisfy ``W'' = -P^2 + A (xi + log nu - W)^(1-r)`` (the logarithm of
``Q = nu e^xi U``, whose equation is ``Q'' = A (xi - log Q + log nu)^(1-r) Q``).
The translation is fixed by ``U(0) = 1/2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .analysis import linfit
from .errors import AsymptoticRegimeError, ModelError, NumericalError
from .io import write_csv
from .model import ModelParams, reaction

logger = logging.getLogger(__name__)

MANIFOLD_OFFSET = 1e-8
SWITCH_LEVEL = 1e-12
# the tail integration starts here so that both coordinate systems overlap
OVERLAP_LEVEL = 1e-6
FLATNESS_LIMIT = 0.10

DEFAULT_WINDOWS = {"r>3": (25.0, 35.0), "r=3": (1e4, 1e5), "r<3": (1e4, 1e6)}
DEFAULT_XI_END = {"r>3": 60.0, "r=3": 1e5, "r<3": 1e6}


@dataclass
class WaveProfile:
    """Samples of the wave in three coordinate systems.

    ``U`` and ``Q`` are NaN where they under- or overflow; ``W`` and its
    derivative ``dW`` are available at every sample.
    """

    xi: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.xi.size

    def window(self, lo: float, hi: float) -> np.ndarray:
        return (self.xi >= lo) & (self.xi <= hi)


@dataclass(frozen=True)
class TailFit:
    regime: str
    statistic: float
    window: tuple[float, float]
    flatness: float
    intercept: float = math.nan

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "statistic": self.statistic,
            "window": list(self.window),
            "flatness": self.flatness,
            "intercept": self.intercept,
        }


def _check_tol(tol: float) -> None:
    if not 1e-14 < tol < 1e-4:
        raise ModelError(f"tol must lie in (1e-14, 1e-4), got {tol}")


def _tail_rhs(params: ModelParams):
    A, q, log_nu = params.A, 1.0 - params.r, params.log_nu

    def rhs(xi, y):
        W, P = y
        L = xi + log_nu - W
        if L <= 0.0:
            raise NumericalError(f"log(nu/U) = {L} is not positive at xi = {xi}")
        return [P, -P * P + A * L**q]

    return rhs


def _tail_grid(xi0: float, xi1: float, include_start: bool = True) -> np.ndarray:
    """Multiples of 0.05 up to 100, then 200 points per decade, plus the end points."""
    parts = []
    lin_hi = min(xi1, 100.0)
    if lin_hi > xi0:
        parts.append(np.arange(math.ceil(xi0 / 0.05), math.ceil(lin_hi / 0.05)) * 0.05)
    if xi1 > 100.0:
        lo = max(100.0, xi0)
        n = max(2, int(math.ceil(200 * math.log10(xi1 / lo))) + 1)
        parts.append(np.geomspace(lo, xi1, n))
    ends = [xi0, xi1] if include_start else [xi1]
    grid = np.unique(np.concatenate(parts + [np.array(ends)]))
    return grid[(grid >= xi0) & (grid <= xi1)]


def _representable(params: ModelParams, xi, W):
    with np.errstate(over="ignore", under="ignore"):
        logU = W - xi
        U = np.where(logU > -745.0, np.exp(np.minimum(logU, 0.0)), np.nan)
        U = np.where(U > 0.0, U, np.nan)
        logQ = params.log_nu + W
        Q = np.where(logQ < 709.0, np.exp(np.minimum(logQ, 709.0)), np.nan)
    return U, Q


def shoot_wave(params: ModelParams, xi_end: float | None = None, tol: float = 1e-12) -> WaveProfile:
    """Integrate the wave along the unstable manifold of ``U = 1``.

    Parameters
    ----------
    params:
        Model parameters (any ``r > 1``).
    xi_end:
        Right end of the returned profile; defaults by regime (60 for
        ``r > 3``, 1e5 for ``r = 3``, 1e6 for ``r < 3``).
    tol:
        Relative tolerance of both integrations, in ``(1e-14, 1e-4)``.

    Returns
    -------
    WaveProfile
        ``U`` samples come from the direct integration while ``U >= 1e-12``
        and from the tail coordinates afterwards.  ``meta["coordinate_mismatch"]``
        compares both systems where they overlap.
    """
    _check_tol(tol)
    if xi_end is None:
        xi_end = DEFAULT_XI_END[params.regime]
    if not math.isfinite(xi_end) or xi_end <= 0.0:
        raise ModelError("xi_end must be positive and finite")

    eps = MANIFOLD_OFFSET
    mu = -1.0 + math.sqrt(1.0 - params.slope_at_one)
    q, log_nu = 1.0 - params.r, params.log_nu

    def behind(x, y):
        # v = 1 - U keeps full precision where U is close to 1
        v, dv = y
        if not (math.isfinite(v) and math.isfinite(dv)):
            raise NumericalError(f"non-finite wave state at x = {x}")
        v = min(max(v, 0.0), 1.0)
        d = -math.log1p(-v)
        return [dv, -2.0 * dv + (1.0 - v) * -math.expm1(q * math.log1p(d / log_nu))]

    def half(x, y):
        return y[0] - 0.5

    half.terminal = True
    half.direction = 1

    span = 40.0 * (1.0 + 1.0 / mu) + 200.0
    back = solve_ivp(
        behind, (-span, 0.0), [eps, eps * mu], method="DOP853",
        rtol=tol, atol=tol * eps, dense_output=True, events=half,
    )
    if back.status == -1:
        raise NumericalError(f"wave integration failed: {back.message}")
    if not back.t_events[0].size:
        raise NumericalError("wave did not reach U = 1/2")
    # polish the event to rounding level so that U(0) = 1/2 holds to the last bits
    shift = brentq(lambda x: back.sol(x)[0] - 0.5, back.t[-2], back.t[-1] + 1e-6, xtol=1e-15, rtol=1e-15)
    v_half, dv_half = back.sol(shift)

    def ahead(x, y):
        u, du = y
        if not (math.isfinite(u) and math.isfinite(du)):
            raise NumericalError(f"non-finite wave state at x = {x}")
        return [du, -2.0 * du - reaction(min(max(u, 0.0), 1.0), params)]

    def hit_switch(x, y):
        return y[0] - SWITCH_LEVEL

    hit_switch.terminal = True
    hit_switch.direction = -1

    def turn(x, y):
        return y[1]

    turn.terminal = True
    turn.direction = 1

    sol = solve_ivp(
        ahead, (0.0, max(400.0, xi_end)), [1.0 - v_half, -dv_half], method="DOP853",
        rtol=tol, atol=tol * SWITCH_LEVEL, dense_output=True, events=(hit_switch, turn),
    )
    if sol.status == -1:
        raise NumericalError(f"wave integration failed: {sol.message}")
    if sol.t_events[1].size:
        raise NumericalError("wave lost monotonicity before reaching the tail; check the manifold offset")
    if not sol.t_events[0].size:
        raise NumericalError("wave did not reach the coordinate switch level")
    x_switch = float(sol.t_events[0][0])
    # the forward solve starts at the located U = 1/2 crossing, so xi = x
    x_half = 0.0
    x_over = brentq(lambda x: sol.sol(x)[0] - OVERLAP_LEVEL, x_half, x_switch, xtol=1e-14)

    xi_switch = x_switch - x_half
    if xi_end <= xi_switch:
        raise ModelError(f"xi_end = {xi_end} lies before the coordinate switch at {xi_switch:.3g}")

    # direct part: uniform 0.05 spacing near the front, sparse far behind
    x_first = -span - shift
    xi_lo = x_first - x_half
    # integer multiples of the spacing so that xi = 0 is a sample
    k0, k1 = math.ceil(max(xi_lo, -100.0) / 0.05), math.ceil(xi_switch / 0.05)
    xi_direct = np.arange(k0, k1) * 0.05
    if xi_lo < -100.0:
        xi_direct = np.concatenate([np.linspace(xi_lo, -100.0, 400, endpoint=False), xi_direct])
    xi_direct = xi_direct[xi_direct >= xi_lo]
    x_direct = xi_direct + x_half
    left = x_direct < 0.0
    vb = back.sol(x_direct[left] + shift)
    uv = sol.sol(x_direct[~left])
    U_d = np.concatenate([1.0 - vb[0], uv[0]])
    V_d = np.concatenate([-vb[1], uv[1]])
    if np.any(U_d <= 0.0) or np.any(U_d >= 1.0):
        raise NumericalError("direct wave samples left (0, 1)")

    # tail part, started inside the overlap
    u0, v0 = sol.sol(x_over)
    xi_over = x_over - x_half
    tail = solve_ivp(
        _tail_rhs(params), (xi_over, xi_end), [xi_over + math.log(u0), 1.0 + v0 / u0],
        method="DOP853", rtol=tol, atol=tol, dense_output=True,
    )
    if tail.status == -1:
        raise NumericalError(f"tail integration failed: {tail.message}")

    overlap = xi_direct[xi_direct >= xi_over]
    W_direct = overlap + np.log(sol.sol(overlap + x_half)[0])
    W_tail = tail.sol(overlap)[0]
    mismatch = float(np.max(np.abs(W_direct - W_tail) / (1.0 + np.abs(W_tail)))) if overlap.size else math.nan

    xi_tail = _tail_grid(xi_switch, xi_end, include_start=False)
    xi_tail = xi_tail[xi_tail > xi_direct[-1]]
    WP = tail.sol(xi_tail)
    if not np.all(np.isfinite(WP)):
        raise NumericalError("non-finite tail state")

    xi = np.concatenate([xi_direct, xi_tail])
    with np.errstate(divide="ignore"):
        W = np.concatenate([xi_direct + np.log(U_d), WP[0]])
    dW = np.concatenate([1.0 + V_d / U_d, WP[1]])
    U, Q = _representable(params, xi, W)
    U[: xi_direct.size] = U_d
    meta = {
        "tol": tol,
        "manifold_offset": eps,
        "unstable_rate": mu,
        "xi_start": xi_lo,
        "xi_switch": xi_switch,
        "xi_overlap": [xi_over, xi_switch],
        "coordinate_mismatch": mismatch,
        "nfev": int(back.nfev + sol.nfev + tail.nfev),
    }
    logger.debug("wave r=%g A=%g: switch at xi=%.4g, mismatch %.2e", params.r, params.A, xi_switch, mismatch)
    return WaveProfile(xi=xi, U=U, Q=Q, W=W, dW=dW, meta=meta)


def integrate_tail_Q(
    params: ModelParams, w0: float, w1: float, xi_span, tol: float = 1e-12, samples=None
) -> WaveProfile:
    """Integrate the tail equation from ``(W, W') = (w0, w1)`` across ``xi_span``.

    ``xi_span`` may run backward.  The returned profile is sorted in ``xi``.
    """
    _check_tol(tol)
    xi0, xi1 = (float(v) for v in xi_span)
    if not (math.isfinite(xi0) and math.isfinite(xi1)) or xi0 == xi1:
        raise ModelError("xi_span must be two distinct finite values")
    if w1 < 0.0:
        raise ModelError("initial slope W' must be non-negative")
    if xi0 + params.log_nu - w0 <= 0.0:
        raise ModelError("initial data violate log(nu/U) > 0")
    sol = solve_ivp(_tail_rhs(params), (xi0, xi1), [w0, w1], method="DOP853", rtol=tol, atol=tol, dense_output=True)
    if sol.status == -1:
        raise NumericalError(f"tail integration failed: {sol.message}")
    if samples is None:
        lo, hi = min(xi0, xi1), max(xi0, xi1)
        samples = _tail_grid(lo, hi) if lo > 0.0 else np.linspace(lo, hi, 2001)
    xs = np.sort(np.asarray(samples, dtype=float))
    WP = sol.sol(xs)
    if not np.all(np.isfinite(WP)):
        raise NumericalError("non-finite tail state")
    U, Q = _representable(params, xs, WP[0])
    return WaveProfile(xi=xs, U=U, Q=Q, W=WP[0], dW=WP[1], meta={"tol": tol, "nfev": int(sol.nfev)})


def compensated_ratio(profile: WaveProfile, params: ModelParams, mask=None) -> np.ndarray:
    """``U / (xi^k e^-xi)`` with ``k = 1`` for ``r > 3`` and ``k = alpha`` for ``r = 3``.

    Computed from ``W`` so it stays finite where ``U`` underflows.
    """
    if params.r < 3.0:
        raise ModelError("the compensated ratio applies to r >= 3")
    k = 1.0 if params.r > 3.0 else params.alpha
    xi = profile.xi if mask is None else profile.xi[mask]
    W = profile.W if mask is None else profile.W[mask]
    if np.any(xi <= 0.0):
        raise ModelError("compensated ratio needs xi > 0")
    return np.exp(W - k * np.log(xi))


def flatness(values) -> float:
    """``max / min - 1`` of a positive series."""
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min() - 1.0)


def local_slope(profile: WaveProfile, params: ModelParams, mask=None) -> np.ndarray:
    """``W' / (p xi^(p-1))`` with ``p = (3-r)/2``: the pointwise slope against ``xi^p``."""
    p = (3.0 - params.r) / 2.0
    xi = profile.xi if mask is None else profile.xi[mask]
    dW = profile.dW if mask is None else profile.dW[mask]
    return dW / (p * xi ** (p - 1.0))


def extract_tail_law(profile: WaveProfile, params: ModelParams, window=None) -> TailFit:
    """Fit the tail law of the regime over ``window``.

    For ``r >= 3`` the statistic is the mean of the compensated ratio and
    ``flatness`` its ``max/min - 1``.  For ``r < 3`` the statistic is the
    least-squares slope of ``W`` against ``xi^((3-r)/2)`` and ``flatness`` the
    relative spread of the local slope.

    Raises
    ------
    AsymptoticRegimeError
        If the flatness exceeds 10%.
    """
    regime = params.regime
    lo, hi = DEFAULT_WINDOWS[regime] if window is None else (float(window[0]), float(window[1]))
    if not 0.0 < lo < hi:
        raise ModelError("tail window must satisfy 0 < lo < hi")
    m = profile.window(lo, hi)
    if np.count_nonzero(m) < 8:
        raise ModelError(f"profile has fewer than 8 samples in [{lo}, {hi}]")
    if regime in ("r>3", "r=3"):
        ratio = compensated_ratio(profile, params, m)
        flat = flatness(ratio)
        stat = float(ratio.mean())
        intercept = math.nan
    else:
        p = (3.0 - params.r) / 2.0
        fit = linfit(profile.xi[m] ** p, profile.W[m])
        slope = local_slope(profile, params, m)
        flat = float((slope.max() - slope.min()) / abs(slope.mean()))
        stat, intercept = fit.coefficient, fit.intercept
    if not flat <= FLATNESS_LIMIT:
        raise AsymptoticRegimeError(
            f"flatness {flat:.3g} over [{lo:g}, {hi:g}] exceeds {FLATNESS_LIMIT:g}: asymptotic regime not reached"
        )
    if not stat > 0.0:
        raise AsymptoticRegimeError(f"non-positive tail statistic {stat}")
    return TailFit(regime=regime, statistic=stat, window=(lo, hi), flatness=flat, intercept=intercept)


def match_backward(profile: WaveProfile, params: ModelParams, fit: TailFit, length: float = 10.0, tol: float = 1e-12) -> float:
    """Start the tail equation on the fitted asymptote at the right end of the
    fit window, integrate backward over ``length``, and return the largest
    ``|W_back - W| / (1 + |W|)`` against the forward profile.
    """
    xi1 = fit.window[1]
    xi0 = xi1 - length
    if xi0 < profile.xi[0] or xi1 > profile.xi[-1]:
        raise ModelError("matching window leaves the profile")
    if fit.regime == "r<3":
        p = (3.0 - params.r) / 2.0
        w = fit.statistic * xi1**p + fit.intercept
        dw = fit.statistic * p * xi1 ** (p - 1.0)
    else:
        k = 1.0 if fit.regime == "r>3" else params.alpha
        w = math.log(fit.statistic) + k * math.log(xi1)
        dw = k / xi1
    m = profile.window(xi0, xi1)
    back = integrate_tail_Q(params, w, dw, (xi1, xi0), tol=tol, samples=profile.xi[m])
    return float(np.max(np.abs(back.W - profile.W[m]) / (1.0 + np.abs(profile.W[m]))))


def write_wave_csv(profile: WaveProfile, path) -> None:
    rows = zip(profile.xi, profile.U, profile.Q, profile.W)
    write_csv(path, ["xi", "U", "Q", "W"], rows)

"""Cauchy problem from front-like data, level-set tracking, and delay fits.

The scheme is second-order central differences in space with an explicit
two-stage (Heun) step, ``dt <= 0.4 dx^2``, Dirichlet values 1 on the left and
0 on the right, and a clamp to ``[0, 1]`` after every stage.

Long runs use a lab-frame window that is shifted by whole cells so the front
stays a fixed distance from the left edge.  Cells leaving on the left must
already equal 1 to within ``1e-8``.

Delays are reported against the pulled speed of the discrete scheme,
``c_h = min_lambda log(1 + z + z^2/2) / (lambda dt)`` with
``z = dt (1 + 2 (cosh(lambda dx) - 1) / dx^2)``, which exceeds 2 by
``O(dx^2)``.  Over ``t ~ 1e3`` that excess is comparable to the logarithmic
delay itself, so ``2 t - X`` is kept only as ``raw_delays``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.optimize import minimize_scalar

from .analysis import FitResult, logfit, powfit
from .errors import BoundNotFound, ModelError, NoLawError, NumericalError, SchemeViolation, WindowBreach
from .model import DEFAULT_POLICY, ModelParams, ReactionEvalPolicy

logger = logging.getLogger(__name__)

STABILITY_FACTOR = 0.4
OVERSHOOT_WARN = 1e-6
DROP_TOLERANCE = 1e-8
SAMPLE_RATIO = 1.05
REACTIONS = {"model": 0, "kpp": 1, "heat": 2}


# --- kernel -----------------------------------------------------------------


@numba.njit(cache=True)
def _rate(v, mode, A, q, iq, int_power, log_nu, clamp_low):
    if v <= 0.0:
        return 0.0
    if mode == 1:
        return v * (1.0 - v)
    if mode == 2:
        return 0.0
    if v < clamp_low:
        return v
    L = log_nu - math.log(v)
    # integer powers are far cheaper than pow()
    p = L**iq if int_power else L**q
    return v * (1.0 - A * p)


@numba.njit(cache=True)
def _advance(u, nsteps, dt, dx, mode, A, q, iq, int_power, log_nu, clamp_low):
    n = u.size
    inv = 1.0 / (dx * dx)
    k1 = np.empty(n)
    tmp = np.empty(n)
    over = 0.0
    for _ in range(nsteps):
        for i in range(n):
            left = u[i - 1] if i > 0 else 1.0
            right = u[i + 1] if i < n - 1 else 0.0
            v = u[i]
            d = (left - 2.0 * v + right) * inv + _rate(v, mode, A, q, iq, int_power, log_nu, clamp_low)
            k1[i] = d
            w = v + dt * d
            if w > 1.0:
                over = max(over, w - 1.0)
                w = 1.0
            elif w < 0.0:
                over = max(over, -w)
                w = 0.0
            tmp[i] = w
        for i in range(n):
            left = tmp[i - 1] if i > 0 else 1.0
            right = tmp[i + 1] if i < n - 1 else 0.0
            v = tmp[i]
            d = (left - 2.0 * v + right) * inv + _rate(v, mode, A, q, iq, int_power, log_nu, clamp_low)
            w = u[i] + 0.5 * dt * (k1[i] + d)
            if not math.isfinite(w):
                return -1.0
            if w > 1.0:
                over = max(over, w - 1.0)
                w = 1.0
            elif w < 0.0:
                over = max(over, -w)
                w = 0.0
            u[i] = w
    return over


def _kernel_args(params: ModelParams, reaction: str, policy: ReactionEvalPolicy):
    if reaction not in REACTIONS:
        raise ModelError(f"unknown reaction {reaction!r}; choose from {tuple(REACTIONS)}")
    q = 1.0 - params.r
    iq = int(round(q))
    return (REACTIONS[reaction], params.A, q, iq, abs(q - iq) < 1e-14, params.log_nu, policy.clamp_low)


def _run_kernel(u, nsteps, dt, dx, args) -> float:
    over = _advance(u, nsteps, dt, dx, *args)
    if over < 0.0:
        raise NumericalError("non-finite value in the field; scheme unstable")
    return over


# --- state ------------------------------------------------------------------


@dataclass
class FieldState:
    """Cell-centred samples; cell ``i`` sits at ``window_left + (i + 1/2) dx``."""

    window_left: float
    dx: float
    values: np.ndarray
    t: float = 0.0
    shift_count: int = 0
    overshoot: float = 0.0

    def __post_init__(self):
        if not self.dx > 0.0:
            raise ModelError("dx must be positive")

    @property
    def x(self) -> np.ndarray:
        return self.window_left + (np.arange(self.values.size) + 0.5) * self.dx

    def copy(self) -> "FieldState":
        return replace(self, values=self.values.copy())


@dataclass(frozen=True)
class WindowPolicy:
    """Placement of the moving window.

    ``behind`` is the distance kept between the left edge and the front;
    ``ahead`` the room in front of it (default ``40 + 5 sqrt(t_end)``, which
    keeps the Dirichlet wall far outside the diffusive zone ``~ sqrt(t)``).
    The window is re-centred every ``recenter_every`` time units and a
    :class:`WindowBreach` is raised if the front gets within ``min_margin``
    of the right edge.
    """

    behind: float = 60.0
    ahead: float | None = None
    recenter_every: float = 2.0
    min_margin: float = 20.0

    def ahead_for(self, t_end: float) -> float:
        return self.ahead if self.ahead is not None else 40.0 + 5.0 * math.sqrt(t_end)

    def validate(self, t_end: float) -> None:
        if not (self.behind > 0.0 and self.recenter_every > 0.0 and self.min_margin > 0.0):
            raise ModelError("window policy lengths must be positive")
        if self.ahead_for(t_end) <= self.min_margin:
            raise ModelError("window policy leaves no room ahead of the front")


@dataclass
class FrontTrace:
    lam: float
    times: np.ndarray
    positions: np.ndarray
    delays: np.ndarray
    raw_delays: np.ndarray
    speed_reference: float
    dx: float
    dt: float
    r: float = math.nan
    A: float = math.nan
    max_overshoot: float = 0.0

    def __post_init__(self):
        if self.times.size and np.any(np.diff(self.times) <= 0.0):
            raise NumericalError("trace times must be strictly increasing")
        if not np.all(np.isfinite(self.positions)):
            raise NumericalError("trace positions must be finite")

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


# --- operations -------------------------------------------------------------


def init_field(params: ModelParams, window=(-50.0, 200.0), dx: float = 0.1, datum=None) -> FieldState:
    """Step datum ``1_{x<0}`` (or a custom one) on ``[x_lo, x_hi]``.

    ``datum`` may be a callable of the cell centres or an array of values; it
    must lie in ``[0, 1]`` and vanish at every centre with ``x >= 0``.
    """
    x_lo, x_hi = (float(v) for v in window)
    if not (math.isfinite(x_lo) and math.isfinite(x_hi)) or not x_lo < 0.0 < x_hi:
        raise ModelError(f"window must satisfy x_lo < 0 < x_hi, got [{x_lo}, {x_hi}]")
    if not (math.isfinite(dx) and dx > 0.0):
        raise ModelError(f"dx must be positive, got {dx}")
    n = int(round((x_hi - x_lo) / dx))
    if n < 3 or abs(n * dx - (x_hi - x_lo)) > 1e-9 * (x_hi - x_lo):
        raise ModelError("window length must be an integer multiple of dx (at least 3 cells)")
    x = x_lo + (np.arange(n) + 0.5) * dx
    if datum is None:
        values = (x < 0.0).astype(float)
    else:
        values = np.asarray(datum(x) if callable(datum) else datum, dtype=float)
        if values.shape != x.shape:
            raise ModelError(f"datum has shape {values.shape}, expected {x.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
            raise ModelError("datum must take values in [0, 1]")
        if np.any(values[x >= 0.0] > 0.0):
            raise ModelError("datum must vanish for x >= 0")
    return FieldState(window_left=x_lo, dx=float(dx), values=values)


def stable_dt(params: ModelParams, dx: float, reaction: str = "model") -> float:
    """Largest admissible step: ``0.4 dx^2``, further capped by ``1/|f'(1)|``.

    ``|f'|`` is largest at ``u = 1`` and grows without bound as ``r -> 1`` for
    small ``A``; beyond the cap the explicit step overshoots ``u = 1``.
    """
    dt = STABILITY_FACTOR * dx * dx
    if reaction == "model":
        dt = min(dt, 1.0 / abs(params.slope_at_one))
    elif reaction == "kpp":
        dt = min(dt, 1.0)
    return dt


def _check_dt(dt: float, dx: float, params: ModelParams, reaction: str = "model") -> None:
    if not (math.isfinite(dt) and dt > 0.0):
        raise ModelError("dt must be positive")
    limit = stable_dt(params, dx, reaction)
    if dt > limit * (1.0 + 1e-12):
        raise ModelError(f"dt = {dt} exceeds the stability limit {limit:.6g} (0.4 dx^2 and 1/|f'(1)|)")


def step(
    field: FieldState, dt: float, params: ModelParams, policy: ReactionEvalPolicy = DEFAULT_POLICY, reaction: str = "model"
) -> FieldState:
    """One two-stage step; returns a new state."""
    _check_dt(dt, field.dx, params, reaction)
    new = field.copy()
    over = _run_kernel(new.values, 1, dt, field.dx, _kernel_args(params, reaction, policy))
    if over > OVERSHOOT_WARN:
        logger.warning("pre-clamp overshoot %.3g at t = %.6g", over, field.t + dt)
    new.t = field.t + dt
    new.overshoot = max(field.overshoot, over)
    return new


def advance(
    field: FieldState, t_target: float, params: ModelParams, policy: ReactionEvalPolicy = DEFAULT_POLICY,
    reaction: str = "model", dt: float | None = None,
) -> FieldState:
    """Advance in place to ``t_target`` (no window motion); the last step is shortened to land exactly."""
    if dt is None:
        dt = stable_dt(params, field.dx, reaction)
    _check_dt(dt, field.dx, params, reaction)
    args = _kernel_args(params, reaction, policy)
    span = t_target - field.t
    if span < -1e-12:
        raise ModelError("cannot advance backward in time")
    n = int(math.floor(span / dt + 1e-9))
    over = _run_kernel(field.values, n, dt, field.dx, args) if n else 0.0
    rest = span - n * dt
    if rest > 1e-12 * max(1.0, t_target):
        over = max(over, _run_kernel(field.values, 1, rest, field.dx, args))
    field.t = float(t_target)
    field.overshoot = max(field.overshoot, over)
    if over > OVERSHOOT_WARN:
        logger.warning("pre-clamp overshoot %.3g before t = %.6g", over, t_target)
    return field


def front_position(field: FieldState, lam: float = 0.5) -> float:
    """Rightmost crossing of level ``lam``, linearly interpolated between centres."""
    if not 0.0 < lam < 1.0:
        raise ModelError("level must lie in (0, 1)")
    u = field.values
    idx = np.nonzero((u[:-1] >= lam) & (u[1:] < lam))[0]
    if idx.size == 0:
        raise NumericalError(f"level {lam} is not attained in the window")
    i = int(idx[-1])
    x_i = field.window_left + (i + 0.5) * field.dx
    return float(x_i + field.dx * (u[i] - lam) / (u[i] - u[i + 1]))


def discrete_front_speed(dx: float, dt: float) -> tuple[float, float]:
    """Pulled speed and decay rate of the linearized scheme at ``u = 0``.

    Returns
    -------
    speed, rate
        Both tend to ``(2, 1)`` as ``dx -> 0``.
    """
    if not (dx > 0.0 and dt > 0.0):
        raise ModelError("dx and dt must be positive")

    def speed(lam):
        z = dt * (1.0 + 2.0 * (math.cosh(lam * dx) - 1.0) / (dx * dx))
        return math.log1p(z + 0.5 * z * z) / (dt * lam)

    res = minimize_scalar(speed, bounds=(0.5, 1.5), method="bounded", options={"xatol": 1e-12})
    return float(res.fun), float(res.x)


def _sample_times(t_end: float, dt: float) -> np.ndarray:
    ts = []
    t = 1.0
    while t < t_end:
        ts.append(t)
        t *= SAMPLE_RATIO
    ts.append(t_end)
    steps = np.unique(np.round(np.asarray(ts) / dt).astype(np.int64))
    return steps[steps > 0]


def run_fronts(
    params: ModelParams,
    t_end: float,
    levels=(0.5,),
    dx: float = 0.1,
    window_policy: WindowPolicy | None = None,
    policy: ReactionEvalPolicy = DEFAULT_POLICY,
    reaction: str = "model",
) -> dict[float, FrontTrace]:
    """Run once from the step datum and track several levels."""
    if not (math.isfinite(t_end) and t_end >= 1.0):
        raise ModelError("t_end must be at least 1")
    if not (math.isfinite(dx) and dx > 0.0):
        raise ModelError(f"dx must be positive, got {dx}")
    levels = tuple(float(l) for l in levels)
    if not levels or any(not 0.0 < l < 1.0 for l in levels):
        raise ModelError("levels must lie in (0, 1)")
    wp = window_policy or WindowPolicy()
    wp.validate(t_end)

    # whole number of admissible steps landing on t_end
    dt = t_end / math.ceil(t_end / stable_dt(params, dx, reaction) - 1e-9)
    speed, _ = discrete_front_speed(dx, dt) if reaction != "heat" else (2.0, 1.0)
    behind_cells = int(round(wp.behind / dx))
    n = behind_cells + int(round(wp.ahead_for(t_end) / dx))
    field = FieldState(window_left=-behind_cells * dx, dx=dx, values=np.zeros(n))
    field.values[:behind_cells] = 1.0
    args = _kernel_args(params, reaction, policy)

    sample_steps = _sample_times(t_end, dt)
    chunk = max(1, int(wp.recenter_every / dt))
    done = 0
    times, rows = [], []
    for target in sample_steps:
        while done < target:
            ns = int(min(chunk, target - done))
            field.overshoot = max(field.overshoot, _run_kernel(field.values, ns, dt, dx, args))
            done += ns
            field.t = done * dt
            _recenter(field, wp, levels)
        times.append(done * dt)
        rows.append([front_position(field, l) for l in levels])
    if field.overshoot > OVERSHOOT_WARN:
        logger.warning("pre-clamp overshoot reached %.3g", field.overshoot)

    times = np.asarray(times)
    pos = np.asarray(rows)
    out = {}
    for j, lam in enumerate(levels):
        out[lam] = FrontTrace(
            lam=lam,
            times=times,
            positions=pos[:, j],
            delays=speed * times - pos[:, j],
            raw_delays=2.0 * times - pos[:, j],
            speed_reference=speed,
            dx=dx,
            dt=dt,
            r=params.r,
            A=params.A,
            max_overshoot=field.overshoot,
        )
    return out


def _recenter(field: FieldState, wp: WindowPolicy, levels) -> None:
    lead = front_position(field, max(min(levels), 1e-3))
    right_edge = field.window_left + field.values.size * field.dx
    if right_edge - lead < wp.min_margin:
        raise WindowBreach(f"front at {lead:.4g} is within {wp.min_margin} of the right edge {right_edge:.4g}")
    tail = front_position(field, max(levels))
    k = int((tail - field.window_left - wp.behind) / field.dx)
    if k <= 0:
        return
    u = field.values
    if u[:k].min() < 1.0 - DROP_TOLERANCE:
        raise WindowBreach(f"dropping cells with value {u[:k].min():.10g}; increase the distance behind the front")
    u[:-k] = u[k:]
    u[-k:] = 0.0
    field.window_left += k * field.dx
    field.shift_count += k


def run_front(
    params: ModelParams,
    t_end: float,
    lam: float = 0.5,
    dx: float = 0.1,
    window_policy: WindowPolicy | None = None,
    policy: ReactionEvalPolicy = DEFAULT_POLICY,
    reaction: str = "model",
) -> FrontTrace:
    """Trace ``X_lam(t)`` from the step datum up to ``t_end``."""
    return run_fronts(params, t_end, (lam,), dx, window_policy, policy, reaction)[float(lam)]


def fit_delay(trace: FrontTrace, params: ModelParams, window=None) -> FitResult:
    """Fit the delay law of the regime over the last decade of the trace.

    ``r >= 3``: ``delay = a ln t + b``.  ``1 < r < 3``: ``delay = theta t^beta + b``.

    Raises
    ------
    NoLawError
        If the rms residual exceeds 5% of the delay range over the window.
    """
    if trace.t_end < 500.0:
        raise ModelError("delay fits need a trace reaching t >= 500 (one decade past t = 50)")
    lo, hi = (trace.t_end / 10.0, trace.t_end) if window is None else (float(window[0]), float(window[1]))
    m = (trace.times >= lo) & (trace.times <= hi)
    if params.r >= 3.0:
        fit = logfit(trace.times, trace.delays, (lo, hi))
    else:
        fit = powfit(trace.times, trace.delays, params.beta, (lo, hi))
    spread = float(np.ptp(trace.delays[m]))
    if not (math.isfinite(fit.rms) and fit.rms <= 0.05 * max(spread, 1e-12)):
        raise NoLawError(f"rms residual {fit.rms:.3g} is large compared with the delay range {spread:.3g}")
    return fit


# --- heat-kernel bounds -------------------------------------------------------


@dataclass
class HeatBoundReport:
    c_upper: float
    c_lower: float
    constant: float
    t_samples: tuple
    n_points: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "c_upper": self.c_upper,
            "c_lower": self.c_lower,
            "constant": self.constant,
            "t_samples": list(self.t_samples),
            "n_points": self.n_points,
        }


C_MAX = 1e3


def bound_constants(t, x, u) -> tuple[float, float]:
    """Smallest constants for which

        u <= C sqrt(t)/(x + sqrt(t)) exp(t - x^2/4t)
        u >= sqrt(t)/(C (x + sqrt(t))) exp(-x^2/4t - C x/t)

    hold at all samples ``x >= 0``.

    Raises
    ------
    BoundNotFound
        If either constant would exceed 1e3.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    st = np.sqrt(t)
    base = st / (x + st)
    c_up = float(np.max(u / (base * np.exp(t - x * x / (4.0 * t)))))

    log_ratio = np.log(base) - x * x / (4.0 * t)
    with np.errstate(divide="ignore"):
        log_u = np.log(u)

    def lower_holds(c):
        return bool(np.all(log_ratio - math.log(c) - c * x / t <= log_u))

    if not lower_holds(C_MAX):
        raise BoundNotFound(f"lower bound fails for every C <= {C_MAX:g}")
    lo, hi = 1e-12, C_MAX
    if lower_holds(lo):
        c_low = lo
    else:
        # bisection in log C; the lower barrier decreases in C
        while hi / lo > 1.0 + 1e-10:
            mid = math.sqrt(lo * hi)
            if lower_holds(mid):
                hi = mid
            else:
                lo = mid
        c_low = hi
    if c_up > C_MAX:
        raise BoundNotFound(f"upper bound needs C = {c_up:.4g} > {C_MAX:g}")
    return c_up, c_low


def heat_bound_check(
    params: ModelParams, t_samples=(1.0, 2.0, 5.0, 10.0), dx: float = 0.1, policy: ReactionEvalPolicy = DEFAULT_POLICY
) -> HeatBoundReport:
    """Run from the step datum and measure the constants of the heat-kernel sandwich on ``x in [0, 6 sqrt(t)]``."""
    ts = sorted(float(t) for t in t_samples)
    if not ts or ts[0] < 1.0 or ts[-1] > 20.0:
        raise ModelError("t_samples must lie in [1, 20]")
    field = init_field(params, (-50.0, 200.0), dx)
    T, X, U = [], [], []
    for t in ts:
        advance(field, t, params, policy)
        x = field.x
        m = (x >= 0.0) & (x <= 6.0 * math.sqrt(t))
        T.append(np.full(np.count_nonzero(m), t))
        X.append(x[m])
        U.append(field.values[m].copy())
    T, X, U = (np.concatenate(a) for a in (T, X, U))
    c_up, c_low = bound_constants(T, X, U)
    return HeatBoundReport(c_upper=c_up, c_lower=c_low, constant=max(c_up, c_low), t_samples=tuple(ts), n_points=T.size)

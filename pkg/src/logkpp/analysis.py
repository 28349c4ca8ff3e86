"""Least-squares helpers and the discrete radial-oscillator operator.

The operator is ``M_A = -d^2/dy^2 + y^2/16 + 1/4 + A/y^2 - (1 + alpha)/2`` on
``(0, L)`` with zero boundary values.  Its principal eigenfunction is
``Q(y) = y^alpha exp(-y^2/8)`` (normalized) with eigenvalue 0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ModelError, NumericalError
from .model import alpha_of

MIN_FIT_POINTS = 8
STENCILS = ("consistent", "standard")


@dataclass(frozen=True)
class FitResult:
    """Ordinary least squares of ``y = coefficient * g(x) + intercept``.

    ``window`` is expressed in the caller's abscissa (time for delay fits),
    not in the transformed coordinate ``g(x)``.
    """

    model: str
    coefficient: float
    intercept: float
    window: tuple[float, float]
    rms: float
    stderr: float
    n_points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _select(xs, ys, window):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ModelError("abscissas and ordinates must be 1-D arrays of equal length")
    if window is None:
        mask = np.ones(xs.size, dtype=bool)
    else:
        lo, hi = window
        mask = (xs >= lo) & (xs <= hi)
    if np.count_nonzero(mask) < MIN_FIT_POINTS:
        raise ModelError(f"need at least {MIN_FIT_POINTS} points in the fit window")
    return mask


def _ols(g: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    n = g.size
    gm = g.mean()
    ym = y.mean()
    dg = g - gm
    sxx = float(np.dot(dg, dg))
    if not sxx > 1e-300 * max(1.0, gm * gm) * n:
        raise ModelError("degenerate abscissas: all points coincide")
    slope = float(np.dot(dg, y - ym)) / sxx
    intercept = float(ym - slope * gm)
    resid = y - (slope * g + intercept)
    ss = float(np.dot(resid, resid))
    rms = math.sqrt(ss / n)
    stderr = math.sqrt(ss / (n - 2) / sxx) if n > 2 else math.inf
    return slope, intercept, rms, stderr


def linfit(xs, ys, window=None) -> FitResult:
    """Fit ``ys = slope * xs + intercept`` over ``window = (lo, hi)`` in ``xs``.

    >>> r = linfit(range(10), [3 * x + 1 for x in range(10)])
    >>> round(r.coefficient, 12), round(r.intercept, 12), r.rms < 1e-12
    (3.0, 1.0, True)
    """
    mask = _select(xs, ys, window)
    x = np.asarray(xs, dtype=float)[mask]
    y = np.asarray(ys, dtype=float)[mask]
    slope, intercept, rms, stderr = _ols(x, y)
    return FitResult("a*x+b", slope, intercept, (float(x.min()), float(x.max())), rms, stderr, x.size)


def logfit(ts, ds, window=None) -> FitResult:
    """Fit ``ds = a * ln(ts) + b``; ``window`` is in ``ts``."""
    mask = _select(ts, ds, window)
    t = np.asarray(ts, dtype=float)[mask]
    if np.any(t <= 0.0):
        raise ModelError("log fit needs positive abscissas")
    d = np.asarray(ds, dtype=float)[mask]
    a, b, rms, stderr = _ols(np.log(t), d)
    return FitResult("a*ln(t)+b", a, b, (float(t.min()), float(t.max())), rms, stderr, t.size)


def powfit(ts, ds, beta: float, window=None) -> FitResult:
    """Fit ``ds = theta * ts**beta + b``; ``window`` is in ``ts``."""
    mask = _select(ts, ds, window)
    t = np.asarray(ts, dtype=float)[mask]
    if np.any(t <= 0.0):
        raise ModelError("power fit needs positive abscissas")
    d = np.asarray(ds, dtype=float)[mask]
    a, b, rms, stderr = _ols(t**beta, d)
    return FitResult(f"theta*t^{beta:.15g}+b", a, b, (float(t.min()), float(t.max())), rms, stderr, t.size)


# --- radial oscillator ------------------------------------------------------


@dataclass
class SpectrumResult:
    A: float
    h: float
    L: float
    stencil: str
    eigenvalues: np.ndarray
    q_residual: float
    ground_state_distance: float
    y: np.ndarray = field(repr=False)
    ground_state: np.ndarray = field(repr=False)


def _check_grid(A: float, h: float, L: float, stencil: str) -> int:
    alpha_of(A)
    if not (math.isfinite(h) and math.isfinite(L)) or h <= 0.0 or L <= 0.0:
        raise ModelError("degenerate grid: h and L must be positive and finite")
    if h > 0.05:
        raise ModelError(f"grid spacing h = {h} exceeds 0.05")
    if L < 30.0:
        raise ModelError(f"domain length L = {L} is below 30")
    if stencil not in STENCILS:
        raise ModelError(f"unknown stencil {stencil!r}; choose from {STENCILS}")
    n = int(round(L / h))
    if abs(n * h - L) > 1e-9 * L:
        raise ModelError("L must be an integer multiple of h")
    return n


def ma_operator(A: float, h: float, L: float, stencil: str = "consistent"):
    """Symmetric tridiagonal discretization on the interior nodes ``y_i = i h``.

    ``stencil="standard"`` samples ``A/y^2`` at the nodes.  Because ``Q``
    behaves like ``y^alpha`` at the origin, that choice is only first order
    (or worse) for non-integer ``alpha``.  ``stencil="consistent"`` replaces
    ``A/y_i^2`` by ``[(i+1)^a - 2 i^a + (i-1)^a] / (h^2 i^a)``, the value
    for which the three-point Laplacian annihilates ``y^alpha`` exactly.  The
    two coincide when ``alpha`` is an integer.

    Returns
    -------
    y, diagonal, off_diagonal
    """
    n = _check_grid(A, h, L, stencil)
    alpha = alpha_of(A)
    i = np.arange(1, n, dtype=float)
    y = i * h
    if stencil == "standard":
        singular = A / (y * y)
    else:
        singular = ((i + 1.0) ** alpha - 2.0 * i**alpha + (i - 1.0) ** alpha) / (h * h * i**alpha)
    potential = y * y / 16.0 + 0.25 + singular - 0.5 * (1.0 + alpha)
    diag = 2.0 / (h * h) + potential
    off = np.full(n - 2, -1.0 / (h * h))
    return y, diag, off


def _q_raw(alpha: float, y):
    return y**alpha * np.exp(-y * y / 8.0)


def principal_q(A: float, y: np.ndarray, h: float) -> np.ndarray:
    """``y^alpha exp(-y^2/8)`` normalized in the discrete L2 norm."""
    q = _q_raw(alpha_of(A), y)
    return q / math.sqrt(h * float(np.dot(q, q)))


def ma_residual(A: float, h: float, L: float, stencil: str = "consistent") -> float:
    """Discrete L2 norm of the discretized ``M_A`` applied to the analytic ``Q``."""
    y, diag, off = ma_operator(A, h, L, stencil)
    alpha = alpha_of(A)
    q = _q_raw(alpha, y)
    z = math.sqrt(h * float(np.dot(q, q)))
    q /= z
    res = diag * q
    res[1:] += off * q[:-1]
    res[:-1] += off * q[1:]
    # the analytic Q is not exactly zero at y = L
    res[-1] -= _q_raw(alpha, L) / z / (h * h)
    return math.sqrt(h * float(np.dot(res, res)))


def ma_spectrum(A: float, h: float, L: float, k: int, stencil: str = "consistent") -> SpectrumResult:
    """Lowest ``k`` eigenvalues of the discretized ``M_A``.

    Uses LAPACK bisection (``stebz``) with inverse iteration for the vectors.
    """
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= 10:
        raise ModelError(f"k must be an integer in [1, 10], got {k!r}")
    y, diag, off = ma_operator(A, h, L, stencil)
    try:
        w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1), lapack_driver="stebz")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"tridiagonal eigen-solve failed: {exc}") from exc
    ground = v[:, 0] / math.sqrt(h)
    if ground.sum() < 0.0:
        ground = -ground
    q = principal_q(A, y, h)
    dist = math.sqrt(h * float(np.dot(ground - q, ground - q)))
    return SpectrumResult(
        A=float(A),
        h=float(h),
        L=float(L),
        stencil=stencil,
        eigenvalues=np.sort(w),
        q_residual=ma_residual(A, h, L, stencil),
        ground_state_distance=dist,
        y=y,
        ground_state=ground,
    )

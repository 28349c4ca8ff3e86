"""Reaction term, its normalization, and the derived constants.

The reaction is ``f(u) = u (1 - A log(nu/u)^(1-r))`` with ``r > 1`` and
``A > 0``.  The normalization ``nu = exp(A^(1/(r-1)))`` makes ``u = 1`` a
steady state for every ``A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np

from .errors import ModelError, SchemeViolation


@dataclass(frozen=True)
class ModelParams:
    """Validated ``(r, A)`` together with every derived constant.

    ``nu`` overflows to ``inf`` when ``A^(1/(r-1))`` exceeds ~709; all solvers
    work with ``log_nu`` instead.
    """

    r: float
    A: float
    log_nu: float
    nu: float
    gamma: float
    beta: float
    alpha: float
    s_a: float
    y_bar: float

    @property
    def reaction_exponent(self) -> float:
        return 1.0 - self.r

    @property
    def regime(self) -> str:
        if self.r > 3.0:
            return "r>3"
        if self.r == 3.0:
            return "r=3"
        return "r<3"

    @property
    def tail_coefficient(self) -> float:
        """Limit ``2 sqrt(A) / (3 - r)`` of ``log(e^xi U) / xi^((3-r)/2)``."""
        if self.r >= 3.0:
            raise ModelError("tail coefficient is defined only for 1 < r < 3")
        return 2.0 * math.sqrt(self.A) / (3.0 - self.r)

    @property
    def slope_at_one(self) -> float:
        """f'(1) = (1 - r) A^(-1/(r-1)), negative for all valid parameters."""
        return (1.0 - self.r) * self.A ** (-1.0 / (self.r - 1.0))

    def manifest(self) -> dict[str, str]:
        """Decimal strings with 17 significant digits (``nu`` may exceed float range)."""
        with localcontext() as ctx:
            ctx.prec = 17
            nu = Decimal(repr(self.log_nu)).exp()
        out = {
            k: _dec(getattr(self, k))
            for k in ("r", "A", "log_nu", "gamma", "beta", "alpha", "s_a", "y_bar")
        }
        out["nu"] = format(nu, ".16e")
        return out


@dataclass(frozen=True)
class ReactionEvalPolicy:
    """Floating-point guards applied before evaluating the reaction.

    Below ``clamp_low`` the reaction is replaced by its small-``u`` limit
    ``f(u) = u``.  States in ``(clamp_high, nu)`` are treated as overshoot and
    evaluated at ``clamp_high``.
    """

    clamp_low: float = 1e-300
    clamp_high: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.clamp_low < 1.0:
            raise ModelError("clamp_low must lie in (0, 1)")
        if self.clamp_high != 1.0:
            raise ModelError("clamp_high is fixed at the steady state 1")


DEFAULT_POLICY = ReactionEvalPolicy()


def _dec(x: float) -> str:
    return format(float(x), ".16e")


def _check_finite(name: str, x: float) -> float:
    try:
        x = float(x)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{name} must be a real number") from exc
    if not math.isfinite(x):
        raise ModelError(f"{name} must be finite, got {x}")
    return x


def alpha_of(A: float) -> float:
    """Root ``alpha > 1`` of ``alpha (alpha - 1) = A``."""
    A = _check_finite("A", A)
    if A <= 0.0:
        raise ModelError(f"A must be positive, got {A}")
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * A))


def make_params(r: float, A: float) -> ModelParams:
    """Validate ``(r, A)`` and populate all derived constants.

    Examples
    --------
    >>> p = make_params(3.0, 2.0)
    >>> p.beta, p.alpha, p.s_a
    (0.0, 2.0, 2.5)
    """
    r = _check_finite("r", r)
    A = _check_finite("A", A)
    if r <= 1.0:
        raise ModelError(f"r must exceed 1, got {r}")
    if A <= 0.0:
        raise ModelError(f"A must be positive, got {A}")

    log_nu = A ** (1.0 / (r - 1.0))
    nu = math.exp(log_nu) if log_nu < 709.0 else math.inf
    gamma = 2.0 / (1.0 + r)
    beta = (3.0 - r) / (1.0 + r)
    alpha = alpha_of(A)
    y_bar = (1.0 + r) ** gamma * A ** (gamma / 2.0)
    return ModelParams(
        r=r,
        A=A,
        log_nu=log_nu,
        nu=nu,
        gamma=gamma,
        beta=beta,
        alpha=alpha,
        s_a=alpha + 0.5,
        y_bar=y_bar,
    )


def reaction(u: float, params: ModelParams, policy: ReactionEvalPolicy = DEFAULT_POLICY) -> float:
    """Evaluate ``f(u)`` for a single state value.

    Raises
    ------
    SchemeViolation
        If ``u`` is negative, non-finite, or at least ``nu``.
    """
    u = float(u)
    if not math.isfinite(u) or u < 0.0:
        raise SchemeViolation(f"state value {u} outside [0, nu)")
    if u >= params.nu:
        raise SchemeViolation(f"state value {u} >= nu = {params.nu}")
    u = min(u, policy.clamp_high)
    if u == 0.0:
        return 0.0
    if u < policy.clamp_low:
        return u
    L = params.log_nu - math.log(u)
    return u * (1.0 - params.A * L ** (1.0 - params.r))


def reaction_array(
    u: np.ndarray, params: ModelParams, policy: ReactionEvalPolicy = DEFAULT_POLICY
) -> np.ndarray:
    """Vectorized :func:`reaction` with the same guards."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)) or np.any(u < 0.0):
        raise SchemeViolation("state values outside [0, nu)")
    if np.any(u >= params.nu):
        raise SchemeViolation(f"state values >= nu = {params.nu}")
    u = np.minimum(u, policy.clamp_high)
    out = u.copy()
    mask = u >= policy.clamp_low
    L = params.log_nu - np.log(u[mask])
    out[mask] = u[mask] * (1.0 - params.A * L ** (1.0 - params.r))
    return out


def _require_barrier(params: ModelParams) -> None:
    if params.beta <= 0.0:
        raise ModelError(f"the barrier curve needs r < 3 (beta > 0), got r = {params.r}")


def gamma_curve(y, params: ModelParams):
    """Barrier ``gamma^2 y^2 / (4 beta) + A y^(1-r) / beta`` for ``y > 0``."""
    _require_barrier(params)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise ModelError("the barrier curve is defined for y > 0 only")
    g, b = params.gamma, params.beta
    out = g * g * y * y / (4.0 * b) + params.A * y ** (1.0 - params.r) / b
    return float(out) if out.ndim == 0 else out


def gamma_prime(y, params: ModelParams):
    _require_barrier(params)
    y = np.asarray(y, dtype=float)
    g, b, r = params.gamma, params.beta, params.r
    out = g * g * y / (2.0 * b) + (1.0 - r) * params.A * y ** (-r) / b
    return float(out) if out.ndim == 0 else out


def gamma_second(y, params: ModelParams):
    _require_barrier(params)
    y = np.asarray(y, dtype=float)
    g, b, r = params.gamma, params.beta, params.r
    out = g * g / (2.0 * b) + r * (r - 1.0) * params.A * y ** (-r - 1.0) / b
    return float(out) if out.ndim == 0 else out

"""Fisher-KPP fronts with a log-singular reaction: waves, delay profiles, and front delays."""
from __future__ import annotations

from .errors import (
    AsymptoticRegimeError,
    BoundNotFound,
    BranchViolation,
    ModelError,
    NoLawError,
    NumericalError,
    SchemeViolation,
    WindowBreach,
)
from .model import ModelParams, ReactionEvalPolicy, alpha_of, gamma_curve, make_params, reaction

__version__ = "0.1.0"

__all__ = [
    "AsymptoticRegimeError",
    "BoundNotFound",
    "BranchViolation",
    "ModelError",
    "ModelParams",
    "NoLawError",
    "NumericalError",
    "ReactionEvalPolicy",
    "SchemeViolation",
    "WindowBreach",
    "alpha_of",
    "gamma_curve",
    "make_params",
    "reaction",
]

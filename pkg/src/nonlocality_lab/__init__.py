"""Deterministic hidden-variables models of the singlet experiment: transition sets, detailed balance and nonequilibrium signals."""

from .core import (
    Angle,
    DomainError,
    InvalidAngleError,
    LambdaPoint,
    LambdaSpace,
    Model,
    Outcome,
    Points,
    SettingsPair,
    Shift,
    Wing,
    Direction,
    canonicalize,
    evaluate_pair,
)
from .numerics import Estimate, IntegrationBudget, Method, integrate, integrate_many, make_stream

__version__ = "0.1.0"

__all__ = [
    "Angle",
    "DomainError",
    "Direction",
    "Estimate",
    "IntegrationBudget",
    "InvalidAngleError",
    "LambdaPoint",
    "LambdaSpace",
    "Method",
    "Model",
    "Outcome",
    "Points",
    "SettingsPair",
    "Shift",
    "Wing",
    "canonicalize",
    "evaluate_pair",
    "integrate",
    "integrate_many",
    "make_stream",
]

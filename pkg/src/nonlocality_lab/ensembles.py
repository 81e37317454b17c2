"""Hidden-variable distributions as reweightings of the equilibrium measure.

An :class:`Ensemble` carries a bounded weight function ``w`` with
``rho = w * rho_eq``.  All analysis integrals are taken against the
equilibrium sampler with ``w`` as an importance weight, so every ensemble
shares one stream of hidden-variable draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Direction, DomainError, LambdaSpace, Model, Points, SettingsPair, Shift, Wing
from .numerics import IntegrationBudget, Method, integrate

ZERO_MASS_TOL = 1e-12

WeightFn = Callable[[Points], np.ndarray]


class ZeroMassError(ValueError):
    pass


class ZeroMeasureTransitionSetError(ZeroMassError):
    """The requested transition set has no equilibrium measure (one-way locality in that direction)."""


@dataclass(frozen=True)
class Ensemble:
    space: LambdaSpace
    weight: WeightFn = field(repr=False)
    weight_bound: float
    label: str
    # coordinates where the weight may jump (d = 1); helps quadrature stay exact
    breakpoints: tuple[float, ...] = ()
    is_equilibrium: bool = False

    def __call__(self, pts: Points) -> np.ndarray:
        return self.weight(pts)


def equilibrium(space: LambdaSpace) -> Ensemble:
    return Ensemble(space, lambda pts: np.ones(len(pts)), 1.0, "equilibrium", is_equilibrium=True)


def default_budget(space: LambdaSpace, breakpoints: Sequence[float] = ()) -> IntegrationBudget:
    """Budget used for normalization constants: exact when the integrand structure allows it."""
    if space.dim == 0:
        return IntegrationBudget(Method.EXACT)
    if space.dim == 1 and breakpoints:
        return IntegrationBudget(Method.QUADRATURE)
    return IntegrationBudget(Method.MONTE_CARLO)


def tilt(
    base: Ensemble,
    g: WeightFn,
    g_bound: float,
    label: Optional[str] = None,
    budget: Optional[IntegrationBudget] = None,
    breakpoints: Sequence[float] = (),
) -> Ensemble:
    """Reweight ``base`` by ``g`` and renormalize.

    ``g`` must be non-negative and never exceed ``g_bound``; this is checked on
    every point the normalization integral touches.
    """
    if not (math.isfinite(g_bound) and g_bound >= 0):
        raise ValueError(f"g_bound must be finite and non-negative, got {g_bound!r}")

    def checked(pts):
        v = np.asarray(g(pts), dtype=float)
        if np.any(v < 0) or np.any(v > g_bound) or not np.all(np.isfinite(v)):
            raise ValueError("tilt function is negative or exceeds its declared bound")
        return v

    bps = tuple(sorted(set(base.breakpoints) | {float(b) for b in breakpoints}))
    if budget is None:
        budget = default_budget(base.space, bps)
    z = integrate(checked, base.space, base.weight, budget, bps).value
    if z <= ZERO_MASS_TOL:
        raise ZeroMassError(f"tilted ensemble has zero mass (Z = {z!r})")

    def weight(pts):
        return g(pts) * base.weight(pts) / z

    bound = max(1.0, g_bound * base.weight_bound / z)
    return Ensemble(base.space, weight, bound, label or f"tilt({base.label})", bps)


def transition_indicator(model: Model, wing: Wing, settings: SettingsPair, shift: Shift, direction: Direction) -> WeightFn:
    wing = Wing(wing)
    direction = Direction(direction)
    before, after = (1, -1) if direction is Direction.PLUS_TO_MINUS else (-1, 1)
    shifted = settings.apply(shift)

    def indicator(pts):
        old = model.outcomes(wing, settings, pts)
        new = model.outcomes(wing, shifted, pts)
        return ((old == before) & (new == after)).astype(float)

    return indicator


def concentrate_on_transitions(
    model: Model,
    wing: Wing,
    settings: SettingsPair,
    shift: Shift,
    direction: Direction,
    budget: Optional[IntegrationBudget] = None,
) -> Ensemble:
    """Uniform (relative to equilibrium) distribution on one transition set."""
    wing, direction = Wing(wing), Direction(direction)
    if shift.wing is wing:
        raise ValueError("the shift must be at the distant wing")
    indicator = transition_indicator(model, wing, settings, shift, direction)
    bps = model.breakpoints_for([settings, settings.apply(shift)])
    if budget is None:
        budget = default_budget(model.space, bps)
    nu = integrate(indicator, model.space, None, budget, bps).value
    if nu <= ZERO_MASS_TOL:
        raise ZeroMeasureTransitionSetError(
            f"transition set T_{wing.value}({direction.value}) of model {model.name!r} "
            "has zero equilibrium measure"
        )

    def weight(pts):
        return indicator(pts) / nu

    label = f"concentrate:{wing.value}:{direction.value}"
    return Ensemble(model.space, weight, 1.0 / nu, label, bps)


def mixture(e1: Ensemble, e2: Ensemble, epsilon: float) -> Ensemble:
    """``(1 - epsilon) * e1 + epsilon * e2``."""
    if e1.space != e2.space:
        raise DomainError("cannot mix ensembles on different hidden-variable spaces")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    if epsilon == 0.0:
        return e1
    if epsilon == 1.0:
        return e2

    def weight(pts):
        return (1.0 - epsilon) * e1.weight(pts) + epsilon * e2.weight(pts)

    bound = (1.0 - epsilon) * e1.weight_bound + epsilon * e2.weight_bound
    bps = tuple(sorted(set(e1.breakpoints) | set(e2.breakpoints)))
    return Ensemble(e1.space, weight, bound, f"mixture({e1.label},{e2.label},{epsilon!r})", bps)


def branch_indicator(space: LambdaSpace, branches: Sequence[int]) -> WeightFn:
    for b in branches:
        if not 0 <= b < space.branch_count:
            raise DomainError(f"branch {b} is outside 0..{space.branch_count - 1}")
    keep = np.asarray(sorted(set(branches)), dtype=np.int64)
    return lambda pts: np.isin(pts.branch, keep).astype(float)


def linear_in_u(slope: float) -> WeightFn:
    """``g(u) = 1 + slope * (2u - 1)``, non-negative for ``|slope| <= 1``."""
    if abs(slope) > 1:
        raise ValueError("slope must satisfy |slope| <= 1 to keep the weight non-negative")
    return lambda pts: 1.0 + slope * (2.0 * pts.u - 1.0)

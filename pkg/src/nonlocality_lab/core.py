"""Domain types: angles, outcomes, settings, hidden-variable spaces and models.

A hidden variable is a pair ``(branch, coords)``: a discrete branch index and a
point in the unit hypercube ``[0, 1)^d``.  The equilibrium measure factors as
branch weights times a per-branch density on the hypercube (uniform unless a
``base_density`` is given).

Outcome maps are stored vectorized: they take the two setting angles (plain
floats, already canonical) and a :class:`Points` batch, and return an ``int8``
array of +1/-1 values.  Scalar evaluation goes through :meth:`Model.sigma_a`,
:meth:`Model.sigma_b` and :func:`evaluate_pair`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
WEIGHT_SUM_TOL = 1e-12


class InvalidAngleError(ValueError):
    pass


class DomainError(ValueError):
    """A hidden-variable point or ensemble does not belong to the space it is used with."""


class Outcome(enum.IntEnum):
    PLUS = 1
    MINUS = -1


class Wing(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Wing":
        return Wing.B if self is Wing.A else Wing.A


class Direction(str, enum.Enum):
    PLUS_TO_MINUS = "plus_to_minus"
    MINUS_TO_PLUS = "minus_to_plus"


def _canonical_radians(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise InvalidAngleError(f"angle must be finite, got {x!r}")
    r = math.fmod(x, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    # fmod of a tiny negative number plus 2*pi can round up to 2*pi
    if r >= TWO_PI:
        r = 0.0
    return r + 0.0  # drop negative zero


@dataclass(frozen=True, order=True)
class Angle:
    """An angle stored canonically in [0, 2*pi)."""

    radians: float

    def __post_init__(self):
        object.__setattr__(self, "radians", _canonical_radians(self.radians))

    def __float__(self) -> float:
        return self.radians


def canonicalize(angle_raw: float) -> Angle:
    return Angle(angle_raw)


def as_angle(x) -> Angle:
    return x if isinstance(x, Angle) else Angle(x)


@dataclass(frozen=True)
class Shift:
    """A change of the measurement setting at exactly one wing."""

    wing: Wing
    new_angle: Angle

    def __post_init__(self):
        object.__setattr__(self, "wing", Wing(self.wing))
        object.__setattr__(self, "new_angle", as_angle(self.new_angle))


@dataclass(frozen=True)
class SettingsPair:
    theta_a: Angle
    theta_b: Angle

    def __post_init__(self):
        object.__setattr__(self, "theta_a", as_angle(self.theta_a))
        object.__setattr__(self, "theta_b", as_angle(self.theta_b))

    @property
    def radians(self) -> tuple[float, float]:
        return self.theta_a.radians, self.theta_b.radians

    def apply(self, shift: Shift) -> "SettingsPair":
        if shift.wing is Wing.A:
            return SettingsPair(shift.new_angle, self.theta_b)
        return SettingsPair(self.theta_a, shift.new_angle)


@dataclass(frozen=True)
class LambdaPoint:
    branch: int
    coords: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))


@dataclass(frozen=True)
class Points:
    """A batch of hidden-variable points: ``branch`` has shape (n,), ``coords`` (n, d)."""

    branch: np.ndarray
    coords: np.ndarray

    def __len__(self) -> int:
        return len(self.branch)

    @property
    def u(self) -> np.ndarray:
        """First continuous coordinate (the only one for d = 1 spaces)."""
        return self.coords[:, 0]

    def __getitem__(self, idx) -> "Points":
        return Points(self.branch[idx], self.coords[idx])


DensityFn = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LambdaSpace:
    """Branch x unit-hypercube space carrying the equilibrium measure.

    ``base_density(branch, coords)`` must return the per-branch density on
    ``[0, 1)^d`` for an (n, d) coordinate array.  ``None`` means uniform.
    """

    branch_weights: tuple[float, ...]
    dim: int = 0
    base_density: Optional[DensityFn] = field(default=None, compare=True)

    def __post_init__(self):
        w = tuple(float(x) for x in self.branch_weights)
        object.__setattr__(self, "branch_weights", w)
        if not w:
            raise ValueError("a hidden-variable space needs at least one branch")
        if any(not math.isfinite(x) or x < 0.0 for x in w):
            raise ValueError("branch weights must be finite and non-negative")
        if abs(math.fsum(w) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"branch weights sum to {math.fsum(w)!r}, expected 1")
        if int(self.dim) != self.dim or self.dim < 0:
            raise ValueError("dim must be a non-negative integer")
        object.__setattr__(self, "dim", int(self.dim))
        if self.base_density is not None:
            self._check_density()

    @property
    def branch_count(self) -> int:
        return len(self.branch_weights)

    def _check_density(self):
        # midpoint check; only practical for low dimension
        if self.dim == 0 or self.dim > 2:
            return
        n = 4096 if self.dim == 1 else 256
        mid = (np.arange(n) + 0.5) / n
        grid = mid[:, None] if self.dim == 1 else np.stack(np.meshgrid(mid, mid), -1).reshape(-1, 2)
        for b in range(self.branch_count):
            q = np.asarray(self.base_density(b, grid), dtype=float)
            if np.any(q < 0):
                raise ValueError(f"base density of branch {b} is negative somewhere")
            mass = q.mean()
            if abs(mass - 1.0) > 1e-3:
                raise ValueError(f"base density of branch {b} integrates to {mass:.6g}, expected 1")

    def density(self, pts: Points) -> Optional[np.ndarray]:
        """Per-point base density, or ``None`` when uniform."""
        if self.base_density is None:
            return None
        out = np.empty(len(pts))
        for b in np.unique(pts.branch):
            sel = pts.branch == b
            out[sel] = self.base_density(int(b), pts.coords[sel])
        return out

    def contains(self, point: LambdaPoint) -> bool:
        if not (0 <= point.branch < self.branch_count) or len(point.coords) != self.dim:
            return False
        return all(0.0 <= c < 1.0 for c in point.coords)

    def check(self, point: LambdaPoint) -> None:
        if not self.contains(point):
            raise DomainError(
                f"point {point} is outside the space "
                f"(branches 0..{self.branch_count - 1}, dim {self.dim})"
            )

    def batch(self, points: Sequence[LambdaPoint]) -> Points:
        for p in points:
            self.check(p)
        branch = np.array([p.branch for p in points], dtype=np.int64)
        coords = np.array([p.coords for p in points], dtype=float).reshape(len(points), self.dim)
        return Points(branch, coords)

    def enumerate_branches(self) -> Points:
        """All points of a d = 0 space, one per branch."""
        if self.dim != 0:
            raise DomainError("only d = 0 spaces can be enumerated")
        n = self.branch_count
        return Points(np.arange(n, dtype=np.int64), np.empty((n, 0)))


OutcomeFn = Callable[[float, float, Points], np.ndarray]
BreakpointFn = Callable[[Sequence[SettingsPair]], Sequence[float]]


@dataclass(frozen=True)
class Model:
    """A deterministic hidden-variables model of the two-wing experiment.

    ``breakpoints``, if given, returns the coordinates in ``[0, 1)`` where the
    outcome maps can change value for any of the given settings (d = 1 only).
    Quadrature uses them to integrate the piecewise-constant outcome integrands
    exactly.
    """

    name: str
    space: LambdaSpace
    outcome_a: OutcomeFn = field(repr=False)
    outcome_b: OutcomeFn = field(repr=False)
    breakpoints: Optional[BreakpointFn] = field(default=None, repr=False)

    def outcomes(self, wing: Wing, settings: SettingsPair, pts: Points) -> np.ndarray:
        fn = self.outcome_a if Wing(wing) is Wing.A else self.outcome_b
        ta, tb = settings.radians
        return np.asarray(fn(ta, tb, pts), dtype=np.int8)

    def sigma_a(self, settings: SettingsPair, point: LambdaPoint) -> Outcome:
        return self._scalar(Wing.A, settings, point)

    def sigma_b(self, settings: SettingsPair, point: LambdaPoint) -> Outcome:
        return self._scalar(Wing.B, settings, point)

    def _scalar(self, wing: Wing, settings: SettingsPair, point: LambdaPoint) -> Outcome:
        pts = self.space.batch([point])
        return Outcome(int(self.outcomes(wing, settings, pts)[0]))

    def breakpoints_for(self, settings: Sequence[SettingsPair]) -> tuple[float, ...]:
        if self.breakpoints is None:
            return ()
        return tuple(float(u) for u in self.breakpoints(settings))


def evaluate_pair(model: Model, settings: SettingsPair, point: LambdaPoint) -> tuple[Outcome, Outcome]:
    """Outcomes at both wings for one hidden-variable value."""
    model.space.check(point)
    return model.sigma_a(settings, point), model.sigma_b(settings, point)

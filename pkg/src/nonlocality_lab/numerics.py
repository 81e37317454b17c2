"""Reproducible integration against the equilibrium measure of a LambdaSpace.

Three methods:

* ``exact_enumeration`` -- exact weighted sum over branches (d = 0 only).
* ``quadrature`` -- per-branch midpoint rule.  For d = 1 the cell edges are
  the union of a uniform grid and any supplied breakpoints, so integrands
  that are piecewise constant between breakpoints integrate exactly.
* ``monte_carlo`` -- sampling stratified by branch.  Samples are generated in
  fixed-size chunks, each with its own counter-based stream keyed by
  ``(seed, branch, chunk index)``, and partial moments are reduced in chunk
  order.  The result therefore does not depend on the number of workers.

Integrands are vectorized: ``f(points)`` returns shape (n,) or (n, k).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DomainError, LambdaSpace, Points

DEFAULT_SAMPLES = 1_000_000
DEFAULT_QUADRATURE_POINTS = 4096
CHUNK_SIZE = 8192
MAX_QUADRATURE_CELLS = 50_000_000
_U64 = 2**64


class Method(str, enum.Enum):
    AUTO = "auto"
    EXACT = "exact_enumeration"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"


class MethodError(ValueError):
    pass


@dataclass(frozen=True)
class IntegrationBudget:
    method: Method = Method.AUTO
    samples: int = DEFAULT_SAMPLES
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        for name in ("samples", "quadrature_points", "workers"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if int(self.seed) != self.seed or not 0 <= self.seed < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    def resolve(self, space: LambdaSpace) -> Method:
        if self.method is Method.AUTO:
            return Method.EXACT if space.dim == 0 else Method.MONTE_CARLO
        if self.method is Method.EXACT and space.dim != 0:
            raise MethodError(f"exact enumeration needs a d = 0 space, this one has d = {space.dim}")
        return self.method


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    method: Method
    samples: int

    def within(self, target: float, sigma: float = 3.0, atol: float = 1e-12) -> bool:
        """True if ``|value - target|`` is inside ``sigma`` standard errors (floored at ``atol``)."""
        return abs(self.value - target) <= max(sigma * self.std_error, atol)

    def clipped(self, lo: float, hi: float) -> float:
        return min(max(self.value, lo), hi)

    def scaled(self, c: float) -> "Estimate":
        return Estimate(c * self.value, abs(c) * self.std_error, self.method, self.samples)

    def absolute(self) -> "Estimate":
        return Estimate(abs(self.value), self.std_error, self.method, self.samples)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "method": self.method.value,
            "samples": self.samples,
        }


@dataclass(frozen=True)
class IntegralSet:
    """Estimates for every column of a vector-valued integrand, from one sample stream."""

    values: np.ndarray
    std_errors: np.ndarray
    method: Method
    samples: int
    covariance: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> Estimate:
        return Estimate(float(self.values[i]), float(self.std_errors[i]), self.method, self.samples)

    def combine(self, coeffs: Sequence[float]) -> Estimate:
        """Linear combination of columns; needs ``covariance`` unless the method is deterministic."""
        c = np.asarray(coeffs, dtype=float)
        value = float(c @ self.values)
        if self.covariance is not None:
            se = math.sqrt(max(float(c @ self.covariance @ c), 0.0))
        elif np.all(self.std_errors == 0):
            se = 0.0
        else:
            raise ValueError("combining Monte Carlo columns needs covariance=True")
        return Estimate(value, se, self.method, self.samples)


def make_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based Philox stream: draws are a pure function of (seed, stream_id, counter)."""
    return np.random.Generator(np.random.Philox(key=[int(seed) % _U64, int(stream_id) % _U64]))


def allocate(n: int, weights: Sequence[float]) -> list[int]:
    """Largest-remainder split of ``n`` samples in proportion to ``weights``; ties go to the lower index."""
    raw = [n * w for w in weights]
    counts = [math.floor(r) for r in raw]
    left = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


Integrand = Callable[[Points], np.ndarray]


def _weighted_values(f: Integrand, weight: Optional[Integrand], space: LambdaSpace, pts: Points) -> np.ndarray:
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    w = None if weight is None else np.asarray(weight(pts), dtype=float)
    q = space.density(pts)
    if q is not None:
        w = q if w is None else w * q
    if w is not None:
        vals = vals * w[:, None]
    return vals


@dataclass
class _Moments:
    n: int
    mean: np.ndarray
    m2: np.ndarray  # (k,) or (k, k) centered sum of squares / cross products

    @classmethod
    def of(cls, x: np.ndarray, covariance: bool) -> "_Moments":
        mean = x.mean(axis=0)
        d = x - mean
        m2 = d.T @ d if covariance else np.einsum("ij,ij->j", d, d)
        return cls(len(x), mean, m2)

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        scale = self.n * other.n / n
        extra = np.outer(delta, delta) * scale if self.m2.ndim == 2 else delta * delta * scale
        return _Moments(n, mean, self.m2 + other.m2 + extra)


def integrate_many(
    f: Integrand,
    space: LambdaSpace,
    weight: Optional[Integrand],
    budget: IntegrationBudget,
    breakpoints: Sequence[float] = (),
    covariance: bool = False,
) -> IntegralSet:
    """Estimate ``integral of f * weight d(rho_eq)`` for every column of ``f``."""
    method = budget.resolve(space)
    if method is Method.EXACT:
        return _enumerate(f, space, weight)
    if method is Method.QUADRATURE:
        return _quadrature(f, space, weight, budget.quadrature_points, breakpoints)
    return _monte_carlo(f, space, weight, budget, covariance)


def integrate(
    f: Integrand,
    space: LambdaSpace,
    weight: Optional[Integrand],
    budget: IntegrationBudget,
    breakpoints: Sequence[float] = (),
) -> Estimate:
    res = integrate_many(f, space, weight, budget, breakpoints)
    if len(res) != 1:
        raise ValueError(f"integrand returned {len(res)} columns, expected 1")
    return res[0]


def _enumerate(f, space: LambdaSpace, weight) -> IntegralSet:
    pts = space.enumerate_branches()
    vals = _weighted_values(f, weight, space, pts)
    p = np.asarray(space.branch_weights)
    values = p @ vals
    k = vals.shape[1]
    return IntegralSet(values, np.zeros(k), Method.EXACT, space.branch_count, np.zeros((k, k)))


def _cells_1d(n: int, breakpoints: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, 1.0, n + 1)
    extra = np.asarray([b for b in breakpoints if 0.0 < b < 1.0], dtype=float)
    if extra.size:
        edges = np.unique(np.concatenate([edges, extra]))
    widths = np.diff(edges)
    keep = widths > 0
    mids = 0.5 * (edges[:-1] + edges[1:])
    return mids[keep], widths[keep]


def _quadrature(f, space: LambdaSpace, weight, n: int, breakpoints) -> IntegralSet:
    d = space.dim
    if d == 0:
        res = _enumerate(f, space, weight)
        return IntegralSet(res.values, res.std_errors, Method.QUADRATURE, res.samples, res.covariance)
    if d == 1:
        mids, widths = _cells_1d(n, breakpoints)
        coords = mids[:, None]
    else:
        if n**d > MAX_QUADRATURE_CELLS:
            raise MethodError(f"{n}^{d} quadrature cells is too many; lower quadrature_points")
        m = (np.arange(n) + 0.5) / n
        coords = np.stack(np.meshgrid(*([m] * d), indexing="ij"), -1).reshape(-1, d)
        widths = np.full(len(coords), 1.0 / n**d)
    total = None
    for b, p in enumerate(space.branch_weights):
        if p == 0.0:
            continue
        pts = Points(np.full(len(coords), b, dtype=np.int64), coords)
        part = p * (widths @ _weighted_values(f, weight, space, pts))
        total = part if total is None else total + part
    k = len(total)
    return IntegralSet(total, np.zeros(k), Method.QUADRATURE, len(coords) * space.branch_count, np.zeros((k, k)))


def _monte_carlo(f, space: LambdaSpace, weight, budget: IntegrationBudget, covariance: bool) -> IntegralSet:
    counts = allocate(budget.samples, space.branch_weights)
    for b, (p, n_b) in enumerate(zip(space.branch_weights, counts)):
        if p > 0 and n_b < 2:
            raise ValueError(
                f"{budget.samples} samples leave branch {b} with {n_b}; "
                "need at least 2 per branch with positive weight"
            )
    tasks = []
    for b, (p, n_b) in enumerate(zip(space.branch_weights, counts)):
        if p == 0.0:
            continue
        for j, start in enumerate(range(0, n_b, CHUNK_SIZE)):
            tasks.append((b, j, min(CHUNK_SIZE, n_b - start)))

    d = space.dim

    def run(task):
        b, j, m = task
        if d:
            coords = make_stream(budget.seed, (b << 32) | j).random((m, d))
        else:
            coords = np.empty((m, 0))
        pts = Points(np.full(m, b, dtype=np.int64), coords)
        return b, _Moments.of(_weighted_values(f, weight, space, pts), covariance)

    if budget.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=budget.workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    per_branch: dict[int, _Moments] = {}
    for b, mom in results:
        per_branch[b] = mom if b not in per_branch else per_branch[b].merge(mom)

    value = None
    var = None
    for b, mom in per_branch.items():
        p = space.branch_weights[b]
        v = p * p * mom.m2 / ((mom.n - 1) * mom.n)
        value = p * mom.mean if value is None else value + p * mom.mean
        var = v if var is None else var + v
    if covariance:
        se = np.sqrt(np.clip(np.diag(var), 0.0, None))
        cov = var
    else:
        se = np.sqrt(np.clip(var, 0.0, None))
        cov = None
    return IntegralSet(value, se, Method.MONTE_CARLO, budget.samples, cov)


def check_space(expected: LambdaSpace, got: LambdaSpace) -> None:
    if expected != got:
        raise DomainError("ensemble and model live on different hidden-variable spaces")

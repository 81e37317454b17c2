"""Correlations, marginals, transition fractions, degrees of nonlocality, signals and CHSH.

Every quantity that compares two settings evaluates both of them on the same
hidden-variable draws, so whether a given lambda flips is decided per point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import TWO_PI, Model, SettingsPair, Shift, Wing
from .ensembles import Ensemble, equilibrium
from .numerics import Estimate, IntegrationBudget, Method, check_space, integrate, integrate_many

EXACT_TOL = 1e-12


class UsageError(ValueError):
    pass


def _budget(budget: Optional[IntegrationBudget]) -> IntegrationBudget:
    return budget if budget is not None else IntegrationBudget()


def _breakpoints(model: Model, rho: Optional[Ensemble], settings: Sequence[SettingsPair]) -> tuple[float, ...]:
    bps = set(model.breakpoints_for(settings))
    if rho is not None:
        bps.update(rho.breakpoints)
    return tuple(sorted(bps))


def _weight(model: Model, rho: Ensemble):
    check_space(model.space, rho.space)
    return None if rho.is_equilibrium else rho.weight


def correlation(model: Model, rho: Ensemble, settings: SettingsPair, budget: Optional[IntegrationBudget] = None) -> Estimate:
    """Mean of sigma_A * sigma_B under ``rho``."""

    def f(pts):
        return model.outcomes(Wing.A, settings, pts) * model.outcomes(Wing.B, settings, pts)

    return integrate(f, model.space, _weight(model, rho), _budget(budget), _breakpoints(model, rho, [settings]))


def marginal(model: Model, rho: Ensemble, settings: SettingsPair, wing: Wing, budget: Optional[IntegrationBudget] = None) -> Estimate:
    """Probability that the outcome at ``wing`` is +1."""

    def f(pts):
        return (model.outcomes(wing, settings, pts) == 1).astype(float)

    return integrate(f, model.space, _weight(model, rho), _budget(budget), _breakpoints(model, rho, [settings]))


@dataclass(frozen=True)
class TransitionReport:
    wing: Wing
    settings: SettingsPair
    shift: Shift
    nu_plus_minus: Estimate
    nu_minus_plus: Estimate
    degree: Estimate
    signal: Estimate
    bits_per_pair: Optional[Estimate] = None

    def to_dict(self) -> dict:
        out = {
            "wing": self.wing.value,
            "theta_a": self.settings.theta_a.radians,
            "theta_b": self.settings.theta_b.radians,
            "shift_wing": self.shift.wing.value,
            "shift_angle": self.shift.new_angle.radians,
            "nu_plus_minus": self.nu_plus_minus.to_dict(),
            "nu_minus_plus": self.nu_minus_plus.to_dict(),
            "degree": self.degree.to_dict(),
            "signal": self.signal.to_dict(),
        }
        if self.bits_per_pair is not None:
            out["bits_per_pair"] = self.bits_per_pair.to_dict()
        return out


def _check_shift(wing: Wing, shift: Shift) -> Wing:
    wing = Wing(wing)
    if shift.wing is wing:
        raise UsageError(f"shift at wing {wing.value} cannot signal to wing {wing.value}; shift the distant wing")
    return wing


def _flip_columns(model: Model, wing: Wing, settings: SettingsPair, shift: Shift):
    shifted = settings.apply(shift)

    def f(pts):
        old = model.outcomes(wing, settings, pts)
        new = model.outcomes(wing, shifted, pts)
        pm = ((old == 1) & (new == -1)).astype(float)
        mp = ((old == -1) & (new == 1)).astype(float)
        # columns: nu(+,-), nu(-,+), degree, net change of P(+1)
        return np.stack([pm, mp, pm + mp, mp - pm], axis=1)

    return f, shifted


def transition_fractions(
    model: Model,
    rho: Ensemble,
    wing: Wing,
    settings: SettingsPair,
    shift: Shift,
    budget: Optional[IntegrationBudget] = None,
) -> TransitionReport:
    wing = _check_shift(wing, shift)
    f, shifted = _flip_columns(model, wing, settings, shift)
    res = integrate_many(f, model.space, _weight(model, rho), _budget(budget), _breakpoints(model, rho, [settings, shifted]))
    degree = res[2]
    return TransitionReport(
        wing=wing,
        settings=settings,
        shift=shift,
        nu_plus_minus=res[0],
        nu_minus_plus=res[1],
        degree=degree,
        signal=res[3].absolute(),
        bits_per_pair=degree if rho.is_equilibrium else None,
    )


def signal(
    model: Model,
    rho: Ensemble,
    wing: Wing,
    settings: SettingsPair,
    shift: Shift,
    budget: Optional[IntegrationBudget] = None,
) -> Estimate:
    """``|P(+1 after shift) - P(+1 before)|`` at ``wing`` under ``rho``, on common draws."""
    wing = _check_shift(wing, shift)
    shifted = settings.apply(shift)

    def f(pts):
        return (model.outcomes(wing, shifted, pts) == 1).astype(float) - (model.outcomes(wing, settings, pts) == 1)

    est = integrate(f, model.space, _weight(model, rho), _budget(budget), _breakpoints(model, rho, [settings, shifted]))
    return est.absolute()


def detailed_balance_residual(
    model: Model,
    wing: Wing,
    settings: SettingsPair,
    shift: Shift,
    budget: Optional[IntegrationBudget] = None,
) -> Estimate:
    """Signed ``nu_eq(+,-) - nu_eq(-,+)``, always under the equilibrium ensemble."""
    wing = _check_shift(wing, shift)
    f, shifted = _flip_columns(model, wing, settings, shift)
    res = integrate_many(f, model.space, None, _budget(budget), model.breakpoints_for([settings, shifted]))
    return res[3].scaled(-1.0)


def _degree(model: Model, wing: Wing, settings: SettingsPair, shifted: SettingsPair, budget) -> Estimate:
    def f(pts):
        return 0.5 * np.abs(model.outcomes(wing, shifted, pts).astype(float) - model.outcomes(wing, settings, pts))

    return integrate(f, model.space, None, _budget(budget), model.breakpoints_for([settings, shifted]))


def degree_alpha(model: Model, theta_a, theta_b, theta_b_prime, budget: Optional[IntegrationBudget] = None) -> Estimate:
    """Equilibrium fraction of outcomes at A that change when B moves from theta_b to theta_b_prime."""
    return _degree(model, Wing.A, SettingsPair(theta_a, theta_b), SettingsPair(theta_a, theta_b_prime), budget)


def degree_beta(model: Model, theta_a, theta_b, theta_a_prime, budget: Optional[IntegrationBudget] = None) -> Estimate:
    """Equilibrium fraction of outcomes at B that change when A moves from theta_a to theta_a_prime."""
    return _degree(model, Wing.B, SettingsPair(theta_a, theta_b), SettingsPair(theta_a_prime, theta_b), budget)


def settings_grid(points_per_angle: int) -> np.ndarray:
    if points_per_angle < 2:
        raise UsageError("the settings grid needs at least 2 points per angle")
    return TWO_PI * np.arange(points_per_angle) / points_per_angle


@dataclass(frozen=True)
class NonlocalityGrid:
    """Degrees of nonlocality over a uniform grid of angles.

    ``alpha[i, j, k]`` is alpha(g_i, g_j, g_k) and ``beta[i, j, k]`` is
    beta(g_i, g_j, g_k) with ``g = angles``; standard errors alongside.
    """

    angles: np.ndarray
    alpha: np.ndarray
    alpha_se: np.ndarray
    beta: np.ndarray
    beta_se: np.ndarray
    alpha_mean: Estimate
    beta_mean: Estimate
    mean: Estimate

    def total(self, i: int, j: int, ip: int, jp: int) -> Estimate:
        """alpha + beta at theta_a = g_i, theta_b = g_j, theta_a' = g_ip, theta_b' = g_jp.

        The standard error is the sum of the two (an upper bound, since both
        come from one sample stream).
        """
        value = self.alpha[i, j, jp] + self.beta[i, j, ip]
        se = self.alpha_se[i, j, jp] + self.beta_se[i, j, ip]
        return Estimate(float(value), float(se), self.mean.method, self.mean.samples)

    def totals(self) -> np.ndarray:
        """alpha + beta on the full grid, indexed ``[i, j, ip, jp]``."""
        return self.alpha[:, :, None, :] + self.beta[:, :, :, None]


def nonlocality_grid(model: Model, grid_points_per_angle: int = 8, budget: Optional[IntegrationBudget] = None) -> NonlocalityGrid:
    g = settings_grid(grid_points_per_angle)
    n = len(g)
    pairs = [SettingsPair(a, b) for a in g for b in g]

    def f(pts):
        sa = np.stack([model.outcomes(Wing.A, s, pts) for s in pairs], axis=1).reshape(len(pts), n, n)
        sb = np.stack([model.outcomes(Wing.B, s, pts) for s in pairs], axis=1).reshape(len(pts), n, n)
        # alpha cells: A's outcome at (i, j) vs (i, k); beta cells: B's outcome at (i, j) vs (k, j)
        fa = (sa[:, :, :, None] != sa[:, :, None, :]).reshape(len(pts), -1)
        fb = (sb[:, :, :, None] != np.swapaxes(sb, 1, 2)[:, None, :, :]).reshape(len(pts), -1)
        ma, mb = fa.mean(axis=1), fb.mean(axis=1)
        return np.concatenate([fa, fb, np.stack([ma, mb, ma + mb], axis=1)], axis=1).astype(float)

    res = integrate_many(f, model.space, None, _budget(budget), model.breakpoints_for(pairs))
    m = n**3
    return NonlocalityGrid(
        angles=g,
        alpha=res.values[:m].reshape(n, n, n),
        alpha_se=res.std_errors[:m].reshape(n, n, n),
        beta=res.values[m : 2 * m].reshape(n, n, n),
        beta_se=res.std_errors[m : 2 * m].reshape(n, n, n),
        alpha_mean=res[2 * m],
        beta_mean=res[2 * m + 1],
        mean=res[2 * m + 2],
    )


@dataclass(frozen=True)
class AverageNonlocality:
    mean: Estimate
    maximum: Estimate
    argmax: tuple[float, float, float, float]  # theta_a, theta_b, theta_a', theta_b'

    def to_dict(self) -> dict:
        return {"mean": self.mean.to_dict(), "maximum": self.maximum.to_dict(), "argmax": list(self.argmax)}


def average_nonlocality(model: Model, grid_points_per_angle: int = 8, budget: Optional[IntegrationBudget] = None) -> AverageNonlocality:
    """Mean of alpha + beta over the uniform product grid of all four angles, plus the largest cell."""
    grid = nonlocality_grid(model, grid_points_per_angle, budget)
    tot = grid.totals()
    i, j, ip, jp = np.unravel_index(int(np.argmax(tot)), tot.shape)
    g = grid.angles
    return AverageNonlocality(grid.mean, grid.total(i, j, ip, jp), (float(g[i]), float(g[j]), float(g[ip]), float(g[jp])))


def _chsh_coeffs():
    return (1.0, -1.0, 1.0, 1.0)


def chsh(model: Model, rho: Ensemble, a, a_prime, b, b_prime, budget: Optional[IntegrationBudget] = None) -> Estimate:
    """``|E(a,b) - E(a,b') + E(a',b) + E(a',b')|`` from one sample stream."""
    pairs = [SettingsPair(a, b), SettingsPair(a, b_prime), SettingsPair(a_prime, b), SettingsPair(a_prime, b_prime)]
    c = np.asarray(_chsh_coeffs())

    def f(pts):
        prods = np.stack([model.outcomes(Wing.A, s, pts) * model.outcomes(Wing.B, s, pts) for s in pairs], axis=1)
        return prods @ c

    est = integrate(f, model.space, _weight(model, rho), _budget(budget), _breakpoints(model, rho, pairs))
    return est.absolute()


@dataclass(frozen=True)
class ChshGrid:
    angles: np.ndarray
    values: np.ndarray  # |S| indexed [a, a', b, b']
    std_errors: np.ndarray
    method: Method
    samples: int

    def max(self) -> tuple[Estimate, tuple[float, float, float, float]]:
        idx = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        est = Estimate(float(self.values[idx]), float(self.std_errors[idx]), self.method, self.samples)
        return est, tuple(float(self.angles[k]) for k in idx)


def chsh_grid(model: Model, rho: Ensemble, grid_points_per_angle: int = 8, budget: Optional[IntegrationBudget] = None) -> ChshGrid:
    """|S| on every (a, a', b, b') of the uniform grid, from one set of correlation estimates and their covariance."""
    g = settings_grid(grid_points_per_angle)
    n = len(g)
    pairs = [SettingsPair(x, y) for x in g for y in g]

    def f(pts):
        return np.stack([model.outcomes(Wing.A, s, pts) * model.outcomes(Wing.B, s, pts) for s in pairs], axis=1)

    res = integrate_many(f, model.space, _weight(model, rho), _budget(budget), _breakpoints(model, rho, pairs), covariance=True)
    values = np.empty((n, n, n, n))
    ses = np.empty((n, n, n, n))
    cov = res.covariance
    c = _chsh_coeffs()
    for ia, iap, ib, ibp in itertools.product(range(n), repeat=4):
        idx = [ia * n + ib, ia * n + ibp, iap * n + ib, iap * n + ibp]
        coeffs = np.zeros(n * n)
        for k, w in zip(idx, c):
            coeffs[k] += w
        values[ia, iap, ib, ibp] = abs(coeffs @ res.values)
        ses[ia, iap, ib, ibp] = math.sqrt(max(coeffs @ cov @ coeffs, 0.0))
    return ChshGrid(g, values, ses, res.method, res.samples)


@dataclass(frozen=True)
class CellCheck:
    theta_a: float
    theta_b: float
    correlation: Estimate
    expected_correlation: float
    marginal_a: Estimate
    marginal_b: Estimate
    passed: bool

    @property
    def deviation(self) -> float:
        return max(
            abs(self.correlation.value - self.expected_correlation),
            abs(self.marginal_a.value - 0.5),
            abs(self.marginal_b.value - 0.5),
        )


@dataclass(frozen=True)
class EquilibriumReport:
    model: str
    cells: tuple[CellCheck, ...]
    tolerance_sigma: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells)

    @property
    def worst(self) -> CellCheck:
        return max(self.cells, key=lambda c: c.deviation)

    @property
    def worst_deviation(self) -> float:
        return self.worst.deviation


def _tolerance(est: Estimate, sigma: float) -> float:
    if est.method is Method.MONTE_CARLO:
        return max(sigma * est.std_error, EXACT_TOL)
    return EXACT_TOL


def verify_equilibrium(
    model: Model,
    grid_points_per_angle: int = 8,
    tolerance_sigma: float = 3.0,
    budget: Optional[IntegrationBudget] = None,
) -> EquilibriumReport:
    """Check singlet statistics (E = -cos(delta), marginals 1/2) on every cell of a settings grid."""
    g = settings_grid(grid_points_per_angle)
    pairs = [SettingsPair(a, b) for a in g for b in g]

    def f(pts):
        cols = []
        for s in pairs:
            sa = model.outcomes(Wing.A, s, pts)
            sb = model.outcomes(Wing.B, s, pts)
            cols += [sa * sb, sa == 1, sb == 1]
        return np.stack(cols, axis=1).astype(float)

    res = integrate_many(f, model.space, None, _budget(budget), model.breakpoints_for(pairs))
    cells = []
    for k, s in enumerate(pairs):
        e, ma, mb = res[3 * k], res[3 * k + 1], res[3 * k + 2]
        expected = -math.cos(s.theta_a.radians - s.theta_b.radians)
        ok = (
            abs(e.value - expected) <= _tolerance(e, tolerance_sigma)
            and abs(ma.value - 0.5) <= _tolerance(ma, tolerance_sigma)
            and abs(mb.value - 0.5) <= _tolerance(mb, tolerance_sigma)
        )
        cells.append(CellCheck(s.theta_a.radians, s.theta_b.radians, e, expected, ma, mb, ok))
    return EquilibriumReport(model.name, tuple(cells), tolerance_sigma)


def equilibrium_of(model: Model) -> Ensemble:
    return equilibrium(model.space)

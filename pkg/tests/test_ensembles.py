import math

import numpy as np
import pytest

from conftest import random_table, table_mean
from nonlocality_lab.analysis import marginal, signal
from nonlocality_lab.core import DomainError, LambdaSpace, Points, SettingsPair, Shift, Wing
from nonlocality_lab.ensembles import (
    ZeroMassError,
    ZeroMeasureTransitionSetError,
    branch_indicator,
    concentrate_on_transitions,
    equilibrium,
    linear_in_u,
    mixture,
    tilt,
)
from nonlocality_lab.models import finite_table_model
from nonlocality_lab.numerics import IntegrationBudget, integrate

QUAD = IntegrationBudget("quadrature")
BASE = SettingsPair(0, 0)
SHIFT_B = Shift(Wing.B, math.pi / 2)


def _weights(ens, n=1000, seed=0):
    rng = np.random.default_rng(seed)
    pts = Points(rng.integers(ens.space.branch_count, size=n), rng.random((n, ens.space.dim)))
    return pts, ens.weight(pts)


def test_equilibrium_normalized(two_way):
    eq = equilibrium(two_way.space)
    assert integrate(lambda p: np.ones(len(p)), eq.space, eq.weight, QUAD).value == pytest.approx(1, abs=1e-15)
    assert eq.weight_bound == 1 and eq.label == "equilibrium"


def test_tilt_identity_and_constant(two_way):
    eq = equilibrium(two_way.space)
    for c in (1.0, 2.0):
        t = tilt(eq, lambda p, c=c: np.full(len(p), c), c)
        pts, w = _weights(t)
        assert np.allclose(w, 1.0, atol=1e-12)


def test_tilt_branch_indicator(one_way):
    eq = equilibrium(one_way.space)
    t = tilt(eq, branch_indicator(one_way.space, [0]), 1.0)
    assert t.weight_bound == pytest.approx(2.0)
    assert marginal(one_way, t, BASE, Wing.A, QUAD).value == pytest.approx(1.0, abs=1e-12)


def test_tilt_by_u_normalizer():
    space = LambdaSpace((1.0,), 1)
    t = tilt(equilibrium(space), lambda p: p.u, 1.0, budget=QUAD)
    # Z = 1/2, so the weight is 2u
    pts, w = _weights(t)
    assert np.allclose(w, 2 * pts.u)
    assert t.weight_bound == pytest.approx(2.0)


def test_tilt_errors(one_way):
    eq = equilibrium(one_way.space)
    with pytest.raises(ZeroMassError):
        tilt(eq, lambda p: np.zeros(len(p)), 1.0)
    with pytest.raises(ValueError):
        tilt(eq, lambda p: np.full(len(p), 3.0), 2.0)
    with pytest.raises(ValueError):
        tilt(eq, lambda p: np.ones(len(p)), math.inf)


def test_concentrate_two_way_has_eighth_measure(two_way):
    c = concentrate_on_transitions(two_way, Wing.A, BASE, SHIFT_B, "plus_to_minus")
    assert c.weight_bound == pytest.approx(8.0, abs=1e-9)
    assert integrate(lambda p: np.ones(len(p)), c.space, c.weight, QUAD, c.breakpoints).value == pytest.approx(1, abs=1e-12)
    assert marginal(two_way, c, BASE, Wing.A, QUAD).value == pytest.approx(1.0, abs=1e-12)
    assert marginal(two_way, c, BASE.apply(SHIFT_B), Wing.A, QUAD).value == pytest.approx(0.0, abs=1e-12)
    mc = IntegrationBudget(samples=200_000, seed=4)
    assert marginal(two_way, c, BASE, Wing.A, mc).within(1.0, 3)
    assert marginal(two_way, c, BASE.apply(SHIFT_B), Wing.A, mc).within(0.0, 3)


def test_concentrate_minus_to_plus(two_way):
    c = concentrate_on_transitions(two_way, Wing.A, BASE, SHIFT_B, "minus_to_plus")
    assert marginal(two_way, c, BASE, Wing.A, QUAD).value == pytest.approx(0.0, abs=1e-12)
    assert marginal(two_way, c, BASE.apply(SHIFT_B), Wing.A, QUAD).value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("shift", [SHIFT_B, Shift(Wing.B, 2.0), Shift(Wing.B, math.pi)])
def test_concentrate_one_way_at_a_is_empty(one_way, shift):
    with pytest.raises(ZeroMeasureTransitionSetError):
        concentrate_on_transitions(one_way, Wing.A, BASE, shift, "plus_to_minus")


def test_concentrate_rejects_local_shift(two_way):
    with pytest.raises(ValueError):
        concentrate_on_transitions(two_way, Wing.B, BASE, SHIFT_B, "plus_to_minus")


def test_mixture_endpoints_and_errors(two_way, one_way):
    eq = equilibrium(two_way.space)
    c = concentrate_on_transitions(two_way, Wing.A, BASE, SHIFT_B, "plus_to_minus")
    assert mixture(eq, c, 0.0) is eq
    assert mixture(eq, c, 1.0) is c
    with pytest.raises(DomainError):
        mixture(eq, equilibrium(one_way.space), 0.5)
    with pytest.raises(ValueError):
        mixture(eq, c, 1.5)


def test_mixture_signal_is_linear(two_way):
    eq = equilibrium(two_way.space)
    c = concentrate_on_transitions(two_way, Wing.A, BASE, SHIFT_B, "plus_to_minus")
    for eps in (0.1, 0.2, 0.7):
        s = signal(two_way, mixture(eq, c, eps), Wing.A, BASE, SHIFT_B, QUAD)
        assert s.value == pytest.approx(eps, abs=1e-12)


def test_linear_family_normalized():
    space = LambdaSpace((1.0,), 1)
    t = tilt(equilibrium(space), linear_in_u(0.8), 1.8)
    assert integrate(lambda p: np.ones(len(p)), space, t.weight, QUAD).value == pytest.approx(1, abs=1e-3)
    with pytest.raises(ValueError):
        linear_in_u(1.5)


def test_reweighting_matches_enumeration_on_tables():
    rng = np.random.default_rng(8)
    for _ in range(5):
        table = random_table(rng, 3, 2, 40)
        m = finite_table_model(table)
        branches = [int(b) for b in rng.choice(40, size=7, replace=False)]
        t = tilt(equilibrium(m.space), branch_indicator(m.space, branches), 1.0)
        z = table_mean(table, lambda k: 1.0 if k in branches else 0.0)
        h = rng.normal(size=40)
        via_weights = integrate(lambda p: h[p.branch], m.space, t.weight, IntegrationBudget()).value
        oracle = table_mean(table, lambda k: (h[k] / z) if k in branches else 0.0)
        assert via_weights == pytest.approx(oracle, abs=1e-12)

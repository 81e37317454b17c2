import math

import numpy as np
import pytest

from nonlocality_lab.core import LambdaSpace
from nonlocality_lab.numerics import (
    CHUNK_SIZE,
    IntegrationBudget,
    Method,
    MethodError,
    allocate,
    integrate,
    integrate_many,
    make_stream,
)

UNIT = LambdaSpace((1.0,), dim=1)


def u(pts):
    return pts.u


def test_constant_integrand_is_exactly_one():
    for method in ("quadrature", "monte_carlo"):
        est = integrate(lambda p: np.ones(len(p)), UNIT, None, IntegrationBudget(method, samples=1000))
        assert est.value == pytest.approx(1.0, abs=1e-15)
        assert est.std_error == pytest.approx(0.0, abs=1e-15)


def test_mean_of_u_seed_42():
    est = integrate(u, UNIT, None, IntegrationBudget("monte_carlo", samples=10**6, seed=42))
    # sqrt(1/12) / 1000
    assert est.std_error == pytest.approx(math.sqrt(1 / 12) / 1000, rel=0.01)
    assert est.within(0.5, 3)


def test_stderr_halves_when_samples_quadruple():
    ratios = []
    for seed in range(5):
        a = integrate(u, UNIT, None, IntegrationBudget("monte_carlo", samples=50_000, seed=seed))
        b = integrate(u, UNIT, None, IntegrationBudget("monte_carlo", samples=200_000, seed=seed))
        ratios.append(b.std_error / a.std_error)
    assert np.mean(ratios) == pytest.approx(0.5, rel=0.1)


@pytest.mark.parametrize("power, exact", [(0, 1.0), (1, 0.5), (2, 1 / 3)])
def test_known_integrals_coverage(power, exact):
    misses = 0
    for seed in range(100):
        est = integrate(lambda p: p.u**power, UNIT, None, IntegrationBudget("monte_carlo", samples=20_000, seed=seed))
        misses += not est.within(exact, 3)
    assert misses <= 1


def test_branch_allocation_deterministic():
    assert allocate(1_000_000, (0.5, 0.5)) == [500_000, 500_000]
    assert allocate(10, (0.25, 0.25, 0.25, 0.25)) == [3, 3, 2, 2]
    assert sum(allocate(997, (0.1, 0.2, 0.3, 0.4))) == 997


def test_stratification_removes_branch_variance():
    space = LambdaSpace((0.5, 0.5), dim=1)
    est = integrate(lambda p: p.branch.astype(float), space, None, IntegrationBudget("monte_carlo", samples=1000))
    assert est.value == 0.5 and est.std_error == 0.0


def test_stream_determinism_and_separation():
    a = make_stream(7, 3).random(1000)
    b = make_stream(7, 3).random(1000)
    c = make_stream(7, 4).random(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, make_stream(8, 3).random(1000))


def test_stream_is_counter_based():
    # the tail of a stream is reproducible without regenerating the head
    g = make_stream(11, 2)
    full = g.random(2000)
    g2 = make_stream(11, 2)
    g2.bit_generator.advance(250)  # one counter step yields four 64-bit words
    assert np.array_equal(full[1000:], g2.random(1000))


def test_worker_count_does_not_change_result():
    space = LambdaSpace((0.3, 0.7), dim=2)

    def f(p):
        return np.stack([p.coords[:, 0] * p.coords[:, 1], np.sin(7 * p.coords[:, 0])], axis=1)

    n = 5 * CHUNK_SIZE + 123
    one = integrate_many(f, space, None, IntegrationBudget("monte_carlo", samples=n, seed=3, workers=1))
    eight = integrate_many(f, space, None, IntegrationBudget("monte_carlo", samples=n, seed=3, workers=8))
    assert np.array_equal(one.values, eight.values)
    assert np.array_equal(one.std_errors, eight.std_errors)


def test_enumeration_and_method_errors():
    space = LambdaSpace((0.2, 0.3, 0.5))
    est = integrate(lambda p: p.branch.astype(float), space, None, IntegrationBudget())
    assert est.method is Method.EXACT
    assert est.value == pytest.approx(0.3 * 1 + 0.5 * 2, abs=1e-15) and est.std_error == 0
    with pytest.raises(MethodError):
        integrate(u, UNIT, None, IntegrationBudget("exact_enumeration"))


def test_quadrature_exact_for_steps_with_breakpoints():
    c = 0.3141592653589793
    step = lambda p: (p.u < c).astype(float)
    exact = integrate(step, UNIT, None, IntegrationBudget("quadrature", quadrature_points=16), breakpoints=[c])
    assert exact.value == pytest.approx(c, abs=1e-15)
    plain = integrate(step, UNIT, None, IntegrationBudget("quadrature", quadrature_points=16))
    assert abs(plain.value - c) > 1e-3


def test_weight_and_base_density_enter_the_integral():
    # base density 2u makes the mean of u equal to 2/3
    space = LambdaSpace((1.0,), 1, base_density=lambda b, x: 2.0 * x[:, 0])
    est = integrate(u, space, None, IntegrationBudget("quadrature"))
    assert est.value == pytest.approx(2 / 3, abs=1e-7)
    est = integrate(u, UNIT, lambda p: 2.0 * p.u, IntegrationBudget("monte_carlo", samples=200_000, seed=1))
    assert est.within(2 / 3, 3)


def test_covariance_combination_matches_direct_column():
    def f(p):
        x = p.u
        return np.stack([x, x * x, x - x * x], axis=1)

    res = integrate_many(f, UNIT, None, IntegrationBudget("monte_carlo", samples=30_000, seed=2), covariance=True)
    combo = res.combine([1.0, -1.0, 0.0])
    assert combo.value == pytest.approx(res[2].value, abs=1e-12)
    assert combo.std_error == pytest.approx(res[2].std_error, rel=1e-9)


@pytest.mark.parametrize("kwargs", [{"samples": 0}, {"seed": -1}, {"seed": 2**64}, {"quadrature_points": 0}])
def test_budget_validation(kwargs):
    with pytest.raises(ValueError):
        IntegrationBudget(**kwargs)


def test_too_few_samples_per_branch():
    space = LambdaSpace((0.5, 0.5), dim=1)
    with pytest.raises(ValueError):
        integrate(u, space, None, IntegrationBudget("monte_carlo", samples=3))

import math

import numpy as np
import pytest

from nonlocality_lab.models import FiniteTable, discretize, local_hemisphere, one_way_singlet, two_way_singlet

QUARTER_GRID = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]


def anti_prob(delta):
    """Closed form cos^2(delta/2): probability of opposite outcomes in the singlet models."""
    return math.cos(delta / 2) ** 2


def alpha_two_way(ta, tb, tbp):
    return 0.5 * abs(anti_prob(ta - tb) - anti_prob(ta - tbp))


def beta_two_way(ta, tb, tap):
    return 0.5 * abs(anti_prob(ta - tb) - anti_prob(tap - tb))


def beta_one_way(ta, tb, tap):
    return abs(anti_prob(ta - tb) - anti_prob(tap - tb))


def sawtooth(delta):
    d = math.remainder(delta, 2 * math.pi)
    return -1 + 2 * abs(d) / math.pi


# Brute-force oracles over FiniteTable arrays; grid indices stand in for angles.


def table_mean(table: FiniteTable, fn):
    return math.fsum(w * fn(k) for k, w in enumerate(table.weights))


def oracle_correlation(table, i, j):
    return table_mean(table, lambda k: int(table.table_a[i, j, k]) * int(table.table_b[i, j, k]))


def oracle_marginal(table, i, j, wing):
    t = table.table_a if wing == "A" else table.table_b
    return table_mean(table, lambda k: 1.0 if t[i, j, k] == 1 else 0.0)


def oracle_transitions(table, wing, i, j, i2, j2):
    t = table.table_a if wing == "A" else table.table_b
    pm = table_mean(table, lambda k: 1.0 if (t[i, j, k] == 1 and t[i2, j2, k] == -1) else 0.0)
    mp = table_mean(table, lambda k: 1.0 if (t[i, j, k] == -1 and t[i2, j2, k] == 1) else 0.0)
    return pm, mp


def random_table(rng, na, nb, nl):
    w = rng.random(nl) + 0.01
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    ga = tuple(2 * math.pi * np.arange(na) / na)
    gb = tuple(2 * math.pi * (np.arange(nb) + 0.25) / nb)
    ta = rng.choice(np.array([-1, 1], dtype=np.int8), size=(na, nb, nl))
    tb = rng.choice(np.array([-1, 1], dtype=np.int8), size=(na, nb, nl))
    return FiniteTable(ga, gb, tuple(w), ta, tb)


@pytest.fixture
def local():
    return local_hemisphere()


@pytest.fixture
def one_way():
    return one_way_singlet()


@pytest.fixture
def two_way():
    return two_way_singlet()


@pytest.fixture
def quantum_table():
    """Two-way singlet model discretized on quarter-turn settings; reproduces singlet statistics exactly."""
    return discretize(two_way_singlet(), QUARTER_GRID, QUARTER_GRID, 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)

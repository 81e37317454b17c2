"""Builtin hidden-variables models.

``local_hemisphere``
    Local control: outcomes never read the distant setting.  Correlation is
    the sawtooth ``-1 + 2|delta|/pi``, so it cannot reproduce the singlet.
``one_way_singlet``
    Reproduces ``E = -cos(theta_a - theta_b)``.  Outcome at A is local, the
    outcome at B depends on both settings.
``two_way_singlet``
    Equal mixture of the one-way model and its mirror image, so both wings
    carry transition sets.
``finite_table_model``
    Arbitrary finite model given as lookup tables; d = 0 so every quantity
    can be computed by exact enumeration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import TWO_PI, WEIGHT_SUM_TOL, Angle, LambdaSpace, Model, Points, SettingsPair, as_angle


def _same_sign_threshold(delta: float) -> float:
    # probability of perfectly anticorrelated outcomes at relative angle delta
    return math.cos(delta / 2.0) ** 2


def _hemisphere(phi: np.ndarray, theta: float) -> np.ndarray:
    return np.where(np.cos(phi - theta) >= 0.0, 1, -1).astype(np.int8)


def local_hemisphere() -> Model:
    space = LambdaSpace((1.0,), dim=1)

    def outcome_a(ta, tb, pts: Points):
        return _hemisphere(TWO_PI * pts.u, ta)

    def outcome_b(ta, tb, pts: Points):
        return -_hemisphere(TWO_PI * pts.u, tb)

    def breakpoints(settings: Sequence[SettingsPair]):
        out = set()
        for s in settings:
            for theta in s.radians:
                base = theta / TWO_PI
                out.add((base + 0.25) % 1.0)
                out.add((base + 0.75) % 1.0)
        return sorted(out)

    return Model("local", space, outcome_a, outcome_b, breakpoints)


def _sign_of_branch(pts: Points, plus_branches) -> np.ndarray:
    return np.where(np.isin(pts.branch, plus_branches), 1, -1).astype(np.int8)


def _singlet_breakpoints(settings: Sequence[SettingsPair]):
    return sorted({_same_sign_threshold(s.theta_a.radians - s.theta_b.radians) for s in settings})


def one_way_singlet() -> Model:
    """Branch 0 is s = +1, branch 1 is s = -1; u is uniform on [0, 1)."""
    space = LambdaSpace((0.5, 0.5), dim=1)

    def outcome_a(ta, tb, pts):
        return _sign_of_branch(pts, [0])

    def outcome_b(ta, tb, pts):
        s = _sign_of_branch(pts, [0])
        anti = pts.u < _same_sign_threshold(ta - tb)
        return np.where(anti, -s, s).astype(np.int8)

    return Model("one-way", space, outcome_a, outcome_b, _singlet_breakpoints)


def two_way_singlet() -> Model:
    """Four branches ``2*b + (0 if s = +1 else 1)``.

    b = 0: A reports s, B reports -s when u is below cos^2(delta/2), else s.
    b = 1: the same with the roles of A and B exchanged.
    """
    space = LambdaSpace((0.25, 0.25, 0.25, 0.25), dim=1)

    def flipping(ta, tb, pts, local_branch):
        s = _sign_of_branch(pts, [0, 2])
        anti = pts.u < _same_sign_threshold(ta - tb)
        dependent = np.where(anti, -s, s)
        return np.where(pts.branch // 2 == local_branch, s, dependent).astype(np.int8)

    def outcome_a(ta, tb, pts):
        return flipping(ta, tb, pts, 0)

    def outcome_b(ta, tb, pts):
        return flipping(ta, tb, pts, 1)

    return Model("two-way", space, outcome_a, outcome_b, _singlet_breakpoints)


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FiniteTable:
    grid_a: tuple[Angle, ...]
    grid_b: tuple[Angle, ...]
    weights: tuple[float, ...]
    table_a: np.ndarray  # int8, shape (len(grid_a), len(grid_b), lambda_count)
    table_b: np.ndarray

    def __post_init__(self):
        ga = tuple(as_angle(x) for x in self.grid_a)
        gb = tuple(as_angle(x) for x in self.grid_b)
        object.__setattr__(self, "grid_a", ga)
        object.__setattr__(self, "grid_b", gb)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not ga or not gb:
            raise TableFormatError("settings grids must be non-empty")
        if not self.weights:
            raise TableFormatError("at least one hidden-variable value is required")
        for name, grid in (("grid_a", ga), ("grid_b", gb)):
            if len(set(grid)) != len(grid):
                raise TableFormatError(f"{name} has duplicate angles after reduction mod 2*pi")
        if any(not math.isfinite(w) or w < 0 for w in self.weights):
            raise TableFormatError("weights must be finite and non-negative")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
            raise TableFormatError(f"weights sum to {math.fsum(self.weights)!r}, expected 1")
        shape = (len(ga), len(gb), len(self.weights))
        for name in ("table_a", "table_b"):
            t = np.asarray(getattr(self, name))
            if t.shape != shape:
                raise TableFormatError(f"{name} has shape {t.shape}, expected {shape}")
            if not np.all((t == 1) | (t == -1)):
                raise TableFormatError(f"{name} entries must be +1 or -1")
            t = t.astype(np.int8)
            t.flags.writeable = False
            object.__setattr__(self, name, t)

    @property
    def lambda_count(self) -> int:
        return len(self.weights)


def snap(grid: Sequence[Angle], theta: float) -> int:
    """Index of the grid angle nearest to ``theta`` on the circle; ties go to the smaller angle."""
    best = None
    for i, g in enumerate(grid):
        d = abs(g.radians - theta) % TWO_PI
        d = min(d, TWO_PI - d)
        key = (d, g.radians)
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


def finite_table_model(table: FiniteTable, name: str = "table") -> Model:
    space = LambdaSpace(table.weights, dim=0)

    def lookup(t):
        def outcome(ta, tb, pts):
            return t[snap(table.grid_a, ta), snap(table.grid_b, tb)][pts.branch]

        return outcome

    return Model(name, space, lookup(table.table_a), lookup(table.table_b))


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise TableFormatError(f"{path}: {msg}")


def _number_list(doc, key: str) -> list[float]:
    _require(key in doc, "$", f"missing field '{key}'")
    val = doc[key]
    _require(isinstance(val, list) and len(val) > 0, f"$.{key}", "expected a non-empty array")
    for i, x in enumerate(val):
        ok = isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)
        _require(ok, f"$.{key}[{i}]", f"expected a finite number, got {x!r}")
    return [float(x) for x in val]


def _outcome_table(doc, key: str, shape: tuple[int, int, int]) -> np.ndarray:
    _require(key in doc, "$", f"missing field '{key}'")
    out = np.empty(shape, dtype=np.int8)
    rows = doc[key]
    path = f"$.{key}"
    _require(isinstance(rows, list) and len(rows) == shape[0], path, f"expected an array of length {shape[0]}")
    for i, row in enumerate(rows):
        _require(isinstance(row, list) and len(row) == shape[1], f"{path}[{i}]", f"expected an array of length {shape[1]}")
        for j, cell in enumerate(row):
            p = f"{path}[{i}][{j}]"
            _require(isinstance(cell, list) and len(cell) == shape[2], p, f"expected an array of length {shape[2]}")
            for k, v in enumerate(cell):
                _require(v in (1, -1) and not isinstance(v, bool), f"{p}[{k}]", f"expected +1 or -1, got {v!r}")
                out[i, j, k] = v
    return out


def finite_table_from_dict(doc) -> FiniteTable:
    _require(isinstance(doc, dict), "$", "expected a JSON object")
    unknown = set(doc) - {"grid_a", "grid_b", "weights", "table_a", "table_b"}
    _require(not unknown, "$", f"unknown fields {sorted(unknown)}")
    grid_a = _number_list(doc, "grid_a")
    grid_b = _number_list(doc, "grid_b")
    weights = _number_list(doc, "weights")
    shape = (len(grid_a), len(grid_b), len(weights))
    table_a = _outcome_table(doc, "table_a", shape)
    table_b = _outcome_table(doc, "table_b", shape)
    return FiniteTable(tuple(grid_a), tuple(grid_b), tuple(weights), table_a, table_b)


def load_finite_table(path) -> FiniteTable:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TableFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return finite_table_from_dict(doc)
    except TableFormatError as exc:
        raise TableFormatError(f"{path}: {exc}") from None


def finite_table_to_dict(table: FiniteTable) -> dict:
    return {
        "grid_a": [a.radians for a in table.grid_a],
        "grid_b": [b.radians for b in table.grid_b],
        "weights": list(table.weights),
        "table_a": table.table_a.tolist(),
        "table_b": table.table_b.tolist(),
    }


def discretize(model: Model, grid_a: Sequence[float], grid_b: Sequence[float], lambda_per_branch: int) -> FiniteTable:
    """Finite-table version of a d <= 1 model, sampling u at cell midpoints.

    Each branch of ``model`` becomes ``lambda_per_branch`` table entries of equal
    weight.  Singlet models stay quantum-reproducing on grids whose relative
    angles put cos^2(delta/2) on a multiple of ``1/lambda_per_branch``.
    """
    space = model.space
    if space.dim > 1:
        raise ValueError("only d <= 1 models can be discretized")
    if space.dim == 0:
        lambda_per_branch = 1
    mids = (np.arange(lambda_per_branch) + 0.5) / lambda_per_branch
    branch = np.repeat(np.arange(space.branch_count), lambda_per_branch)
    coords = np.tile(mids, space.branch_count)[:, None] if space.dim else np.empty((len(branch), 0))
    pts = Points(branch, coords)
    weights = np.repeat(np.asarray(space.branch_weights) / lambda_per_branch, lambda_per_branch)
    weights = weights / weights.sum()
    shape = (len(grid_a), len(grid_b), len(branch))
    ta_arr = np.empty(shape, dtype=np.int8)
    tb_arr = np.empty(shape, dtype=np.int8)
    for i, a in enumerate(grid_a):
        for j, b in enumerate(grid_b):
            s = SettingsPair(a, b)
            ta_arr[i, j] = model.outcomes("A", s, pts)
            tb_arr[i, j] = model.outcomes("B", s, pts)
    return FiniteTable(tuple(grid_a), tuple(grid_b), tuple(weights), ta_arr, tb_arr)


BUILTIN_MODELS = {
    "local": local_hemisphere,
    "one-way": one_way_singlet,
    "two-way": two_way_singlet,
}


def model_by_name(name: str) -> Model:
    """Resolve ``local``, ``one-way``, ``two-way`` or ``table:<path.json>``."""
    if name.startswith("table:"):
        return finite_table_model(load_finite_table(name[len("table:"):]), name=name)
    try:
        return BUILTIN_MODELS[name]()
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)} or table:<path>") from None

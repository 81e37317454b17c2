"""Command-line driver.

Exit codes: 0 success / check passed, 1 check failed, 2 usage error, 3 I/O error.
Angles are radians.  Single-result commands print one JSON object per line
(or a one-row CSV with ``--format csv``); ``sweep`` writes an RFC-4180 CSV.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__
from . import analysis
from .core import Direction, DomainError, InvalidAngleError, SettingsPair, Shift, Wing
from .ensembles import (
    Ensemble,
    ZeroMassError,
    branch_indicator,
    concentrate_on_transitions,
    equilibrium,
    linear_in_u,
    mixture,
    tilt,
)
from .models import TableFormatError, model_by_name
from .numerics import Estimate, IntegrationBudget, Method, MethodError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class CliUsageError(Exception):
    pass


@dataclass
class RunRecord:
    command: str
    model: str
    ensemble_spec: str
    parameters: dict
    budget: dict
    result: dict
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: utc_timestamp())

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))


def utc_timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock so identical runs give identical bytes
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return now.strftime("%Y-%m-%dT%H:%M:%SZ")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out


def _emit(record: RunRecord, fmt: str, out) -> None:
    if fmt == "json":
        out.write(record.to_json() + "\n")
        return
    flat = _flatten(asdict(record))
    writer = csv.DictWriter(out, fieldnames=list(flat), lineterminator="\r\n")
    writer.writeheader()
    writer.writerow({k: _csv_value(v) for k, v in flat.items()})


def _csv_value(v):
    return repr(v) if isinstance(v, float) else v


# ---------------------------------------------------------------- arguments


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="local, one-way, two-way or table:<path.json>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=IntegrationBudget.samples)
    p.add_argument("--method", choices=[m.value for m in Method], default=Method.AUTO.value)
    p.add_argument("--quad-points", type=int, default=IntegrationBudget.quadrature_points)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=["json", "csv"], default="json")


def _add_settings(p: argparse.ArgumentParser, shift: bool) -> None:
    p.add_argument("--theta-a", type=float, default=0.0)
    p.add_argument("--theta-b", type=float, default=0.0)
    group = p.add_mutually_exclusive_group(required=shift)
    group.add_argument("--shift-a", type=float, help="new setting at A")
    group.add_argument("--shift-b", type=float, help="new setting at B")


def _add_ensemble(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--ensemble",
        default="equilibrium",
        help="equilibrium | concentrate:<wing>:<direction> | mixture:<eps>[:<wing>:<direction>] | JSON spec | @file.json",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocality-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check singlet statistics on a settings grid")
    _add_common(p)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--sigma", type=float, default=3.0)

    for name, help_ in (("correlation", "E(theta_a, theta_b)"), ("marginal", "P(outcome = +1) at one wing")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        _add_settings(p, shift=False)
        _add_ensemble(p)
        if name == "marginal":
            p.add_argument("--wing", choices=["A", "B"], default="A")

    for name, help_ in (("transition", "transition fractions for one distant shift"), ("signal", "change in one wing's marginal")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        _add_settings(p, shift=True)
        _add_ensemble(p)
        p.add_argument("--wing", choices=["A", "B"], default="A", help="observed wing")

    p = sub.add_parser("chsh", help="CHSH witness |S|")
    _add_common(p)
    _add_ensemble(p)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--a-prime", type=float, default=math.pi / 2)
    p.add_argument("--b", type=float, default=math.pi / 4)
    p.add_argument("--b-prime", type=float, default=3 * math.pi / 4)
    p.add_argument("--theta-a", type=float, default=0.0, help="base settings for concentrated ensembles")
    p.add_argument("--theta-b", type=float, default=0.0)
    p.add_argument("--shift-a", type=float)
    p.add_argument("--shift-b", type=float)
    p.add_argument("--wing", choices=["A", "B"], default="A")

    p = sub.add_parser("sweep", help="tabulate a quantity over a uniform settings grid (CSV)")
    _add_common(p)
    _add_ensemble(p)
    p.add_argument("--quantity", choices=["alpha", "beta", "alpha+beta", "chsh", "signal"], required=True)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--wing", choices=["A", "B"], default="A", help="observed wing for --quantity signal")
    p.add_argument("--output", help="CSV path (default: stdout)")

    p = sub.add_parser("average", help="grid average and maximum of alpha + beta")
    _add_common(p)
    p.add_argument("--grid", type=int, default=8)
    return parser


# ---------------------------------------------------------------- helpers


def _budget(args) -> IntegrationBudget:
    try:
        return IntegrationBudget(args.method, args.samples, args.quad_points, args.seed, args.workers)
    except ValueError as exc:
        raise CliUsageError(str(exc)) from None


def _budget_dict(b: IntegrationBudget) -> dict:
    return {"method": b.method.value, "samples": b.samples, "quadrature_points": b.quadrature_points, "seed": b.seed}


def _shift_of(args) -> Optional[Shift]:
    if getattr(args, "shift_a", None) is not None:
        return Shift(Wing.A, args.shift_a)
    if getattr(args, "shift_b", None) is not None:
        return Shift(Wing.B, args.shift_b)
    return None


def _load_json_spec(spec: str):
    text = Path(spec[1:]).read_text(encoding="utf-8") if spec.startswith("@") else spec
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliUsageError(f"ensemble spec: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def build_ensemble(spec, model, wing: Optional[Wing], settings: Optional[SettingsPair], shift: Optional[Shift]) -> Ensemble:
    """Turn a CLI ensemble spec (string or parsed JSON) into an Ensemble."""
    if isinstance(spec, str):
        spec = spec.strip()
        if spec.startswith("{") or spec.startswith("@"):
            return build_ensemble(_load_json_spec(spec), model, wing, settings, shift)
        parts = spec.split(":")
        if parts == ["equilibrium"]:
            doc = {"family": "equilibrium"}
        elif parts[0] == "concentrate" and len(parts) == 3:
            doc = {"family": "concentrate", "wing": parts[1], "direction": parts[2]}
        elif parts[0] == "mixture" and len(parts) in (2, 4):
            try:
                eps = float(parts[1])
            except ValueError:
                raise CliUsageError(f"bad mixture weight {parts[1]!r}") from None
            inner = {"family": "concentrate"}
            if len(parts) == 4:
                inner.update(wing=parts[2], direction=parts[3])
            doc = {"family": "mixture", "epsilon": eps, "of": inner}
        else:
            raise CliUsageError(f"unrecognized ensemble spec {spec!r}")
        return build_ensemble(doc, model, wing, settings, shift)

    if not isinstance(spec, dict) or "family" not in spec:
        raise CliUsageError("a JSON ensemble spec must be an object with a 'family' field")
    family = spec["family"]
    eq = equilibrium(model.space)
    if family == "equilibrium":
        return eq
    if family == "concentrate":
        if settings is None or shift is None:
            raise CliUsageError("concentrated ensembles need --theta-a/--theta-b and a --shift-a or --shift-b")
        target = Wing(spec.get("wing", (wing or shift.wing.other).value))
        direction = Direction(spec.get("direction", Direction.PLUS_TO_MINUS.value))
        return concentrate_on_transitions(model, target, settings, shift, direction)
    if family == "mixture":
        inner = build_ensemble(spec.get("of", {"family": "concentrate"}), model, wing, settings, shift)
        return mixture(eq, inner, float(spec["epsilon"]))
    if family == "branch":
        return tilt(eq, branch_indicator(model.space, spec["branches"]), 1.0, label=f"branch{spec['branches']}")
    if family == "linear":
        if model.space.dim < 1:
            raise CliUsageError("the linear family needs a continuous coordinate")
        slope = float(spec["slope"])
        return tilt(eq, linear_in_u(slope), 1.0 + abs(slope), label=f"linear({slope!r})")
    raise CliUsageError(f"unknown ensemble family {family!r}")


def _ensemble_text(args) -> str:
    return getattr(args, "ensemble", "equilibrium")


# ---------------------------------------------------------------- commands


def cmd_verify(args, model, budget, out) -> int:
    report = analysis.verify_equilibrium(model, args.grid, args.sigma, budget)
    if args.format == "csv":
        writer = csv.writer(out, lineterminator="\r\n")
        writer.writerow(["theta_a", "theta_b", "correlation", "correlation_se", "expected", "marginal_a", "marginal_b", "passed"])
        for c in report.cells:
            writer.writerow([repr(c.theta_a), repr(c.theta_b), repr(c.correlation.value), repr(c.correlation.std_error),
                             repr(c.expected_correlation), repr(c.marginal_a.value), repr(c.marginal_b.value), int(c.passed)])
    else:
        worst = report.worst
        result = {
            "passed": report.passed,
            "worst_deviation": report.worst_deviation,
            "worst_cell": [worst.theta_a, worst.theta_b],
            "failed_cells": sum(not c.passed for c in report.cells),
            "cells": [
                {
                    "theta_a": c.theta_a,
                    "theta_b": c.theta_b,
                    "correlation": c.correlation.to_dict(),
                    "expected": c.expected_correlation,
                    "marginal_a": c.marginal_a.to_dict(),
                    "marginal_b": c.marginal_b.to_dict(),
                    "passed": c.passed,
                }
                for c in report.cells
            ],
        }
        params = {"grid": args.grid, "sigma": args.sigma}
        _emit(RunRecord("verify", args.model, "equilibrium", params, _budget_dict(budget), result), "json", out)
    if not report.passed:
        print(f"verify: {model.name} fails; worst deviation {report.worst_deviation:.6g}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def _single(args, model, budget, out) -> int:
    settings = SettingsPair(args.theta_a, args.theta_b)
    shift = _shift_of(args)
    wing = Wing(args.wing) if hasattr(args, "wing") else None
    if shift is not None and wing is not None and shift.wing is wing and args.command in ("transition", "signal"):
        raise CliUsageError(f"--wing {wing.value} is the shifted wing; observe the other wing")
    rho = build_ensemble(args.ensemble, model, wing, settings, shift)
    params = {"theta_a": settings.theta_a.radians, "theta_b": settings.theta_b.radians}
    if shift is not None:
        params.update(shift_wing=shift.wing.value, shift_angle=shift.new_angle.radians)
    if wing is not None:
        params["wing"] = wing.value

    cmd = args.command
    if cmd == "correlation":
        result = analysis.correlation(model, rho, settings, budget).to_dict()
    elif cmd == "marginal":
        result = analysis.marginal(model, rho, settings, wing, budget).to_dict()
    elif cmd == "transition":
        result = analysis.transition_fractions(model, rho, wing, settings, shift, budget).to_dict()
    elif cmd == "signal":
        result = analysis.signal(model, rho, wing, settings, shift, budget).to_dict()
    else:  # chsh
        angles = {"a": args.a, "a_prime": args.a_prime, "b": args.b, "b_prime": args.b_prime}
        params.update(angles)
        result = analysis.chsh(model, rho, args.a, args.a_prime, args.b, args.b_prime, budget).to_dict()
    _emit(RunRecord(cmd, args.model, args.ensemble, params, _budget_dict(budget), result), args.format, out)
    return EXIT_OK


def _sweep_rows(args, model, budget):
    q = args.quantity
    n = args.grid
    if q in ("alpha", "beta", "alpha+beta"):
        if _ensemble_text(args) != "equilibrium":
            raise CliUsageError(f"{q} is an equilibrium quantity; drop --ensemble")
        grid = analysis.nonlocality_grid(model, n, budget)
        g = grid.angles
        if q in ("alpha", "beta"):
            vals, ses, mean = (grid.alpha, grid.alpha_se, grid.alpha_mean) if q == "alpha" else (grid.beta, grid.beta_se, grid.beta_mean)
            names = ["theta_a", "theta_b", "theta_b_prime" if q == "alpha" else "theta_a_prime"]
            rows = [([g[i], g[j], g[k]], vals[i, j, k], ses[i, j, k]) for i in range(n) for j in range(n) for k in range(n)]
            return names, rows, mean
        names = ["theta_a", "theta_b", "theta_a_prime", "theta_b_prime"]
        rows = []
        for i in range(n):
            for j in range(n):
                for ip in range(n):
                    for jp in range(n):
                        e = grid.total(i, j, ip, jp)
                        rows.append(([g[i], g[j], g[ip], g[jp]], e.value, e.std_error))
        return names, rows, grid.mean

    if q == "chsh":
        rho = build_ensemble(args.ensemble, model, None, None, None)
        cg = analysis.chsh_grid(model, rho, n, budget)
        g = cg.angles
        names = ["a", "a_prime", "b", "b_prime"]
        rows = []
        for ia in range(n):
            for iap in range(n):
                for ib in range(n):
                    for ibp in range(n):
                        rows.append(([g[ia], g[iap], g[ib], g[ibp]], cg.values[ia, iap, ib, ibp], cg.std_errors[ia, iap, ib, ibp]))
        return names, rows, None

    # signal: observed wing fixed, the other wing shifted
    wing = Wing(args.wing)
    g = analysis.settings_grid(n)
    names = ["theta_a", "theta_b", "theta_b_prime" if wing is Wing.A else "theta_a_prime"]
    rows = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                settings = SettingsPair(g[i], g[j])
                shift = Shift(wing.other, g[k])
                try:
                    rho = build_ensemble(args.ensemble, model, wing, settings, shift)
                except ZeroMassError:
                    rows.append(([g[i], g[j], g[k]], float("nan"), float("nan")))
                    continue
                e = analysis.signal(model, rho, wing, settings, shift, budget)
                rows.append(([g[i], g[j], g[k]], e.value, e.std_error))
    return names, rows, None


def cmd_sweep(args, model, budget, out) -> int:
    names, rows, mean = _sweep_rows(args, model, budget)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["kind", *names, "value", "std_error"])
    for angles, v, se in rows:
        writer.writerow(["cell", *map(repr, map(float, angles)), repr(float(v)), repr(float(se))])
    finite = [r for r in rows if not math.isnan(r[1])]
    if mean is None:
        # mean of per-cell values; the stderr is the mean of per-cell stderrs (an upper bound)
        k = max(len(finite), 1)
        mean = Estimate(sum(r[1] for r in finite) / k, sum(r[2] for r in finite) / k, budget.resolve(model.space), budget.samples)
    writer.writerow(["mean", *[""] * len(names), repr(float(mean.value)), repr(float(mean.std_error))])
    if finite:
        top = max(finite, key=lambda r: r[1])
        writer.writerow(["max", *map(repr, map(float, top[0])), repr(float(top[1])), repr(float(top[2]))])
    text = buf.getvalue()
    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"sweep: cannot write {args.output}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        out.write(text)
    return EXIT_OK


def cmd_average(args, model, budget, out) -> int:
    res = analysis.average_nonlocality(model, args.grid, budget)
    record = RunRecord("average", args.model, "equilibrium", {"grid": args.grid}, _budget_dict(budget), res.to_dict())
    _emit(record, args.format, out)
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "correlation": _single,
    "marginal": _single,
    "transition": _single,
    "signal": _single,
    "chsh": _single,
    "sweep": cmd_sweep,
    "average": cmd_average,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        model = model_by_name(args.model)
    except KeyError as exc:
        print(f"{parser.prog}: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except TableFormatError as exc:
        print(f"{parser.prog}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"{parser.prog}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        budget = _budget(args)
        return COMMANDS[args.command](args, model, budget, out)
    except (CliUsageError, analysis.UsageError, MethodError, ZeroMassError, DomainError, InvalidAngleError, ValueError) as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

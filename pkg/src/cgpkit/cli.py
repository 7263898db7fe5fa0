"""Command-line experiment runner.

Subcommands
-----------
``run``          one integration; writes a series CSV and a one-row summary CSV
``sweep``        every (method, h) combination; one summary CSV
``convergence``  observed orders between successive step sizes

Exit status is 0 on success, 2 for usage errors and 1 when a step fails.

Step sizes accept arithmetic literals with ``pi`` (``2pi/1600``,
``pi/8``, ``1/3``), evaluated in 40-digit arithmetic before rounding.
For the Argon cluster ``--h`` and ``--tend`` are in femtoseconds and the
CSV time columns are written in femtoseconds as well.

``--config FILE`` reads flat ``key = value`` lines whose keys are the long
option names (``h``, ``method``, ``tend``, ``max-iter``, ...).  List-valued
options take comma or space separated values.  Flags given on the command
line win over the file.
"""

from __future__ import annotations

import argparse
import ast
import csv
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import mpmath as mp
import numpy as np

from .analysis import SummaryRow, observed_orders, summarize_run
from .cgp import Cgp1Stepper, Cgp2Stepper, CgpStepper, MAX_ORDER
from .core import ConfigurationError, RunRecord, SolverConfig, StepFailure
from .glm import GlmStepper, load_glm_tableau
from .irk import IrkStepper
from .problems import FS, KeplerConfig, make_argon7, make_kepler, make_sho
from .runner import integrate, steps_for

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
WORKERS_ENV = "CGPKIT_MAX_WORKERS"
PROBLEMS = ("sho", "kepler", "argon")
SUMMARY_COLUMNS = [
    "method", "problem", "param", "h", "steps", "max_global_error",
    "max_energy_error", "wall_seconds", "solver_iters", "status",
]


class UsageError(Exception):
    pass


# -- literals ------------------------------------------------------------------

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
}


def parse_real(text: str) -> float:
    """Evaluate a step-size literal such as ``2pi/1600`` in extended precision."""
    src = re.sub(r"(\d|\))\s*(pi|\()", r"\1*\2", str(text).strip())

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return mp.mpf(ast.get_source_segment(src, node) or repr(node.value))
        if isinstance(node, ast.Name) and node.id == "pi":
            return +mp.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            value = ev(node.operand)
            return -value if isinstance(node.op, ast.USub) else value
        raise UsageError(f"cannot parse number {text!r}")

    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError:
        raise UsageError(f"cannot parse number {text!r}") from None
    with mp.workdps(40):
        try:
            value = ev(tree)
        except ZeroDivisionError:
            raise UsageError(f"division by zero in {text!r}") from None
        return float(value)


# -- experiments -----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    problem: str
    method: str
    h: float  # user units (fs for argon)
    tend: Optional[float] = None
    periods: Optional[int] = None
    e: float = 0.0
    stride: Optional[int] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    h_label: str = ""

    @property
    def time_scale(self) -> float:
        return FS if self.problem == "argon" else 1.0


def _check_method(method: str):
    if method in ("irk4",) or method.startswith("glm:"):
        return
    m = re.fullmatch(r"cgp(\d)", method)
    if not m or not 1 <= int(m.group(1)) <= MAX_ORDER:
        raise UsageError(f"unknown method {method!r} (cgp1..cgp{MAX_ORDER}, irk4, glm:<file|euler|gauss2>)")


def validate(spec: ExperimentSpec) -> ExperimentSpec:
    if spec.problem not in PROBLEMS:
        raise UsageError(f"unknown problem {spec.problem!r}")
    _check_method(spec.method)
    if not (spec.h > 0 and math.isfinite(spec.h)):
        raise UsageError("h must be positive")
    if (spec.tend is None) == (spec.periods is None):
        raise UsageError("give exactly one of --tend and --periods")
    if spec.periods is not None and spec.problem != "kepler":
        raise UsageError("--periods only applies to the Kepler problem")
    if spec.periods is not None and spec.periods < 1:
        raise UsageError("--periods must be a positive integer")
    if spec.tend is not None and not (spec.tend >= 0 and math.isfinite(spec.tend)):
        raise UsageError("--tend must be non-negative")
    if spec.problem == "kepler" and not 0.0 <= spec.e < 1.0:
        raise UsageError("--e must lie in [0, 1)")
    if spec.stride is not None and spec.stride < 1:
        raise UsageError("--stride must be >= 1")
    if spec.method.startswith("glm:"):
        try:
            load_glm_tableau(spec.method[4:])
        except (ConfigurationError, OSError) as exc:
            raise UsageError(f"cannot load GLM tableau: {exc}") from None
    return spec


def make_problem(spec: ExperimentSpec):
    if spec.problem == "sho":
        return make_sho()
    if spec.problem == "kepler":
        return make_kepler(KeplerConfig(spec.e, spec.periods or 1))
    return make_argon7()


def make_stepper(method: str, solver: SolverConfig):
    if method == "cgp1":
        return Cgp1Stepper(solver)
    if method == "cgp2":
        return Cgp2Stepper(solver)
    if method == "irk4":
        return IrkStepper(solver=solver)
    if method.startswith("glm:"):
        return GlmStepper(load_glm_tableau(method[4:]), solver, name=method)
    return CgpStepper(int(method[3:]), solver)


def n_steps(spec: ExperimentSpec) -> int:
    if spec.periods is not None:
        return steps_for(spec.periods * 2.0 * math.pi, spec.h)
    return steps_for(spec.tend, spec.h)


def run_experiment(spec: ExperimentSpec) -> RunRecord:
    """Integrate ``spec``; raises :class:`StepFailure` with a partial record."""
    problem = make_problem(spec)
    stepper = make_stepper(spec.method, spec.solver)
    return integrate(problem, stepper, spec.h * spec.time_scale, n_steps=n_steps(spec), stride=spec.stride)


def _fmt(x) -> str:
    return "" if x is None else "%.17g" % x


def summary_dict(row: Optional[SummaryRow], spec: ExperimentSpec, status: str) -> dict:
    if row is None:
        base = {"method": spec.method, "problem": spec.problem, "param": "", "h": spec.h}
        return {c: _fmt(base[c]) if c == "h" else base.get(c, "") for c in SUMMARY_COLUMNS[:-1]} | {"status": status}
    out = asdict(row)
    out["h"] = spec.h  # in the units the step was given
    text = {c: (_fmt(v) if isinstance(v, float) or v is None else str(v)) for c, v in out.items()}
    text["status"] = status
    return text


def write_summary_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def series_header(dimension: int) -> list:
    n = dimension // 2
    return ["t"] + [f"p{i}" for i in range(1, n + 1)] + [f"q{i}" for i in range(1, n + 1)] + ["e_g", "e_e"]


def write_series_csv(path, record: RunRecord, time_scale: float = 1.0) -> None:
    """Samples as ``t, p1..pn, q1..qn, e_g, e_e``; missing metrics are empty."""
    dim = record.states.shape[1]
    g, e = record.global_errors, record.energy_errors
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(series_header(dim))
        for k, t in enumerate(record.times):
            row = [_fmt(t / time_scale)] + ["%.17g" % v for v in record.states[k]]
            row.append("" if g is None else _fmt(g[k]))
            row.append("" if e is None else _fmt(e[k]))
            w.writerow(row)


# -- argument handling ---------------------------------------------------------------

_LIST_KEYS = {"h", "method"}
_INT_KEYS = {"periods", "stride", "max_iter", "jobs"}
_FLOAT_KEYS = {"e", "tol"}
_FLAG_KEYS = {"newton"}


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` comments and blank lines ignored."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _convert(key: str, value: str, multi: bool):
    try:
        if key in _FLAG_KEYS:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _LIST_KEYS:
            items = [s for s in re.split(r"[,\s]+", value) if s]
            return items if multi else items[0]
        return value
    except ValueError:
        raise UsageError(f"bad value for {key!r} in config: {value!r}") from None


def _common(p: argparse.ArgumentParser, multi_method: bool, multi_h: bool):
    p.add_argument("--config", help="flat key = value file; command-line flags win")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--e", type=float, help="Kepler eccentricity (default 0)")
    p.add_argument("--method", nargs="+" if multi_method else None,
                   help=f"cgp1..cgp{MAX_ORDER}, irk4 or glm:<file|euler|gauss2>")
    p.add_argument("--h", nargs="+" if multi_h else None, help="step size literal, e.g. 0.05 or 2pi/1600 (fs for argon)")
    p.add_argument("--tend", help="end time (fs for argon)")
    p.add_argument("--periods", type=int, help="number of Kepler periods")
    p.add_argument("--out-dir", help="output directory (default .)")
    p.add_argument("--stride", type=int, help="record every n-th step")
    p.add_argument("--tol", type=float, help="stage solver tolerance (default 1e-14)")
    p.add_argument("--max-iter", type=int, help="stage solver iteration cap (default 50)")
    p.add_argument("--newton", action="store_const", const=True, help="Newton stage solves")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgpkit", description="Hamiltonian integrator benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="single integration")
    _common(run, multi_method=False, multi_h=False)
    run.add_argument("--series", help="series CSV path (default OUT_DIR/series.csv)")
    run.add_argument("--summary", help="summary CSV path (default OUT_DIR/summary.csv)")

    sweep = sub.add_parser("sweep", help="all (method, h) combinations")
    _common(sweep, multi_method=True, multi_h=True)
    sweep.add_argument("--summary", help="summary CSV path (default OUT_DIR/summary.csv)")
    sweep.add_argument("--series-dir", help="also write one series CSV per run here")
    sweep.add_argument("--jobs", type=int, help=f"parallel workers (capped by ${WORKERS_ENV})")

    conv = sub.add_parser("convergence", help="observed orders over a list of step sizes")
    _common(conv, multi_method=False, multi_h=True)
    conv.add_argument("--output", help="CSV path (default OUT_DIR/convergence.csv)")
    return parser


def _merge_config(args: argparse.Namespace, multi_keys: set) -> argparse.Namespace:
    if not args.config:
        return args
    for key, value in read_config(args.config).items():
        if key in ("config", "command") or not hasattr(args, key):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            setattr(args, key, _convert(key, value, key in multi_keys))
    return args


def _solver(args) -> SolverConfig:
    try:
        return SolverConfig(
            max_iter=50 if args.max_iter is None else args.max_iter,
            tol=1e-14 if args.tol is None else args.tol,
            newton=bool(args.newton),
        )
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None


def _specs(args, methods, hs) -> list:
    if args.problem is None:
        raise UsageError("--problem is required")
    if not methods:
        raise UsageError("--method is required")
    if not hs:
        raise UsageError("at least one --h is required")
    tend = None if args.tend is None else parse_real(args.tend)
    base = dict(problem=args.problem, tend=tend, periods=args.periods,
                e=0.0 if args.e is None else args.e, stride=args.stride, solver=_solver(args))
    specs = []
    for method in methods:
        for h in hs:
            specs.append(validate(ExperimentSpec(method=method, h=parse_real(h), h_label=h, **base)))
    return specs


def _out(args, explicit, default_name) -> str:
    if explicit:
        return explicit
    out_dir = args.out_dir or "."
    return os.path.join(out_dir, default_name)


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _failure_message(spec: ExperimentSpec, exc: StepFailure) -> str:
    return (f"{spec.method} h={spec.h_label or spec.h}: step {exc.step_index} failed "
            f"after {exc.iterations} iterations, residual {exc.residual:.3e}")


def cmd_run(args) -> int:
    (spec,) = _specs(args, [args.method] if args.method else [], [args.h] if args.h else [])
    series, summary = _out(args, args.series, "series.csv"), _out(args, args.summary, "summary.csv")
    status, code = "ok", EXIT_OK
    try:
        record = run_experiment(spec)
    except StepFailure as exc:
        record, status, code = exc.record, "failed", EXIT_FAILURE
        print(f"error: {_failure_message(spec, exc)}", file=sys.stderr)
    for path in (series, summary):
        _ensure_parent(path)
    if record is not None:
        write_series_csv(series, record, spec.time_scale)
    row = summary_dict(None if record is None else summarize_run(record), spec, status)
    write_summary_csv(summary, [row])
    print(",".join(SUMMARY_COLUMNS))
    print(",".join(row[c] for c in SUMMARY_COLUMNS))
    return code


def _sweep_one(job):
    spec, series_path = job
    try:
        record = run_experiment(spec)
        status = "ok"
    except StepFailure as exc:
        record, status = exc.record, "failed"
        message = _failure_message(spec, exc)
    else:
        message = None
    if series_path and record is not None:
        write_series_csv(series_path, record, spec.time_scale)
    row = summary_dict(None if record is None else summarize_run(record), spec, status)
    return row, message


def worker_count(requested: Optional[int], jobs: int) -> int:
    cap = os.environ.get(WORKERS_ENV)
    n = requested or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise UsageError(f"${WORKERS_ENV} must be an integer") from None
    return max(1, min(n, jobs))


def cmd_sweep(args) -> int:
    specs = _specs(args, args.method, args.h)
    summary = _out(args, args.summary, "summary.csv")
    jobs = []
    for i, spec in enumerate(specs):
        path = None
        if args.series_dir:
            os.makedirs(args.series_dir, exist_ok=True)
            path = os.path.join(args.series_dir, f"{spec.problem}_{spec.method.replace(':', '-').replace('/', '_')}_{i}.csv")
        jobs.append((spec, path))
    workers = worker_count(args.jobs, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(job) for job in jobs]
    _ensure_parent(summary)
    write_summary_csv(summary, [row for row, _ in results])
    print(",".join(SUMMARY_COLUMNS))
    failed = False
    for row, message in results:
        print(",".join(row[c] for c in SUMMARY_COLUMNS))
        if message:
            failed = True
            print(f"error: {message}", file=sys.stderr)
    return EXIT_FAILURE if failed else EXIT_OK


def _reference_error(spec: ExperimentSpec, record: RunRecord, h_min: float) -> float:
    """Final-time distance to a cGP(2) run with step at most ``h_min / 10``."""
    refine = math.ceil(10.0 * spec.h / h_min - 1e-9)
    ref_spec = replace(spec, method="cgp2", h=spec.h / refine, stride=None)
    problem = make_problem(ref_spec)
    ref = integrate(problem, Cgp2Stepper(spec.solver), ref_spec.h * spec.time_scale,
                    n_steps=record.steps * refine, stride=max(1, record.steps * refine))
    return float(np.linalg.norm(record.final_state - ref.final_state))


def cmd_convergence(args) -> int:
    specs = _specs(args, [args.method] if args.method else [], args.h)
    if len(specs) < 2:
        raise UsageError("convergence needs at least two step sizes")
    specs.sort(key=lambda s: -s.h)
    h_min = specs[-1].h
    rows = []
    for spec in specs:
        try:
            record = run_experiment(spec)
        except StepFailure as exc:
            print(f"error: {_failure_message(spec, exc)}", file=sys.stderr)
            return EXIT_FAILURE
        row = summarize_run(record)
        g = row.max_global_error
        if g is None:
            try:
                g = _reference_error(spec, record, h_min)
            except StepFailure as exc:
                print(f"error: reference run: {_failure_message(spec, exc)}", file=sys.stderr)
                return EXIT_FAILURE
        rows.append((spec, record, g, row.max_energy_error))
    hs = [r[0].h for r in rows]
    g_orders = observed_orders(hs, [r[2] for r in rows])
    e_orders = observed_orders(hs, [r[3] for r in rows])

    out = _out(args, args.output, "convergence.csv")
    _ensure_parent(out)
    header = ["method", "problem", "h", "steps", "global_error", "energy_error", "global_order", "energy_order"]
    lines = []
    for i, (spec, record, g, e) in enumerate(rows):
        go = "" if i == 0 else ("indeterminate" if g_orders[i - 1] is None else "%.6g" % g_orders[i - 1])
        eo = "" if i == 0 else ("indeterminate" if e_orders[i - 1] is None else "%.6g" % e_orders[i - 1])
        lines.append([spec.method, spec.problem, _fmt(spec.h), str(record.steps), _fmt(g), _fmt(e), go, eo])
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(lines)
    print(",".join(header))
    for line in lines:
        print(",".join(line))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        multi = {"run": set(), "sweep": {"h", "method"}, "convergence": {"h"}}[args.command]
        _merge_config(args, multi)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_convergence(args)
    except UsageError as exc:
        parser.error(str(exc))
        return EXIT_USAGE  # not reached; parser.error exits


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark harness and CLI.

Standard test functions with known optima, a config-driven benchmark runner
that persists per-repetition traces (CSV) plus a JSON summary, and a timing
harness on a trivial constant target that isolates pure optimizer overhead.

CLI:
    bench run  --config <file> --out <dir>
    bench time --iters 50,100,200,400 --out <file>
    bench list

The BENCH_SEED environment variable rebases the seed list of `bench run`.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BayoptError, InvalidParams
from .optimizer import BoptParams, BoundsParams, RunTrace, TargetProblem, TraceRecord, run_continuous


@dataclass(frozen=True)
class TestFunction:
    name: str
    dim: int
    lower: tuple
    upper: tuple
    optimum_x: tuple
    optimum_f: float
    fn: object

    def __post_init__(self):
        got = float(self.fn(np.asarray(self.optimum_x, dtype=float)))
        if abs(got - self.optimum_f) > 1e-6:
            raise AssertionError(
                f"{self.name}: stored optimum {self.optimum_f} but f(x*) = {got}"
            )

    def problem(self) -> TargetProblem:
        return TargetProblem(
            evaluate=self.fn,
            known_optimum=(np.asarray(self.optimum_x, dtype=float), self.optimum_f),
        )


def _ackley(x):
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    return (-20.0 * math.exp(-0.2 * math.sqrt(np.sum(x**2) / d))
            - math.exp(np.sum(np.cos(2.0 * math.pi * x)) / d) + 20.0 + math.e)


def _rosenbrock(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def _michalewicz(x, m=10):
    x = np.asarray(x, dtype=float)
    i = np.arange(1, x.shape[0] + 1)
    return float(-np.sum(np.sin(x) * np.sin(i * x**2 / math.pi) ** (2 * m)))


def _branin(x):
    a = 1.0
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * math.pi)
    return float(a * (x[1] - b * x[0] ** 2 + c * x[0] - r) ** 2
                 + s * (1.0 - t) * math.cos(x[0]) + s)


def _sphere(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(x**2))


def _constant(x):
    return 0.0


def builtin_functions(dim: int = 2) -> dict[str, TestFunction]:
    """Catalog of test functions, instantiated at `dim` where configurable.

    Stored optima are asserted against the definitions at construction.
    """
    if dim < 1:
        raise InvalidParams(f"dimension must be at least 1, got {dim}")
    catalog = {
        "ackley": TestFunction(
            "ackley", dim, (-32.768,) * dim, (32.768,) * dim,
            (0.0,) * dim, 0.0, _ackley),
        "rosenbrock": TestFunction(
            "rosenbrock", max(dim, 2), (-2.048,) * max(dim, 2), (2.048,) * max(dim, 2),
            (1.0,) * max(dim, 2), 0.0, _rosenbrock),
        "michalewicz": TestFunction(
            "michalewicz", 2, (0.0, 0.0), (math.pi, math.pi),
            (2.2029055173080243, 1.5707963237831148), -1.8013034100985532,
            _michalewicz),
        "branin": TestFunction(
            "branin", 2, (-5.0, 0.0), (10.0, 15.0),
            (math.pi, 2.275), 0.39788735772973816, _branin),
        "sphere": TestFunction(
            "sphere", dim, (-5.12,) * dim, (5.12,) * dim,
            (0.0,) * dim, 0.0, _sphere),
        "constant": TestFunction(
            "constant", dim, (0.0,) * dim, (1.0,) * dim,
            (0.5,) * dim, 0.0, _constant),
    }
    return catalog


def write_trace(trace: RunTrace, path) -> None:
    """Persist a trace as CSV: iteration, query coordinates, then metrics.

    Floats are written with repr precision so the file round-trips exactly.
    """
    records = trace.records
    d = records[0].x.shape[0]
    header = ["iteration"] + [f"x{j}" for j in range(d)] + [
        "y", "incumbent", "gap", "distance", "regret", "t_fit_ms", "t_crit_ms"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in records:
            row = [rec.iteration] + [repr(float(v)) for v in rec.x] + [
                repr(rec.y), repr(rec.incumbent_y),
                "" if rec.gap is None else repr(rec.gap),
                "" if rec.distance is None else repr(rec.distance),
                "" if rec.avg_regret is None else repr(rec.avg_regret),
                repr(rec.t_fit_ms), repr(rec.t_crit_ms),
            ]
            writer.writerow(row)


def read_trace(path) -> RunTrace:
    """Parse a trace CSV back into a RunTrace.

    The incumbent point itself is not persisted, so incumbent_x is filled
    with the row's own query point.
    """
    trace = RunTrace()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for name in header if name.startswith("x"))
        for i, row in enumerate(reader, start=1):
            x = np.asarray([float(v) for v in row[1 : 1 + d]])
            tail = row[1 + d :]
            rec = TraceRecord(
                index=i,
                iteration=int(row[0]),
                x=x,
                y=float(tail[0]),
                incumbent_x=x,
                incumbent_y=float(tail[1]),
                gap=None if tail[2] == "" else float(tail[2]),
                distance=None if tail[3] == "" else float(tail[3]),
                avg_regret=None if tail[4] == "" else float(tail[4]),
                t_fit_ms=float(tail[5]),
                t_crit_ms=float(tail[6]),
            )
            trace.records.append(rec)
    return trace


def _params_from_config(config: dict) -> tuple[TestFunction, BoptParams, list[int]]:
    known = {"function", "dimension", "repetitions", "seeds", "params"}
    unknown = set(config) - known
    if unknown:
        raise InvalidParams(f"unknown benchmark config keys: {sorted(unknown)}")
    if "function" not in config:
        raise InvalidParams("benchmark config needs a 'function' name")
    dim = int(config.get("dimension", 2))
    catalog = builtin_functions(dim)
    name = config["function"]
    if name not in catalog:
        raise InvalidParams(f"unknown test function {name!r}; see `bench list`")
    func = catalog[name]

    params = BoptParams.from_dict(config.get("params", {}))
    params.bounds = BoundsParams(lower=func.lower, upper=func.upper)

    repetitions = int(config.get("repetitions", 1))
    if repetitions < 1:
        raise InvalidParams("repetitions must be at least 1")
    seeds = [int(s) for s in config.get("seeds", range(repetitions))]
    if len(seeds) != repetitions:
        raise InvalidParams(f"{repetitions} repetitions but {len(seeds)} seeds")
    env_seed = os.environ.get("BENCH_SEED")
    if env_seed is not None:
        base = int(env_seed)
        seeds = [base + i for i in range(repetitions)]
    return func, params, seeds


def run_benchmark(config_path, out_dir) -> int:
    """Run repetitions from a JSON config, writing trace CSVs and a summary.

    Exit codes: 0 success, 1 configuration failure, 2 runtime failure.
    """
    try:
        with open(config_path) as fh:
            config = json.load(fh)
        func, params, seeds = _params_from_config(config)
    except (OSError, ValueError, BayoptError) as exc:
        print(f"bench: config error: {exc}", file=sys.stderr)
        return 1

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    final_gaps = []
    t0 = time.perf_counter()
    try:
        for seed in seeds:
            params.seed = seed
            _, _, trace = run_continuous(func.problem(), params)
            write_trace(trace, out / f"trace_seed{seed}.csv")
            final_gaps.append(trace.final().gap)
    except BayoptError as exc:
        print(f"bench: runtime error: {exc}", file=sys.stderr)
        return 2
    total_s = time.perf_counter() - t0

    gaps = np.asarray(final_gaps, dtype=float)
    summary = {
        "function": func.name,
        "dimension": func.dim,
        "seeds": seeds,
        "final_gaps": [float(g) for g in gaps],
        "median_final_gap": float(np.median(gaps)),
        "iqr_final_gap": [float(np.percentile(gaps, 25)), float(np.percentile(gaps, 75))],
        "total_wall_time_s": total_s,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return 0


def timing_params(n_iterations: int, seed: int = 0) -> BoptParams:
    """Configuration used by the timing harness: trivial target, frozen
    hyperparameters, modest criterion budget (the fit phase is what scales)."""
    params = BoptParams.from_dict({
        "n_iterations": n_iterations,
        "n_init": 10,
        "surr_name": "S_GAUSSIAN_PROCESS",
        "l_type": "L_ML",
        "l_update_every": 0,
        "inner_budget": 200,
        "seed": seed,
    })
    return params


def run_timing(iters_list, out_path, seed: int = 0) -> list[dict]:
    """Run the constant target at each budget, recording per-iteration fit
    and criterion times plus the run total.  Returns the rows written."""
    func = builtin_functions(2)["constant"]
    rows = []
    for n_iters in iters_list:
        params = timing_params(int(n_iters), seed)
        params.bounds = BoundsParams(lower=func.lower, upper=func.upper)
        t0 = time.perf_counter()
        _, _, trace = run_continuous(func.problem(), params)
        total_s = time.perf_counter() - t0
        for rec in trace.records:
            if rec.iteration == 0:
                continue
            rows.append({
                "run_iters": int(n_iters),
                "iteration": rec.iteration,
                "n_points": rec.index,
                "t_fit_ms": rec.t_fit_ms,
                "t_crit_ms": rec.t_crit_ms,
                "run_total_s": total_s,
            })
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bench",
                                     description="Bayesian optimization benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark config")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", required=True, help="output directory")

    p_time = sub.add_parser("time", help="time the trivial target at several budgets")
    p_time.add_argument("--iters", required=True,
                        help="comma-separated iteration counts, e.g. 50,100,200,400")
    p_time.add_argument("--out", required=True, help="output CSV file")
    p_time.add_argument("--seed", type=int, default=0)

    sub.add_parser("list", help="print the test function catalog")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run_benchmark(args.config, args.out)
    if args.command == "time":
        try:
            iters = [int(v) for v in args.iters.split(",") if v]
        except ValueError:
            print(f"bench: bad --iters value {args.iters!r}", file=sys.stderr)
            return 1
        run_timing(iters, args.out, seed=args.seed)
        return 0
    for name, func in sorted(builtin_functions().items()):
        print(f"{name:12s} d={func.dim}  box=[{func.lower[0]}, {func.upper[0]}]"
              f"  f*={func.optimum_f:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line harness: run the solver on built-in or file instances.

Two subcommands share the same flags::

    vqep run   --instance ab --start=-3,2 --start=0,2
    vqep batch --instance ab --n-random 100 --jobs 4

``run`` writes one report row per start point, ``batch`` draws random
``(a, b, c)`` weights for the ab family and aggregates per start point.
Exit codes: 0 all runs converged and certified, 1 some run did not,
2 configuration error, 3 solver invariant violation. The traces of runs
that hit an invariant violation are dumped to ``--trace`` if given, else
next to ``--out`` as ``<out>.trace.jsonl``, else to stderr.
"""
from __future__ import annotations

import argparse
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import io
import json
import math
import sys
from typing import Optional

import numpy as np

from .engine import SemlParams, solve
from .instances import (
    REFERENCE_STARTS,
    InstanceError,
    builtin,
    instance_from_dict,
    random_ab_params,
    random_starts,
)
from .oracle import certified

__all__ = ["RunConfig", "ConfigError", "run_single", "run_batch", "read_report",
           "format_report", "main", "RUN_COLUMNS", "BATCH_COLUMNS"]

RUN_COLUMNS = ["start", "solution", "iterations", "cpu_seconds", "status",
               "primal_residual", "fix_distance"]
BATCH_COLUMNS = ["start", "solution", "avg_iterations", "avg_cpu_seconds", "success_rate"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3


class ConfigError(ValueError):
    """Unusable command line or input file."""


@dataclass
class RunConfig:
    """Everything one invocation needs.

    ``instance`` is a builtin name or a ``{"type": ..., "params": ...}``
    mapping (already read from ``--instance-file``).
    """

    instance: object = "ab"
    starts: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: Optional[str] = None
    fmt: str = "csv"
    trace: Optional[str] = None
    jobs: int = 1
    timing: bool = True

    def __post_init__(self):
        if not self.starts:
            raise ConfigError("at least one start point is required")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.fmt!r}")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        try:
            SemlParams(**self.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver parameters: {exc}") from exc


def _problem(instance):
    if isinstance(instance, str):
        return builtin(instance)
    return instance_from_dict(instance)


def _vec(x):
    return [float(f"{float(t):.10g}") for t in x]


def _num(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def _run_task(task):
    # top-level so that worker processes can unpickle it
    prob = _problem(task["instance"])
    params = SemlParams(**task["params"])
    rep = solve(prob, params, task["start"])
    res = rep.residuals
    row = {
        "start": _vec(task["start"]),
        "solution": _vec(rep.solution),
        "iterations": int(rep.iterations),
        "cpu_seconds": round(rep.wall_time, 6) if task["timing"] else 0.0,
        "status": rep.status,
        "primal_residual": _num(res.primal_residual) if res else None,
        "fix_distance": _num(res.fix_distance) if res else None,
    }
    return {
        "index": task["index"],
        "row": row,
        "certified": bool(rep.ok and certified(res)),
        "error": rep.error,
        "trace": rep.trace if task["want_trace"] or rep.error else [],
    }


def _execute(tasks, jobs):
    if jobs == 1 or len(tasks) == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    return sorted(results, key=lambda r: r["index"])


def _trace_lines(results):
    for r in results:
        for rec in r["trace"]:
            yield json.dumps({"run": r["index"], **rec}, default=float, sort_keys=True)


def _dump_trace(cfg, results):
    invariant = [r for r in results if r["row"]["status"] == "invariant-violation"]
    if cfg.trace:
        with open(cfg.trace, "w") as fh:
            for line in _trace_lines(results):
                fh.write(line + "\n")
    elif invariant and cfg.out:
        with open(cfg.out + ".trace.jsonl", "w") as fh:
            for line in _trace_lines(invariant):
                fh.write(line + "\n")
    elif invariant:
        for line in _trace_lines(invariant):
            print(line, file=sys.stderr)
    for r in invariant:
        print(f"run {r['index']}: {r['error']}", file=sys.stderr)


def _cell(value):
    if isinstance(value, list):
        return json.dumps(value)
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_report(rows, columns, fmt="csv", kind="runs"):
    """Render report rows as CSV text or a JSON document."""
    if fmt == "json":
        return json.dumps({"kind": kind, "columns": columns, "rows": rows}, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def _parse_cell(col, text):
    if col in ("start", "solution"):
        return json.loads(text)
    if col == "status":
        return text
    if col == "iterations":
        return int(text)
    v = float(text)
    return None if math.isnan(v) else v


def read_report(source):
    """Parse a report written by :func:`format_report` (path or text).

    Returns the list of row dictionaries, with vectors as lists and missing
    residuals as None.
    """
    text = source
    if "\n" not in source:
        with open(source) as fh:
            text = fh.read()
    if text.lstrip().startswith("{"):
        return json.loads(text)["rows"]
    reader = csv.DictReader(io.StringIO(text))
    return [{c: _parse_cell(c, v) for c, v in row.items()} for row in reader]


def _write(cfg, text):
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _exit_code(results, success):
    if any(r["row"]["status"] == "invariant-violation" for r in results):
        return EXIT_INVARIANT
    return EXIT_OK if all(success(r) for r in results) else EXIT_FAILED


def _task(cfg, index, instance, start):
    return {"index": index, "instance": instance, "start": list(start),
            "params": {**cfg.params, "seed": cfg.seed}, "timing": cfg.timing,
            "want_trace": cfg.trace is not None}


def run_single(cfg: RunConfig) -> int:
    """Solve once per start point and write the report table."""
    try:
        _problem(cfg.instance)
    except InstanceError as exc:
        raise ConfigError(str(exc)) from exc
    tasks = [_task(cfg, i, cfg.instance, s) for i, s in enumerate(cfg.starts)]
    results = _execute(tasks, cfg.jobs)
    _dump_trace(cfg, results)
    _write(cfg, format_report([r["row"] for r in results], RUN_COLUMNS, cfg.fmt))
    return _exit_code(results, lambda r: r["certified"])


def _modal_solution(rows):
    keys = Counter(tuple(round(t, 4) for t in r["solution"]) for r in rows)
    return [float(t) for t in keys.most_common(1)[0][0]]


def run_batch(cfg: RunConfig, n_random: int, runs_out: Optional[str] = None) -> int:
    """Random ab-family weights times every start point, aggregated per start.

    Triples are drawn in order from ``numpy.random.default_rng(cfg.seed)``.
    A run succeeds when it converged and passed the certificate;
    ``solution`` is the most frequent solution (rounded to 1e-4).
    """
    if n_random < 1:
        raise ConfigError("--n-random must be at least 1")
    base = cfg.instance
    if isinstance(base, str):
        base = {"type": base.split("-")[0], "params": {}}
    if base.get("type") != "ab":
        raise ConfigError("batch mode needs an instance family with random weights (ab)")
    rng = np.random.default_rng(cfg.seed)
    triples = [random_ab_params(rng) for _ in range(n_random)]
    tasks = []
    for t, abc in enumerate(triples):
        inst = {"type": "ab", "params": abc}
        for j, s in enumerate(cfg.starts):
            tasks.append(_task(cfg, t * len(cfg.starts) + j, inst, s))
    results = _execute(tasks, cfg.jobs)
    _dump_trace(cfg, results)
    if runs_out:
        rows = [{"triple": list(triples[r["index"] // len(cfg.starts)].values()),
                 **r["row"]} for r in results]
        with open(runs_out, "w") as fh:
            fh.write(format_report(rows, ["triple"] + RUN_COLUMNS, "csv"))
    table = []
    for j, s in enumerate(cfg.starts):
        mine = [r for r in results if r["index"] % len(cfg.starts) == j]
        rows = [r["row"] for r in mine]
        table.append({
            "start": _vec(s),
            "solution": _modal_solution(rows),
            "avg_iterations": round(float(np.mean([r["iterations"] for r in rows])), 4),
            "avg_cpu_seconds": round(float(np.mean([r["cpu_seconds"] for r in rows])), 6),
            "success_rate": round(float(np.mean([r["certified"] for r in mine])), 6),
        })
    _write(cfg, format_report(table, BATCH_COLUMNS, cfg.fmt, kind="batch"))
    return _exit_code(results, lambda r: r["certified"])


# -- argument handling -----------------------------------------------------------------


def _parse_point(text):
    text = text.strip().strip("()[]")
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse start point {text!r}") from None


def _read_starts(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read starts file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return [_parse_point(line) for line in text.splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
    if not isinstance(data, list):
        raise ConfigError("starts file must hold a JSON list of points")
    return [[float(t) for t in p] for p in data]


def build_parser():
    parser = argparse.ArgumentParser(prog="vqep", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--instance", default=None,
                     help="builtin instance: ab, bimat-paper, l2trunc, gnep-demo (default ab)")
    src.add_argument("--instance-file", help="JSON instance description")
    common.add_argument("--start", action="append", default=[],
                        help='start point "x1,x2,..." (repeatable; write --start=-3,2 '
                             "for a leading minus)")
    common.add_argument("--starts-file", help="file with one point per line or a JSON list")
    common.add_argument("--random-starts", type=int, default=0,
                        help="add N seeded random start points in K")
    common.add_argument("--delta", type=float, default=1e-3)
    common.add_argument("--theta", type=float, default=0.5)
    common.add_argument("--beta", type=float, default=1.0)
    common.add_argument("--gamma", type=float, default=1.0)
    common.add_argument("--eps", type=float, default=1e-6, help="outer stopping tolerance")
    common.add_argument("--eps-fix", type=float, default=1e-8, help="fixed-point stop tolerance")
    common.add_argument("--max-iters", type=int, default=5000)
    common.add_argument("--c1-samples", type=int, default=0,
                        help="sampled points per iteration for the subproblem optimality check")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="report path (default stdout)")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--trace", help="write the iteration trace as JSON lines")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--oracle-samples", type=int, default=10_000)
    common.add_argument("--no-timing", action="store_true",
                        help="report cpu_seconds as 0 for byte-stable output")
    sub.add_parser("run", parents=[common], help="one solve per start point")
    batch = sub.add_parser("batch", parents=[common], help="random ab-family weights")
    batch.add_argument("--n-random", type=int, default=100)
    batch.add_argument("--runs-out", help="also write every individual run as CSV")
    return parser


def config_from_args(args):
    if args.instance_file:
        try:
            with open(args.instance_file) as fh:
                instance = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read instance file: {exc}") from exc
    else:
        instance = args.instance or "ab"
    try:
        prob = _problem(instance)
    except InstanceError as exc:
        raise ConfigError(str(exc)) from exc
    starts = [_parse_point(s) for s in args.start]
    if args.starts_file:
        starts += _read_starts(args.starts_file)
    if args.random_starts:
        rng = np.random.default_rng([args.seed, 7])
        starts += [list(p) for p in random_starts(prob, args.random_starts, rng)]
    if not starts and isinstance(instance, str):
        starts = [list(p) for p in REFERENCE_STARTS.get(instance, [])]
    for s in starts:
        if len(s) != prob.n:
            raise ConfigError(f"start point {s} has dimension {len(s)}, expected {prob.n}")
        if not prob.K.contains(np.asarray(s)):
            raise ConfigError(f"start point {s} is not in K")
    params = {"delta": args.delta, "theta": args.theta, "beta": args.beta,
              "gamma": args.gamma, "eps_stop": args.eps, "eps_fix": args.eps_fix,
              "max_outer": args.max_iters, "oracle_samples": args.oracle_samples,
              "c1_samples": args.c1_samples, "keep_trace": True}
    return RunConfig(instance=instance, starts=starts, params=params, seed=args.seed,
                     out=args.out, fmt=args.format, trace=args.trace, jobs=args.jobs,
                     timing=not args.no_timing)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "batch":
            return run_batch(cfg, args.n_random, runs_out=args.runs_out)
        return run_single(cfg)
    except ConfigError as exc:
        print(f"vqep: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

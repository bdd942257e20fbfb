"""Acceptance suite: one test, and one printed PASS/FAIL line, per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines appear in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
The solver runs are cached so that the invariant criterion can inspect
every run of the reproduction criteria.
"""
from functools import lru_cache
import os
import subprocess
import sys
import tempfile
import warnings

import numpy as np

from vqep.cli import RunConfig, run_batch
from vqep.engine import SemlParams, solve
from vqep.instances import make_ab, make_truncated_l2, reference_bimat, random_ab_params, random_starts
from vqep.oracle import certified

import derived
import suites

SEED = 0
RESULTS = {}

# every acceptance run checks the subproblem optimality inequality on 100 samples
PARAMS = dict(delta=1e-3, theta=0.5, beta=1.0, gamma=1.0, eps_stop=1e-6, c1_samples=100,
              seed=SEED)


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _run(prob, v0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve(prob, SemlParams(**PARAMS), v0)


@lru_cache(maxsize=None)
def ab_runs():
    rng = np.random.default_rng(SEED)
    triples = [random_ab_params(rng) for _ in range(100)]
    runs = []
    for abc in triples:
        prob = make_ab(**abc)
        runs.extend((abc, v0, _run(prob, v0)) for v0 in derived.AB_STARTS)
    return runs


@lru_cache(maxsize=None)
def bimat_runs():
    prob = reference_bimat()
    return [(v0, sol, _run(prob, v0)) for v0, sol, _ in derived.BIMAT_TABLE]


@lru_cache(maxsize=None)
def l2_runs():
    prob = make_truncated_l2(6)
    starts = random_starts(prob, 5, np.random.default_rng([SEED, 7]))
    return [(tuple(round(float(t), 4) for t in v0), _run(prob, v0)) for v0 in starts]


def _outcomes(reps):
    out = {}
    for rep in reps:
        key = rep.status if rep.error is None else rep.error.split(":")[-1].strip()
        out[key] = out.get(key, 0) + 1
    return out


def test_criterion_1_ab_family():
    runs = ab_runs()
    hits = [np.max(np.abs(rep.solution - 1.0)) <= 1e-4 and rep.status == "converged"
            for _, _, rep in runs]
    other = sum(1 for (_, _, rep), h in zip(runs, hits) if not h and rep.ok and certified(rep.residuals))
    avg = []
    for j, v0 in enumerate(derived.AB_STARTS):
        mine = [rep for k, (_, _, rep) in enumerate(runs) if k % 5 == j]
        conv = [rep.iterations for rep in mine if rep.status == "converged"]
        avg.append(f"{v0}: {np.mean([r.iterations for r in mine]):.1f} all, "
                   f"{np.mean(conv) if conv else float('nan'):.1f} converged "
                   f"(reference {derived.AB_AVG_ITERS[j]})")
    total = sum(rep.wall_time for _, _, rep in runs)
    detail = (f"{sum(hits)}/{len(runs)} runs reach (1, 1) within 1e-4; outcomes "
              f"{_outcomes([r for _, _, r in runs])}; {other} end at another certified point; "
              f"avg iterations {'; '.join(avg)}; {total:.0f} s")
    record(1, all(hits), detail)


def test_criterion_2_bimatrix():
    runs = bimat_runs()
    targets = np.array([[10.0, 10.0, 10.0], [-10.0, 10.0, 10.0]])
    hits, table = [], []
    for v0, sol, rep in runs:
        dist = np.max(np.abs(targets - rep.solution), axis=1)
        ok = bool(np.min(dist) <= 1e-3 and certified(rep.residuals))
        hits.append(ok)
        same = bool(np.max(np.abs(rep.solution - sol)) <= 1e-3)
        table.append(f"{v0} -> {np.round(rep.solution, 4).tolist()} [{rep.status}, "
                     f"{rep.iterations} it, table match {same}]")
    record(2, all(hits), f"{sum(hits)}/{len(runs)} in the solution set; " + "; ".join(table))


def test_criterion_3_truncated():
    runs = l2_runs()
    targets = np.array([derived.L2_SOLUTION, np.zeros(6)])
    hits, table = [], []
    for v0, rep in runs:
        dist = np.max(np.abs(targets - rep.solution), axis=1)
        hits.append(bool(np.min(dist) <= 1e-3 and certified(rep.residuals)))
        table.append(f"{list(v0)} -> {rep.status} after {rep.iterations} it, "
                     f"|x|={np.linalg.norm(rep.solution):.1f}, "
                     f"primal {getattr(rep.residuals, 'primal_residual', float('nan')):.3g}")
    record(3, all(hits), f"{sum(hits)}/{len(runs)} reach a listed solution; " + "; ".join(table))


def _invariant_report(reps):
    worst = {"D": -np.inf, "lmn": -np.inf, "cut": -np.inf, "c1": -np.inf}
    minimality, raised = 0, []
    for rep in reps:
        d = [r["D_v0"] for r in rep.trace]
        for a, b in zip(d, d[1:]):
            worst["D"] = max(worst["D"], (a - b) / max(1.0, a))
        for r in rep.trace:
            c = r["checks"]
            worst["lmn"] = max(worst["lmn"], c["lmn_violation"])
            worst["cut"] = max(worst["cut"], c["cut_violation"])
            worst["c1"] = max(worst["c1"], c["c1_violation"])
            if r["ell"] > 0 and not (c["ls_previous_min"] > 0):
                minimality += 1
        if rep.error and rep.error.startswith(("InvariantViolation", "LinesearchError")):
            raised.append(rep.error)
    return worst, minimality, raised


def _cut_summary(label, reps):
    rows = [r["checks"] for rep in reps for r in rep.trace]
    if not rows:
        return f"{label} none"
    j = int(np.argmax([c["cut_violation"] for c in rows]))
    return (f"{label} {rows[j]['cut_violation']:.1e} "
            f"(scaled by the subgradient norm {rows[j]['cut_scaled']:.1e})")


def test_criterion_4_invariants():
    groups = {"ab": [r for _, _, r in ab_runs()], "bimat": [r for _, _, r in bimat_runs()],
              "l2trunc": [r for _, r in l2_runs()]}
    reps = [r for g in groups.values() for r in g]
    worst, minimality, raised = _invariant_report(reps)
    ok = (worst["D"] <= 1e-9 and worst["lmn"] <= 1e-7 and worst["cut"] <= 1e-6
          and worst["c1"] <= 1e-5 and minimality == 0 and not raised)
    n_it = sum(len(r.trace) for r in reps)
    detail = (f"{len(reps)} runs, {n_it} iterations; worst D decrease {worst['D']:.2e}, "
              f"L/M/N {worst['lmn']:.2e}, cut {worst['cut']:.2e}, c1 {worst['c1']:.2e}; "
              f"linesearch minimality failures {minimality}; invariant aborts {len(raised)}; "
              f"worst cut per instance: " + ", ".join(_cut_summary(k, g) for k, g in groups.items()))
    record(4, ok, detail)


def test_criterion_5_oracles():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sub = suites.subproblem_oracle_suite(n_specs=50)
        dyk = suites.dykstra_suite(n_instances=200)
    ok = sub <= 1e-3 and dyk <= 1e-8
    record(5, ok, f"subproblem vs grid max {sub:.2e} (<= 1e-3) on 50 specs; "
                         f"Dykstra vs exact max {dyk:.2e} (<= 1e-8) on 200 sets")


def test_criterion_6_properties():
    b1, mid = suites.convexity_suite(n_points=1000)
    proj, used = suites.projection_suite(n_triples=1000)
    ineq, fd = suites.gradient_suite(n_points=100)
    ok = b1 == 0.0 and mid <= 1e-9 and proj <= 1e-9 and fd <= 1e-4 and ineq <= 1e-7
    record(6, ok, f"B1 max |f(x,x)| {b1:.1e}; midpoint excess {mid:.1e}; projection "
                         f"<z-q,p-q> max {proj:.1e} over {used} pairs; gradient vs differences "
                         f"{fd:.1e}; subgradient inequality {ineq:.1e}")


def test_criterion_7_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        paths = [os.path.join(tmp, f"b{i}.csv") for i in range(2)]
        for p in paths:
            cfg = RunConfig(instance="ab", starts=[list(s) for s in derived.AB_STARTS],
                            params={"oracle_samples": 2000}, seed=SEED, out=p, timing=False)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                run_batch(cfg, 3)
        a, b = (open(p, "rb").read() for p in paths)
    record(7, a == b and len(a) > 0, f"two seeded batch runs: {len(a)} bytes each, "
                                            f"identical={a == b}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(subprocess.call([sys.executable, "-m", "pytest", "-q", __file__]))

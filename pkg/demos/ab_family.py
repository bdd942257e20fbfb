"""Two-dimensional family: runs from the five standard starts.

First with a = b = c = 1, then over a few random (a, b, c) triples. The
point (1, 1) is a solution for every triple, but not the only one, and some
runs stop early because the accumulated cuts leave no room for the next
step. The last column says how each run ended.
"""
import warnings

import numpy as np

from vqep import SemlParams, solve
from vqep.instances import REFERENCE_STARTS, make_ab, random_ab_params
from vqep.oracle import certified

warnings.simplefilter("ignore")


def show(prob, label):
    print(f"-- {label}")
    for v0 in REFERENCE_STARTS["ab"]:
        rep = solve(prob, SemlParams(oracle_samples=2000), v0)
        err = np.max(np.abs(rep.solution - 1.0))
        note = rep.error.split(": ", 1)[-1] if rep.error else ""
        print(f"  start {str(v0):12s} -> {np.round(rep.solution, 5)}  it={rep.iterations:4d}"
              f"  |x-(1,1)|={err:.1e}  certified={certified(rep.residuals)}  {rep.status} {note}")


show(make_ab(1.0, 1.0, 1.0), "a = b = c = 1")
rng = np.random.default_rng(0)
for _ in range(3):
    abc = random_ab_params(rng)
    show(make_ab(**abc), "a={a:.2f} b={b:.2f} c={c:.2f}".format(**abc))

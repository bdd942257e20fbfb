"""Three-dimensional bimatrix instance run from seven starts.

Each run's end point is checked against the sampled certificate. Any
positive multiple t (1, 1, 1) with t >= sqrt(3) is an exact solution,
because there the constraint map shrinks to a single point. The run from
(4, 4, 4) therefore stops at once.
"""
import warnings

import numpy as np

from vqep import SemlParams, solve
from vqep.instances import REFERENCE_STARTS, reference_bimat

warnings.simplefilter("ignore")

prob = reference_bimat()
for v0 in REFERENCE_STARTS["bimat-paper"]:
    rep = solve(prob, SemlParams(oracle_samples=5000), v0)
    r = rep.residuals
    print(f"{str(v0):18s} -> {np.round(rep.solution, 4)}  it={rep.iterations:3d}  "
          f"primal={r.primal_residual:+.2e}  fix={r.fix_distance:.1e}  {rep.status}")

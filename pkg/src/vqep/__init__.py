"""Extragradient solver with linesearch for vector quasi-equilibrium problems.

The submodules are

* :mod:`vqep.geometry`: Bregman distance and projections onto halfspaces,
  polyhedra, boxes and balls
* :mod:`vqep.model`: bifunctions, constraint maps and the problem container
* :mod:`vqep.subsolver`: scalarized prox subproblem
* :mod:`vqep.linesearch`: Armijo-type backtracking
* :mod:`vqep.engine`: the outer iteration and :func:`solve`
* :mod:`vqep.instances`: built-in problems and JSON loading
* :mod:`vqep.oracle`: sampling certificates and a grid subproblem solver
* :mod:`vqep.cli`: command-line harness
"""
from .engine import SemlParams, SolveReport, seml_step, solve
from .exceptions import ConvergenceWarning, InfeasibleError, InvariantViolation, LinesearchError
from .instances import builtin, instance_from_dict, load_instance, make_ab, make_bimat, \
    make_gnep, make_truncated_l2, reference_bimat
from .model import VqepProblem
from .oracle import Certificate, dual_residual, vqep_residual

__version__ = "0.1.0"

__all__ = [
    "SemlParams", "SolveReport", "seml_step", "solve",
    "ConvergenceWarning", "InfeasibleError", "InvariantViolation", "LinesearchError",
    "builtin", "instance_from_dict", "load_instance", "make_ab", "make_bimat", "make_gnep",
    "make_truncated_l2", "reference_bimat", "VqepProblem",
    "Certificate", "dual_residual", "vqep_residual",
]

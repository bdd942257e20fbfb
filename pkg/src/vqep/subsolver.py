"""Weakly efficient vector subproblem solved by fixed-weight scalarization.

For a weight ``c`` in the dual cone, any minimizer over ``T(base)`` of

    psi(y) = beta <f(x, y), c> + <e, c> (||y||^2 - 2 <y, x>)

is weakly efficient for the vector objective ``beta f(x, y) + (g(y) -
<y, g'(x)>) e``. Adding the constant ``<e, c> ||x||^2`` turns ``psi`` into a
proximal objective with strong convexity modulus ``2 <e, c>``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import warnings

import numpy as np

from .exceptions import ConvergenceWarning
from .model import as_dual_weight, as_interior_direction, uniform_weight

__all__ = ["SubproblemSpec", "SubproblemResult", "psi", "solve_subproblem"]

_EPS = np.finfo(float).eps
# distance bound still counted as converged when round-off stalls the descent
STALL_TOL = 1e-8
# consecutive steps without a strict decrease that also count as a stall
FLAT_LIMIT = 50


@dataclass
class SubproblemSpec:
    """Data of one subproblem.

    ``x`` is the prox center, ``base`` selects the feasible set ``T(base)``.
    ``c=None`` means the uniform weight ``(1/m, ..., 1/m)``.
    """

    x: np.ndarray
    base: np.ndarray
    beta: float
    e: np.ndarray
    c: np.ndarray | None = None
    tol: float = 1e-12
    max_iters: int = 50_000

    def resolved(self, m):
        c = uniform_weight(m) if self.c is None else self.c
        c = as_dual_weight(c, m)
        e = as_interior_direction(self.e, m)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        return e, c


@dataclass
class SubproblemResult:
    z: np.ndarray
    c: np.ndarray
    iterations: int
    residual: float
    converged: bool
    psi_values: list = field(default_factory=list)


def psi(prob, spec, y):
    """Scalarized subproblem objective at ``y``."""
    e, c = spec.resolved(prob.m)
    y = np.asarray(y, dtype=float)
    return float(spec.beta * (prob.f(spec.x, y) @ c) + (e @ c) * (y @ y - 2.0 * (y @ spec.x)))


def _fixed_steps(T, base, gradient, y, L, sigma, tol, max_steps=2000):
    # projected gradient with step 1/L, kept while the distance bound shrinks
    best, best_res = y, np.inf
    for _ in range(max_steps):
        y_new = T.project(base, y - gradient(y) / L)
        res = 2.0 * L * float(np.linalg.norm(y_new - y)) / sigma
        if res >= best_res:
            break
        best, best_res, y = y_new, res, y_new
        if res <= tol:
            return best, res, True
    return best, best_res, False


def solve_subproblem(prob, spec, record=False):
    """Minimize the scalarized subproblem over ``T(spec.base)``.

    Projected gradient with a backtracking estimate ``L`` of the local
    curvature: a step is accepted when the quadratic upper model at ``y``
    dominates ``psi`` at the trial point, which makes ``psi`` monotonically
    non-increasing along the iterates. ``L`` only ever grows: shrinking it
    lets round-off in ``psi`` admit expanding steps near the minimizer.

    The run starts from the projection of ``x`` onto ``T(base)`` and stops
    when ``2 L ||y - y_next|| / sigma``, an upper bound on the distance to
    the minimizer, drops below ``spec.tol``. If round-off rejects a step
    before that (or ``psi`` stops decreasing for 50 steps), the run switches
    to plain ``1/L`` steps for as long as the bound keeps shrinking, and
    counts as converged when it ends below ``STALL_TOL``.

    Returns
    -------
    SubproblemResult
        ``z`` and the weight ``c`` used; ``converged=False`` (with a
        :class:`ConvergenceWarning`) when ``max_iters`` was reached.
    """
    f, T = prob.f, prob.T
    e, c = spec.resolved(prob.m)
    x = np.asarray(spec.x, dtype=float)
    base = np.asarray(spec.base, dtype=float)
    beta = float(spec.beta)
    ec = float(e @ c)
    sigma = 2.0 * ec

    def value(y):
        return beta * float(f(x, y) @ c) + ec * float(y @ y - 2.0 * (y @ x))

    def gradient(y):
        return beta * (c @ f.grad_y(x, y)) + sigma * (y - x)

    y = T.project(base, x)
    fy = value(y)
    history = [fy] if record else []
    L = sigma
    residual = np.inf
    it = 0
    converged = False
    flat = 0
    for it in range(1, spec.max_iters + 1):
        g = gradient(y)
        while True:
            y_new = T.project(base, y - g / L)
            d = y_new - y
            dd = float(d @ d)
            f_new = value(y_new)
            slack = 1e-13 * (1.0 + abs(fy))
            if f_new <= fy + float(g @ d) + 0.5 * L * dd + slack or dd == 0.0:
                break
            L *= 2.0
            if L > 1e30:
                break
        step_norm = np.sqrt(dd)
        residual = 2.0 * L * step_norm / sigma
        flat = flat + 1 if f_new >= fy else 0
        stalled = f_new > fy + slack or flat >= FLAT_LIMIT
        if f_new <= fy + slack:
            y, fy = y_new, min(f_new, fy)
        if record:
            history.append(fy)
        if residual <= spec.tol or step_norm <= 4 * _EPS * max(1.0, float(np.linalg.norm(y))):
            converged = True
            break
        if stalled:
            # round-off blocks the descent test; fixed 1/L steps still contract
            y, residual, converged = _fixed_steps(T, base, gradient, y, L, sigma, spec.tol)
            converged = converged or residual <= STALL_TOL
            break
        if L > 1e30:
            break
    if not converged:
        warnings.warn(f"subproblem solver stopped after {it} iterations "
                      f"(residual {residual:.2e})", ConvergenceWarning, stacklevel=2)
    return SubproblemResult(z=y, c=c, iterations=it, residual=float(residual),
                            converged=converged, psi_values=history)

"""Brute-force certificates for candidate solutions and subproblem answers.

Everything here works by sampling or gridding and touches the problem only
through ``f``, ``T.contains``/``T.project``/``T.bounds`` and ``K``; none of the
solver's projections or descent code is reused.

Certificates are one-sided. A nonnegative primal residual is evidence that
the candidate solves the problem at the sampling resolution; a negative one
comes with a witness ``y`` that proves it does not.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import product
from typing import Optional

import numpy as np

__all__ = ["Certificate", "vqep_residual", "dual_residual", "brute_force_subproblem",
           "certified"]

MIN_ACCEPTED = 10
N_PROJECTED = 200
# projections land on the boundary up to rounding
PROJECTED_TOL = 1e-12


@dataclass
class Certificate:
    primal_residual: float
    fix_distance: float
    dual_residual: float
    n_samples: int
    seed: int
    status: str = "ok"
    witness: Optional[list] = None
    dual_witness: Optional[list] = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _grid(lo, hi, per_dim):
    axes = [np.linspace(l, h, per_dim) for l, h in zip(lo, hi)]
    return np.array(list(product(*axes)))


def _samples(lo, hi, n_samples, rng):
    n = lo.size
    per_dim = max(2, int(np.ceil(n_samples ** (1.0 / n))))
    rand = rng.uniform(lo, hi, size=(n_samples, n))
    return np.vstack([rand, _grid(lo, hi, per_dim)])


def vqep_residual(prob, x_star, n_samples=10_000, seed=0):
    """Sampling certificate for ``x_star``.

    ``primal_residual`` is the minimum over sampled ``y in T(x_star)`` of
    ``max_i f_i(x_star, y)``; it is ``>= 0`` at a solution. Samples are drawn
    uniformly from a bounding box of ``T(x_star)`` plus a regular grid with
    ``ceil(n_samples ** (1/n))`` points per axis; non-members are rejected.
    The projections onto ``T(x_star)`` of the first 200 samples and
    ``x_star`` itself are added when they pass the membership test
    (to within ``1e-12``, since projections land on the boundary).

    ``status`` is ``"inconclusive"`` when fewer than 10 samples survive.
    """
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng(seed)
    lo, hi = prob.T.bounds(x_star)
    Y = _samples(lo, hi, n_samples, rng)
    # projected samples reach thin or degenerate T(x_star) that rejection misses
    P = np.array([prob.T.project(x_star, y) for y in Y[:N_PROJECTED]])
    P = np.vstack([P, x_star[None, :]])
    Y = np.vstack([Y[prob.T.contains_many(x_star, Y, tol=0.0)],
                   P[prob.T.contains_many(x_star, P, tol=PROJECTED_TOL)]])
    fix_distance = float(np.linalg.norm(prob.T.project(x_star, x_star) - x_star))
    dual, dual_wit = dual_residual(prob, x_star, n_samples=n_samples, seed=seed, return_witness=True)
    if Y.shape[0] < MIN_ACCEPTED:
        return Certificate(primal_residual=float("nan"), fix_distance=fix_distance,
                           dual_residual=dual, n_samples=int(Y.shape[0]), seed=seed,
                           status="inconclusive", dual_witness=dual_wit)
    vals = np.max(prob.f.over_y(x_star, Y), axis=1)
    j = int(np.argmin(vals))
    return Certificate(primal_residual=float(vals[j]), fix_distance=fix_distance,
                       dual_residual=dual, n_samples=int(Y.shape[0]), seed=seed,
                       witness=Y[j].tolist(), dual_witness=dual_wit)


def dual_residual(prob, x_star, n_samples=10_000, seed=0, return_witness=False):
    """Maximum over sampled ``y in K`` of ``max_i f_i(y, x_star)``.

    Values ``<= tol`` indicate membership in the dual solution set at the
    sampling resolution.
    """
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng([seed, 1])
    lo, hi = prob.K.bounds()
    X = _samples(lo, hi, n_samples, rng)
    X = X[prob.K.contains_many(X, tol=0.0)]
    if X.shape[0] == 0:
        return (float("nan"), None) if return_witness else float("nan")
    vals = np.max(prob.f.over_x(X, x_star), axis=1)
    j = int(np.argmax(vals))
    if return_witness:
        return float(vals[j]), X[j].tolist()
    return float(vals[j])


def certified(cert, tol=1e-4):
    """Primal residual ``>= -tol`` and fixed-point distance ``<= tol``."""
    return (cert is not None and cert.status == "ok"
            and cert.primal_residual >= -tol and cert.fix_distance <= tol)


def _psi_values(prob, spec, Y):
    m = prob.m
    c = np.full(m, 1.0 / m) if spec.c is None else np.asarray(spec.c, dtype=float)
    e = np.asarray(spec.e, dtype=float)
    x = np.asarray(spec.x, dtype=float)
    F = prob.f.over_y(x, Y) @ c
    return spec.beta * F + float(e @ c) * (np.einsum("ki,ki->k", Y, Y) - 2.0 * (Y @ x))


def brute_force_subproblem(prob, spec, grid_step=1e-3, points_per_axis=None):
    """Grid minimizer of the scalarized subproblem over ``T(spec.base)``.

    Starts with a grid over the bounding box of ``T(base)`` and repeatedly
    re-grids a window of four cells around the best feasible point, until
    the spacing is at most ``grid_step``. Only ``n <= 3`` is supported.
    """
    n = prob.n
    if n > 3:
        raise ValueError(f"grid oracle supports n <= 3, got n = {n}")
    if points_per_axis is None:
        points_per_axis = {1: 20001, 2: 401, 3: 61}[n]
    base = np.asarray(spec.base, dtype=float)
    lo, hi = prob.T.bounds(base)
    best = None
    while True:
        G = _grid(lo, hi, points_per_axis)
        G = G[prob.T.contains_many(base, G, tol=0.0)]
        step = float(np.max((hi - lo) / (points_per_axis - 1)))
        if G.shape[0] == 0:
            if best is None:
                raise ValueError("no feasible grid point; refine points_per_axis")
        else:
            vals = _psi_values(prob, spec, G)
            j = int(np.argmin(vals))
            if best is None or vals[j] <= best[1]:
                best = (G[j], float(vals[j]))
        if step <= grid_step:
            return best[0].copy()
        glo, ghi = prob.T.bounds(base)
        half = 4.0 * step
        lo = np.maximum(glo, best[0] - half)
        hi = np.minimum(ghi, best[0] + half)

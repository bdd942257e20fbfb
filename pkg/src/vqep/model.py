"""Problem definitions: vector bifunctions, the orthant order and constraint maps.

The ordering cone is fixed to the nonnegative orthant ``C = R^m_+``, so
every cone test is a componentwise comparison.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import TOL_FEAS, Box, Polyhedron, as_point, project_box_halfspace_ball

__all__ = [
    "in_neg_cone",
    "not_in_neg_interior",
    "scalarize",
    "as_dual_weight",
    "as_interior_direction",
    "uniform_weight",
    "Bifunction",
    "FunctionBifunction",
    "ZeroBifunction",
    "ConstraintMap",
    "FixedSetMap",
    "CompoundMap",
    "ProductMap",
    "VqepProblem",
    "check_b1",
    "check_midpoint_convexity",
    "check_subgradients",
    "check_projection",
]


def in_neg_cone(v, tol=TOL_FEAS):
    """True iff ``v`` lies in ``-R^m_+`` up to ``tol``."""
    return bool(np.max(np.asarray(v, dtype=float)) <= tol)


def not_in_neg_interior(v):
    """True iff ``v`` is outside ``-int(R^m_+)``, i.e. some component is >= 0."""
    return bool(np.max(np.asarray(v, dtype=float)) >= 0.0)


def scalarize(v, c):
    """Inner product ``<v, c>`` of a cone value with a dual weight."""
    v = as_point(v, name="cone value")
    c = as_point(c, v.size, name="weight")
    return float(v @ c)


def as_dual_weight(c, m):
    c = as_point(c, m, name="dual weight")
    if np.any(c < 0) or not np.any(c > 0):
        raise ValueError(f"dual weight must be nonnegative and nonzero, got {c}")
    return c


def as_interior_direction(e, m):
    e = as_point(e, m, name="interior direction")
    if np.any(e <= 0):
        raise ValueError(f"interior direction must be strictly positive, got {e}")
    return e


def uniform_weight(m):
    return np.full(m, 1.0 / m)


class Bifunction:
    """Vector bifunction ``f: R^n x R^n -> R^m``.

    Subclasses implement :meth:`__call__` and usually :meth:`grad_y`;
    the default gradient is a central finite difference, which is adequate
    only for smooth components. The vectorized ``over_x``/``over_y``
    helpers are used by the sampling oracle and may be overridden for speed.

    Contract: ``f(x, x) = 0`` and each component is convex in ``y``.
    """

    m: int = 1
    smooth: bool = True
    fd_step: float = 1e-6

    def __call__(self, x, y):
        raise NotImplementedError

    def grad_y(self, x, y):
        """Jacobian in the second argument, shape ``(m, n)``."""
        y = np.asarray(y, dtype=float)
        n = y.size
        jac = np.empty((self.m, n))
        for j in range(n):
            step = self.fd_step * max(1.0, abs(y[j]))
            yp, ym = y.copy(), y.copy()
            yp[j] += step
            ym[j] -= step
            jac[:, j] = (self(x, yp) - self(x, ym)) / (2 * step)
        return jac

    def subgrad_y(self, x, y, i):
        """A subgradient of the ``i``-th component of ``f(x, .)`` at ``y``."""
        return self.grad_y(x, y)[i]

    def over_y(self, x, Y):
        """Rows ``f(x, Y[k])``, shape ``(len(Y), m)``."""
        return np.array([self(x, y) for y in np.atleast_2d(Y)])

    def over_x(self, X, y):
        """Rows ``f(X[k], y)``, shape ``(len(X), m)``."""
        return np.array([self(x, y) for x in np.atleast_2d(X)])


class FunctionBifunction(Bifunction):
    """Wrap plain callables as a :class:`Bifunction`."""

    def __init__(self, func, m, grad=None, smooth=True):
        self._func = func
        self._grad = grad
        self.m = int(m)
        self.smooth = smooth

    def __call__(self, x, y):
        return np.asarray(self._func(np.asarray(x, float), np.asarray(y, float)), dtype=float).reshape(self.m)

    def grad_y(self, x, y):
        if self._grad is None:
            return super().grad_y(x, y)
        return np.asarray(self._grad(np.asarray(x, float), np.asarray(y, float)), dtype=float).reshape(self.m, -1)


class ZeroBifunction(Bifunction):
    """``f == 0``; every point of ``Fix(T)`` solves the problem."""

    def __init__(self, m=1):
        self.m = m

    def __call__(self, x, y):
        return np.zeros(self.m)

    def grad_y(self, x, y):
        return np.zeros((self.m, np.asarray(y).size))

    def over_y(self, x, Y):
        return np.zeros((np.atleast_2d(Y).shape[0], self.m))

    def over_x(self, X, y):
        return np.zeros((np.atleast_2d(X).shape[0], self.m))


class ConstraintMap:
    """Multivalued map ``T`` with closed convex values in ``K``.

    Lower semicontinuity, demiclosedness and quasi nonexpansiveness are
    documented properties of each shipped map, not runtime checks.
    """

    def project(self, x, p):
        """Euclidean projection of ``p`` onto ``T(x)``."""
        raise NotImplementedError

    def step(self, x, p):
        """Displacement ``project(x, p) - p``.

        Subclasses may compute it without the cancellation of the plain
        difference; the outer loop takes halfspace normals from it.
        """
        p = np.asarray(p, dtype=float)
        return self.project(x, p) - p

    def contains(self, x, y, tol=TOL_FEAS):
        y = np.asarray(y, dtype=float)
        return bool(np.linalg.norm(self.project(x, y) - y) <= tol)

    def contains_many(self, x, Y, tol=TOL_FEAS):
        return np.array([self.contains(x, y, tol) for y in np.atleast_2d(Y)], dtype=bool)

    def bounds(self, x):
        """A box containing ``T(x)``."""
        raise NotImplementedError


class FixedSetMap(ConstraintMap):
    """``T(x) = S`` for a fixed box or polyhedron ``S``."""

    def __init__(self, S):
        self.S = S

    def project(self, x, p):
        return self.S.project(p)

    def contains(self, x, y, tol=TOL_FEAS):
        return self.S.contains(y, tol)

    def contains_many(self, x, Y, tol=TOL_FEAS):
        return self.S.contains_many(Y, tol)

    def bounds(self, x):
        return self.S.bounds()


class CompoundMap(ConstraintMap):
    """``T(x) = box ∩ H(x) ∩ B(x)`` with a state-dependent halfspace and ball.

    Parameters
    ----------
    box : Box
    halfspace : callable, optional
        ``x -> Halfspace`` (or None for no constraint).
    ball : callable, optional
        ``x -> Ball`` (or None).
    """

    def __init__(self, box: Box, halfspace: Optional[Callable] = None,
                 ball: Optional[Callable] = None):
        self.box = box
        self._halfspace = halfspace
        self._ball = ball

    def sets(self, x):
        h = self._halfspace(x) if self._halfspace is not None else None
        b = self._ball(x) if self._ball is not None else None
        return h, b

    def project(self, x, p):
        h, b = self.sets(x)
        return project_box_halfspace_ball(p, self.box.lo, self.box.hi, h, b)

    def step(self, x, p):
        h, b = self.sets(x)
        return project_box_halfspace_ball(p, self.box.lo, self.box.hi, h, b, return_step=True)

    def contains_many(self, x, Y, tol=TOL_FEAS):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        ok = self.box.contains_many(Y, tol)
        h, b = self.sets(x)
        if h is not None and not h.is_trivial:
            # unnormalized, so that boundary points pass exactly at tol = 0
            ok &= Y @ h.normal <= h.offset + tol * h._norm
        if b is not None:
            ok &= np.linalg.norm(Y - b.center, axis=1) <= b.radius + tol
        return ok

    def contains(self, x, y, tol=TOL_FEAS):
        return bool(self.contains_many(x, y, tol)[0])

    def bounds(self, x):
        lo, hi = self.box.bounds()
        _, b = self.sets(x)
        if b is not None:
            lo = np.maximum(lo, b.center - b.radius)
            hi = np.minimum(hi, b.center + b.radius)
            hi = np.maximum(hi, lo)
        return lo, hi


class ProductMap(ConstraintMap):
    """Cartesian product of block maps; block ``i`` acts on ``p[slices[i]]``.

    Each block map still receives the full profile ``x``.
    """

    def __init__(self, blocks: Sequence[ConstraintMap], slices: Sequence[slice]):
        if len(blocks) != len(slices):
            raise ValueError("need one slice per block")
        self.blocks = list(blocks)
        self.slices = list(slices)

    def project(self, x, p):
        p = np.asarray(p, dtype=float)
        out = np.empty_like(p)
        for blk, sl in zip(self.blocks, self.slices):
            out[sl] = blk.project(x, p[sl])
        return out

    def step(self, x, p):
        p = np.asarray(p, dtype=float)
        out = np.empty_like(p)
        for blk, sl in zip(self.blocks, self.slices):
            out[sl] = blk.step(x, p[sl])
        return out

    def contains_many(self, x, Y, tol=TOL_FEAS):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        ok = np.ones(Y.shape[0], dtype=bool)
        for blk, sl in zip(self.blocks, self.slices):
            ok &= blk.contains_many(x, Y[:, sl], tol)
        return ok

    def contains(self, x, y, tol=TOL_FEAS):
        return bool(self.contains_many(x, y, tol)[0])

    def bounds(self, x):
        los, his = zip(*(blk.bounds(x) for blk in self.blocks))
        return np.concatenate(los), np.concatenate(his)


@dataclass
class VqepProblem:
    """Vector quasi-equilibrium problem: find ``x in T(x)`` with
    ``f(x, y)`` outside ``-int(C)`` for every ``y in T(x)``.
    """

    f: Bifunction
    T: ConstraintMap
    K: Box | Polyhedron
    name: str = "vqep"
    known_solutions: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.K, (Box, Polyhedron)):
            raise TypeError("K must be a Box or a Polyhedron")

    @property
    def n(self):
        return self.K.dim

    @property
    def m(self):
        return self.f.m


# -- property checks -------------------------------------------------------------------
# Each returns the worst observed excess; callers compare it with their tolerance.
# Excesses are measured relative to max(1, |values|) because the shipped families
# reach values far beyond 1, where an absolute 1e-9 is below float resolution.


def _rel(excess, *values):
    scale = np.maximum(1.0, np.max(np.abs(np.column_stack(values)), axis=1))
    return excess / scale


def check_b1(f, X):
    """Largest ``|f_i(x, x)|`` over the rows of ``X`` (should be exactly 0)."""
    return float(max(np.max(np.abs(f(x, x))) for x in np.atleast_2d(X)))


def check_midpoint_convexity(f, X, Y, Z):
    """Worst ``f_i(x, (y+z)/2) - (f_i(x, y) + f_i(x, z)) / 2`` (relative)."""
    worst = -np.inf
    for x, y, z in zip(X, Y, Z):
        fy, fz, fm = f(x, y), f(x, z), f(x, 0.5 * (y + z))
        worst = max(worst, float(np.max(_rel(fm - 0.5 * (fy + fz), fy, fz, fm))))
    return worst


def check_subgradients(f, X, Y, Yp, fd_step=1e-6):
    """Subgradient inequality excess and gradient-vs-central-difference error.

    Returns ``(ineq, fd)``: the worst relative excess of
    ``f_i(x, y) + <s_i, y' - y> - f_i(x, y')`` and the worst relative error
    ``|s - s_fd| / max(1, |s|)`` over coordinates, both maximized over rows.
    """
    ineq, fd = -np.inf, 0.0
    for x, y, yp in zip(X, Y, Yp):
        jac = f.grad_y(x, y)
        fy, fyp = f(x, y), f(x, yp)
        lin = fy + jac @ (yp - y)
        ineq = max(ineq, float(np.max(_rel(lin - fyp, fy, fyp, lin))))
        if f.smooth:
            num = np.empty_like(jac)
            for j in range(y.size):
                h = fd_step * max(1.0, abs(y[j]))
                up, dn = y.copy(), y.copy()
                up[j] += h
                dn[j] -= h
                num[:, j] = (f(x, up) - f(x, dn)) / (2 * h)
            err = np.abs(num - jac) / np.maximum(1.0, np.abs(jac))
            fd = max(fd, float(np.max(err)))
    return ineq, fd


def check_projection(project, member, P, Z):
    """Worst ``<z - q, p - q>`` with ``q = project(p)`` over pairs ``(p, z)``.

    Pairs whose ``z`` fails ``member`` are skipped. Returns ``(worst, used)``.
    """
    worst, used = -np.inf, 0
    for p, z in zip(P, Z):
        if not member(z):
            continue
        q = project(p)
        worst = max(worst, float((z - q) @ (p - q)))
        used += 1
    return worst, used

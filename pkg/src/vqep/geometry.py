"""Bregman distance for the squared norm and Euclidean projections.

With ``g(x) = ||x||^2`` the Bregman distance is the squared Euclidean
distance and the Bregman projection is the metric projection, so every
projection in this module is an ordinary nearest-point map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
import warnings

import numpy as np
from scipy.optimize import brentq, lsq_linear, nnls

from .exceptions import ConvergenceWarning, InfeasibleError

__all__ = [
    "TOL_FEAS",
    "as_point",
    "BregmanGeometry",
    "SQUARED_NORM",
    "bregman_distance",
    "Halfspace",
    "Box",
    "Ball",
    "Polyhedron",
    "project_halfspace",
    "project_halfspaces_exact",
    "project_polyhedron_dykstra",
    "project_polyhedron",
    "project_box",
    "project_box_halfspace_ball",
]

TOL_FEAS = 1e-9


def as_point(x, dim=None, name="point"):
    """Return ``x`` as a finite 1-D float array, optionally checking its size."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite coordinates: {arr}")
    if dim is not None and arr.size != dim:
        raise ValueError(f"dimension mismatch: {name} has {arr.size} coordinates, expected {dim}")
    return arr


@dataclass(frozen=True)
class BregmanGeometry:
    """Auxiliary function ``g`` with its gradient.

    Only the squared Euclidean norm is shipped (:data:`SQUARED_NORM`).
    """

    name: str = "squared_norm"

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ x)

    def grad(self, x):
        return 2.0 * np.asarray(x, dtype=float)

    def distance(self, x, y):
        # g(x) - g(y) - <x - y, g'(y)> collapses to ||x - y||^2; computing it
        # as a squared difference avoids cancellation.
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return float(d @ d)


SQUARED_NORM = BregmanGeometry()


def bregman_distance(x, y, geometry=SQUARED_NORM):
    """Bregman distance ``D_g(x, y)``; equals ``||x - y||^2`` for the squared norm.

    >>> bregman_distance([3.0, 4.0], [0.0, 0.0])
    25.0
    """
    x = as_point(x, name="x")
    y = as_point(y, x.size, name="y")
    return geometry.distance(x, y)


@dataclass(frozen=True)
class Halfspace:
    """The set ``{z : <normal, z> <= offset}``.

    A zero normal with a nonnegative offset is the whole space; such
    "trivial" halfspaces come out of the regularization step when two
    iterates coincide.
    """

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", as_point(self.normal, name="normal"))
        object.__setattr__(self, "offset", float(self.offset))
        if not np.isfinite(self.offset):
            raise ValueError("halfspace offset must be finite")
        nrm = float(np.sqrt(self.normal @ self.normal))
        object.__setattr__(self, "_norm", nrm)

    @property
    def dim(self):
        return self.normal.size

    @property
    def is_trivial(self):
        return self._norm == 0.0

    def value(self, z):
        """Signed violation ``<normal, z> - offset``."""
        return float(self.normal @ np.asarray(z, dtype=float) - self.offset)

    def contains(self, z, tol=TOL_FEAS):
        return self.value(z) <= tol

    def normalized(self):
        return self.normal / self._norm, self.offset / self._norm


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lo, name="lo")
        hi = as_point(self.hi, lo.size, name="hi")
        if np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def project(self, p):
        return project_box(p, self.lo, self.hi)

    def contains(self, z, tol=TOL_FEAS):
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lo - tol) and np.all(z <= self.hi + tol))

    def contains_many(self, Z, tol=TOL_FEAS):
        Z = np.atleast_2d(Z)
        return np.all((Z >= self.lo - tol) & (Z <= self.hi + tol), axis=1)

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def halfspaces(self):
        n = self.dim
        eye = np.eye(n)
        out = [Halfspace(eye[i], self.hi[i]) for i in range(n)]
        out += [Halfspace(-eye[i], -self.lo[i]) for i in range(n)]
        return out


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center, name="center"))
        r = float(self.radius)
        if not np.isfinite(r) or r < 0:
            raise ValueError("ball radius must be finite and nonnegative")
        object.__setattr__(self, "radius", r)

    def contains(self, z, tol=TOL_FEAS):
        return float(np.linalg.norm(np.asarray(z, dtype=float) - self.center)) <= self.radius + tol

    def project(self, p):
        p = as_point(p, self.center.size)
        d = p - self.center
        nrm = np.linalg.norm(d)
        if nrm <= self.radius:
            return p
        return self.center + d * (self.radius / nrm)


@dataclass(frozen=True)
class Polyhedron:
    """Finite intersection of halfspaces; the ambient set ``K`` may be one."""

    constraints: tuple = field(default_factory=tuple)

    def __post_init__(self):
        cons = tuple(self.constraints)
        if not cons:
            raise ValueError("polyhedron needs at least one halfspace")
        object.__setattr__(self, "constraints", cons)

    @property
    def dim(self):
        return self.constraints[0].dim

    def project(self, p):
        return project_polyhedron(p, self.constraints)

    def contains(self, z, tol=TOL_FEAS):
        return all(h.contains(z, tol) for h in self.constraints)

    def contains_many(self, Z, tol=TOL_FEAS):
        A = np.array([h.normal for h in self.constraints])
        b = np.array([h.offset for h in self.constraints])
        return np.all(np.atleast_2d(Z) @ A.T <= b + tol, axis=1)

    def halfspaces(self):
        return list(self.constraints)

    def bounds(self):
        """Bounding box by linear programming; raises if unbounded."""
        from scipy.optimize import linprog

        A = np.array([h.normal for h in self.constraints])
        b = np.array([h.offset for h in self.constraints])
        n = self.dim
        lo, hi = np.empty(n), np.empty(n)
        for i in range(n):
            for sign, target in ((1.0, lo), (-1.0, hi)):
                cost = np.zeros(n)
                cost[i] = sign
                res = linprog(cost, A_ub=A, b_ub=b, bounds=[(None, None)] * n)
                if res.status == 2:
                    raise InfeasibleError("empty polyhedron")
                if res.status != 0:
                    raise ValueError("polyhedron is unbounded; supply a bounding box")
                target[i] = sign * res.fun
        return lo, hi


def _stack(halfspaces, n, tol):
    """Normalized constraint matrix, dropping whole-space entries."""
    rows, rhs, norms = [], [], []
    for h in halfspaces:
        if h.dim != n:
            raise ValueError(f"dimension mismatch: halfspace in R^{h.dim}, point in R^{n}")
        if h.is_trivial:
            if h.offset < -tol:
                raise InfeasibleError("halfspace with zero normal and negative offset is empty")
            continue
        rows.append(h.normal)
        rhs.append(h.offset)
        norms.append(h._norm)
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    norms = np.array(norms)
    return np.array(rows) / norms[:, None], np.array(rhs) / norms


def project_halfspace(p, h):
    """Metric projection onto a single halfspace.

    >>> project_halfspace([2.0, 0.0], Halfspace([1.0, 1.0], 1.0))
    array([ 1.5, -0.5])
    """
    p = as_point(p, h.dim)
    if h.is_trivial:
        raise ValueError("cannot project onto a halfspace with zero normal")
    excess = h.value(p)
    if excess <= 0.0:
        return p
    return p - (excess / (h.normal @ h.normal)) * h.normal


def _affine_projection(p, A, b):
    """Projection onto ``{q : A q = b}`` and its multipliers.

    Uses an orthonormal null-space basis, ``q = N N^T p + A^+ b``, instead of
    ``p - A^T lam``: with nearly parallel rows the multipliers blow up and the
    latter form cancels catastrophically.
    """
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-12 * s[0]))
    if rank < A.shape[0]:
        return None, None  # dependent rows; a smaller subset covers this case
    Vr = Vt[:rank]
    q = Vr.T @ ((U.T @ b) / s) + (p - Vr.T @ (Vr @ p))
    lam = (U / s) @ (Vr @ (p - q))
    return q, lam


def project_halfspaces_exact(p, halfspaces, tol=TOL_FEAS):
    """Exact projection onto the intersection of at most three halfspaces.

    Every subset of constraints is tried as the active set; each gives an
    equality-constrained least-distance problem solved in closed form.
    The feasible candidate closest to ``p`` is the projection.

    Raises
    ------
    InfeasibleError
        If no candidate is feasible within ``tol``.
    """
    p = as_point(p)
    A, b = _stack(halfspaces, p.size, tol)
    k = A.shape[0]
    if k > 3:
        raise ValueError(f"exact enumeration supports at most 3 halfspaces, got {k}")
    if k == 0 or np.all(A @ p <= b + tol):
        return p

    best, best_dist = None, np.inf
    fallback, fallback_viol = None, np.inf
    for r in range(1, k + 1):
        for subset in combinations(range(k), r):
            S = list(subset)
            q, lam = _affine_projection(p, A[S], b[S])
            if q is None or np.max(np.abs(A[S] @ q - b[S])) > tol:
                continue  # inconsistent parallel equalities
            viol = float(np.max(A @ q - b))
            if viol <= tol:
                dist = np.linalg.norm(q - p)
                if dist < best_dist:
                    best, best_dist = q, dist
            elif np.all(lam >= 0) and viol < fallback_viol:
                fallback, fallback_viol = q, viol
    if best is None:
        # round-off can push every candidate just past ``tol``; keep the
        # KKT point with the smallest violation if it is still tiny
        if fallback is not None and fallback_viol <= 1e3 * tol:
            return fallback
        raise InfeasibleError("intersection of halfspaces is empty")
    return best


def project_polyhedron_dykstra(p, halfspaces, tol=TOL_FEAS, max_sweeps=10_000,
                               full_output=False):
    """Dykstra's alternating projection onto an intersection of halfspaces.

    Unlike plain alternating projections the correction terms make the
    iterates converge to the projection of ``p`` itself, not to an
    arbitrary feasible point.

    Parameters
    ----------
    p : array_like
        Point to project.
    halfspaces : sequence of Halfspace
    tol : float
        Stop once a full sweep moves the iterate by less than ``tol`` and
        every constraint holds within ``tol``.
    max_sweeps : int
    full_output : bool
        Also return a dict with ``converged``, ``sweeps`` and ``violation``.

    Returns
    -------
    q : ndarray
        Final iterate (the best available one when not converged, in which
        case a :class:`ConvergenceWarning` is emitted).
    """
    p = as_point(p)
    A, b = _stack(halfspaces, p.size, tol)
    k = A.shape[0]
    x = p.copy()
    if k == 0 or np.all(A @ x <= b + tol):
        info = {"converged": True, "sweeps": 0, "violation": 0.0}
        return (x, info) if full_output else x

    incr = np.zeros((k, p.size))
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        x_prev = x.copy()
        for i in range(k):
            y = x + incr[i]
            excess = A[i] @ y - b[i]
            x = y - excess * A[i] if excess > 0.0 else y
            incr[i] = y - x
        viol = float(np.max(A @ x - b))
        if np.linalg.norm(x - x_prev) <= tol and viol <= tol:
            converged = True
            break
    viol = float(max(np.max(A @ x - b), 0.0))
    if not converged:
        warnings.warn(f"Dykstra stopped after {max_sweeps} sweeps (violation {viol:.2e})",
                      ConvergenceWarning, stacklevel=2)
    if full_output:
        return x, {"converged": converged, "sweeps": sweep, "violation": viol}
    return x


def _nnls_checked(E, f):
    """``argmin ||E u - f||`` over ``u >= 0``.

    scipy's ``nnls`` is fast but can stop at a non-optimal point on
    degenerate data, so its KKT conditions are checked and BVLS is used
    when they fail.
    """
    try:
        u, _ = nnls(E, f, maxiter=50 * max(E.shape))
    except RuntimeError:
        u = None
    if u is not None:
        g = E.T @ (E @ u - f)
        scale = 1e-10 * max(1.0, float(np.max(np.abs(E))))
        if np.all(g >= -scale) and np.all(np.abs(g[u > 0]) <= scale):
            return u
    res = lsq_linear(E, f, bounds=(0.0, np.inf), method="bvls", tol=1e-15)
    return res.x


def project_polyhedron(p, halfspaces, tol=TOL_FEAS):
    """Projection onto a polyhedron of any size via least-distance programming.

    The projection ``min ||u|| s.t. -A u >= A p - b`` is converted to a
    nonnegative least-squares problem (Lawson and Hanson's LDP reduction),
    which scipy solves with an exact active-set method. The result is
    polished by re-solving the equality system of the detected active set.
    """
    p = as_point(p)
    A, b = _stack(halfspaces, p.size, tol)
    if A.shape[0] == 0:
        return p
    h = A @ p - b
    if np.all(h <= tol):
        return p

    n = p.size
    E = np.vstack([-A.T, h[None, :]])
    f = np.zeros(n + 1)
    f[n] = 1.0
    u = _nnls_checked(E, f)
    r = E @ u - f
    # the reported rnorm is not reliable for degenerate inputs; recompute it
    if np.linalg.norm(r) <= 1e-14 or abs(r[n]) <= 1e-300:
        raise InfeasibleError("polyhedron is empty")
    q = p - r[:n] / r[n]

    slack = A @ q - b
    active = np.flatnonzero(slack >= -1e-8)
    if active.size:
        AS = A[active]
        lam = np.linalg.lstsq(AS @ AS.T, AS @ p - b[active], rcond=None)[0]
        q_pol = p - AS.T @ lam
        if np.all(A @ q_pol - b <= max(np.max(slack), 0.0) + 1e-13):
            q = q_pol
    if np.max(A @ q - b) > max(tol, 1e-7):
        raise InfeasibleError(
            f"polyhedron appears empty (residual violation {np.max(A @ q - b):.2e})")
    return q


def project_box(p, lo, hi):
    """Componentwise clamp of ``p`` into ``[lo, hi]``."""
    p = as_point(p)
    lo = as_point(lo, p.size, name="lo")
    hi = as_point(hi, p.size, name="hi")
    if np.any(lo > hi):
        raise ValueError("box needs lo <= hi componentwise")
    return np.clip(p, lo, hi)


def _halfspace_multiplier(w, s, a, b, lo, hi, tol):
    """Smallest ``lam >= 0`` with ``<a, clip((w - lam a)/s)> <= b``.

    The left side is piecewise linear and nonincreasing in ``lam``, with
    breakpoints where a coordinate hits a bound, so the root is found
    exactly by locating its segment.
    """
    z0 = np.clip(w / s, lo, hi)
    if a @ z0 <= b:
        return 0.0
    nz = a != 0
    bps = np.concatenate([(w[nz] - s * lo[nz]) / a[nz], (w[nz] - s * hi[nz]) / a[nz]])
    bps = np.unique(bps[bps > 0.0])
    Z = np.clip((w[None, :] - bps[:, None] * a[None, :]) / s, lo, hi)
    hv = Z @ a - b
    hit = np.flatnonzero(hv <= 0.0)
    if hit.size == 0:
        if bps.size and hv[-1] <= tol:
            return float(bps[-1])
        raise InfeasibleError("box and halfspace do not intersect")
    j = hit[0]
    left = 0.0 if j == 0 else bps[j - 1]
    hl = a @ z0 - b if j == 0 else hv[j - 1]
    right, hr = bps[j], hv[j]
    if hl == hr:
        return float(right)
    return float(left + (right - left) * hl / (hl - hr))


def project_box_halfspace_ball(p, lo, hi, halfspace=None, ball=None, tol=TOL_FEAS,
                               return_step=False):
    """Exact projection onto ``box ∩ halfspace ∩ ball`` (either may be omitted).

    Dualizing the halfspace (multiplier ``lam``) and the ball (``mu``) leaves
    a separable problem over the box with solution
    ``clip((p + mu c - lam a) / (1 + mu))``. For fixed ``mu`` the optimal
    ``lam`` is found exactly; the ball residual is monotone in ``mu``, so
    ``mu`` is located by bracketing and Brent's method.

    With ``return_step=True`` the displacement ``q - p`` is returned instead
    of ``q``. It is assembled from the multipliers, so its direction stays
    accurate when it is far smaller than ``p`` itself.
    """
    p = as_point(p)
    n = p.size
    lo = as_point(lo, n, name="lo")
    hi = as_point(hi, n, name="hi")
    if halfspace is not None and halfspace.is_trivial:
        if halfspace.offset < -tol:
            raise InfeasibleError("empty halfspace")
        halfspace = None
    if halfspace is not None:
        a, b = halfspace.normalized()
    else:
        a, b = np.zeros(n), 0.0
    c = ball.center if ball is not None else np.zeros(n)

    def point(mu, step=False):
        w = p + mu * c
        s = 1.0 + mu
        lam = 0.0 if halfspace is None else _halfspace_multiplier(w, s, a, b, lo, hi, tol)
        q = np.clip((w - lam * a) / s, lo, hi)
        if not step:
            return q
        u = (mu * (c - p) - lam * a) / s
        low, high = q <= lo, q >= hi
        u[low] = (lo - p)[low]
        u[high] = (hi - p)[high]
        return u

    def done(mu):
        return point(mu, step=return_step)

    z = point(0.0)
    if ball is None:
        return done(0.0)
    r = ball.radius
    if np.linalg.norm(z - c) <= r:
        return done(0.0)
    if r == 0.0:
        inside = np.all(c >= lo - tol) and np.all(c <= hi + tol)
        if inside and (halfspace is None or a @ c <= b + tol):
            return c - p if return_step else c.copy()
        raise InfeasibleError("degenerate ball center lies outside the other sets")

    def excess(mu):
        return float(np.linalg.norm(point(mu) - c) - r)

    mu_hi = 1.0
    while excess(mu_hi) > 0.0:
        mu_hi *= 4.0
        if mu_hi > 1e18:
            if excess(mu_hi) <= tol:
                return done(mu_hi)
            raise InfeasibleError("ball does not meet box/halfspace")
    mu = brentq(excess, 0.0, mu_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if excess(mu) > 0.0:
        # land on the feasible side of the root
        mu = mu * (1 + 1e-12) + 1e-15
    return done(mu)

"""Strongly convergent extragradient iteration with linesearch.

One outer step, starting from ``v``:

1. ``x = P_{T(v)}(v)``
2. ``z`` solves the scalarized prox subproblem over ``T(v)``
3. stop with solution ``x`` if ``z == v``
4. backtrack on ``[x, z]`` to get ``y``; the set ``H = {u : f(y, u) in -C}``
   joins the running intersection ``K_k``
5. ``w = P_{K_k}(x)``
6. ``v_next = P_{L ∩ M ∩ N}(v0)`` for three halfspaces built from
   ``x, w, v`` and the anchor ``v0``.

Anchoring every step at ``v0`` is what makes the iterates converge
strongly; ``||v_k - v0||`` is non-decreasing along the run.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import time
from typing import Callable, Optional, Sequence, Union
import warnings

import numpy as np
from scipy.optimize import minimize

from .exceptions import ConvergenceWarning, InfeasibleError, InvariantViolation
from .geometry import (
    Halfspace,
    as_point,
    bregman_distance,
    project_halfspaces_exact,
    project_polyhedron,
    project_polyhedron_dykstra,
)
from .linesearch import armijo_search
from .model import as_interior_direction, uniform_weight
from .subsolver import SubproblemSpec, solve_subproblem

__all__ = [
    "SemlParams",
    "Cut",
    "SemlState",
    "Terminal",
    "SolveReport",
    "fixed_point_step",
    "build_L",
    "build_M",
    "build_N",
    "project_Kk",
    "seml_step",
    "solve",
]

Schedule = Union[float, Sequence[float], Callable[[int], float]]

# Differences at this relative size are rounding noise, not directions.
_DEGENERATE = 1e-13
# outer-approximation rounds between attempts at a smooth polish of P_{K_k}
_POLISH_EVERY = 5
# distance to a cut boundary below which more planes cannot help
_ROUNDOFF = 64 * np.finfo(float).eps


def _schedule_value(schedule, k):
    if callable(schedule):
        return float(schedule(k))
    if np.ndim(schedule) == 0:
        return float(schedule)
    seq = list(schedule)
    return float(seq[min(k, len(seq) - 1)])


@dataclass
class SemlParams:
    """Parameters of the outer iteration.

    ``beta``, ``gamma`` and ``e`` accept a constant, a sequence (the last
    entry is reused past its end) or a callable of the iteration index.
    ``e=None`` means the all-ones direction, ``c=None`` the uniform weight.
    """

    delta: float = 1e-3
    theta: float = 0.5
    beta: Schedule = 1.0
    gamma: Schedule = 1.0
    e: Optional[Union[np.ndarray, Callable[[int], np.ndarray]]] = None
    c: Optional[np.ndarray] = None
    eps_stop: float = 1e-6
    eps_fix: float = 1e-8
    max_outer: int = 5_000
    ell_max: int = 60
    tol_inner: float = 1e-12
    inner_max_iters: int = 50_000
    cut_tol: float = 1e-9
    cut_abs_tol: float = 1e-7
    max_cut_rounds: int = 500
    planes_per_cut: int = 32
    max_cuts: Optional[int] = None
    kk_method: str = "nnls"
    membership_tol: float = 1e-7
    norm_bound: float = 1e8
    check_invariants: bool = True
    c1_samples: int = 0
    c1_tol: float = 1e-5
    seed: int = 0
    keep_trace: bool = True
    certify: bool = True
    oracle_samples: int = 10_000

    def __post_init__(self):
        if not (0 < self.delta < 1 and 0 < self.theta < 1):
            raise ValueError("delta and theta must lie in (0, 1)")
        if self.eps_stop <= 0 or self.eps_fix < 0:
            raise ValueError("stopping tolerances must be positive")
        if self.kk_method not in ("nnls", "dykstra"):
            raise ValueError("kk_method must be 'nnls' or 'dykstra'")

    def beta_k(self, k):
        b = _schedule_value(self.beta, k)
        if not b > 0:
            raise ValueError(f"beta_{k} = {b} is not positive")
        return b

    def gamma_k(self, k):
        g = _schedule_value(self.gamma, k)
        if not 0 < g <= 1:
            raise ValueError(f"gamma_{k} = {g} is outside (0, 1]")
        return g

    def e_k(self, k, m):
        if self.e is None:
            return np.ones(m)
        e = self.e(k) if callable(self.e) else self.e
        return as_interior_direction(e, m)


@dataclass
class Cut:
    """The set ``{u : f(anchor, u) in -C}`` plus cached outer halfspaces.

    Each cached plane is a subgradient inequality of one component of
    ``f(anchor, .)``, so it contains the cut set and never goes stale.
    """

    anchor: np.ndarray
    planes: list = field(default_factory=list)
    kind: str = "bifunction-cut"


@dataclass
class SemlState:
    k: int
    v: np.ndarray
    v0: np.ndarray
    cuts: list = field(default_factory=list)
    x: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    ell: Optional[int] = None
    L: Optional[Halfspace] = None
    M: Optional[Halfspace] = None
    N: Optional[Halfspace] = None
    trace: list = field(default_factory=list)

    @classmethod
    def initial(cls, v0):
        v0 = as_point(v0, name="v0")
        return cls(k=0, v=v0.copy(), v0=v0.copy())


@dataclass
class Terminal:
    """Returned by :func:`seml_step` when ``z == v``: ``x`` then solves the problem."""

    solution: np.ndarray
    state: SemlState
    z: np.ndarray


@dataclass
class SolveReport:
    status: str
    solution: np.ndarray
    iterations: int
    wall_time: float
    residuals: Optional[object] = None
    trace: list = field(default_factory=list)
    error: Optional[str] = None
    v_final: Optional[np.ndarray] = None

    @property
    def ok(self):
        return self.status in ("converged", "stopped-at-fixed-point")


def fixed_point_step(prob, v):
    """``x = P_{T(v)}(v)``."""
    return prob.T.project(v, v)


def _regularizing_halfspace(anchor, other, gamma):
    # {z : <z - anchor, 2(anchor - other)> <= -gamma ||anchor - other||^2}
    d = anchor - other
    if np.linalg.norm(d) <= _DEGENERATE * (1.0 + np.linalg.norm(anchor)):
        return Halfspace(np.zeros_like(anchor), 0.0)
    a = 2.0 * d
    return Halfspace(a, float(a @ anchor) - gamma * float(d @ d))


def build_L(x, w, gamma):
    """Halfspace through the extragradient gap: normal ``2(x - w)``."""
    return _regularizing_halfspace(as_point(x), as_point(w), gamma)


def build_M(v, x, gamma):
    """Halfspace through the fixed-point gap: normal ``2(v - x)``."""
    return _regularizing_halfspace(as_point(v), as_point(x), gamma)


def build_N(v0, v):
    """``{z : <z - v, 2(v0 - v)> <= 0}``; the whole space when ``v == v0``."""
    v0, v = as_point(v0), as_point(v)
    d = v0 - v
    if np.linalg.norm(d) <= _DEGENERATE * (1.0 + np.linalg.norm(v)):
        return Halfspace(np.zeros_like(v), 0.0)
    a = 2.0 * d
    return Halfspace(a, float(a @ v))


def _project_lmn(v0, v, x, w, gamma, v_minus_x=None):
    """Project ``v0`` onto L & M & N in coordinates centred at ``v``.

    Near convergence M and L bound a thin strip with almost antiparallel
    walls, and the step slides along it. Offsets such as ``<a, v>`` would
    cancel catastrophically in absolute coordinates, so every offset is
    formed from differences. ``v_minus_x`` supplies the M normal when it is
    known more accurately than the difference of the two points.
    """
    vx = v - x if v_minus_x is None else v_minus_x
    local = []
    # anchor - v is -vx for L (anchored at x) and 0 for M (anchored at v)
    m_floor = _DEGENERATE if v_minus_x is None else 8 * np.finfo(float).eps
    for anchor, shift, d, floor in ((x, -vx, x - w, _DEGENERATE),
                                    (v, np.zeros_like(v), vx, m_floor)):
        if np.linalg.norm(d) <= floor * (1.0 + np.linalg.norm(anchor)):
            continue
        a = 2.0 * d
        local.append(Halfspace(a, float(a @ shift) - gamma * float(d @ d)))
    p = v0 - v
    if np.linalg.norm(p) > _DEGENERATE * (1.0 + np.linalg.norm(v)):
        local.append(Halfspace(2.0 * p, 0.0))
    scale = 1.0 + float(np.linalg.norm(p))
    return v + project_halfspaces_exact(p, local, tol=1e-13 * scale)


def _cut_values(f, anchors, q):
    return f.over_x(anchors, q)


def _scaled_violation(f, anchors, q, vals, tol):
    """Violations divided by ``max(1, ||subgradient||)``.

    Only entries above ``tol`` are rescaled (the rest cannot exceed it).
    The quotient estimates the distance to the cut boundary, so the test
    stays meaningful when the cut functions take values far above 1.
    """
    scaled = np.minimum(vals, tol)
    for j in np.flatnonzero(np.max(vals, axis=1) > tol):
        jac = f.grad_y(anchors[j], q)
        norms = np.maximum(1.0, np.linalg.norm(jac, axis=1))
        scaled[j] = vals[j] / norms
    return scaled


def project_Kk(prob, x, cuts, tol=1e-9, max_rounds=500, method="nnls",
               planes_per_cut=32, full_output=False, abs_tol=1e-7, refine_rounds=100):
    """Project ``x`` onto ``K`` intersected with every cut set.

    Outer approximation: project onto the polyhedron made of ``K``'s
    halfspaces and the cached cut planes, add a subgradient plane for each
    cut component violated at the result, and repeat until every cut holds
    within ``tol``. Because the polyhedron contains the target set, a
    projection that lands in the target set is the exact projection.

    ``tol`` bounds the violation divided by the subgradient norm (roughly
    the distance to the cut boundary). After that is met, up to
    ``refine_rounds`` further rounds push the raw violation below
    ``abs_tol``, stopping early at the round-off floor; if they run out, the
    last point that met ``tol`` is returned.

    Raises
    ------
    InfeasibleError
        When the rounds run out or a violated cut has a zero subgradient;
        either way the intersection looks empty.
    """
    f = prob.f
    x = np.asarray(x, dtype=float)
    base = prob.K.halfspaces()
    if not cuts:
        q = prob.K.project(x)
        return (q, {"rounds": 0, "violation": 0.0, "scaled": 0.0}) if full_output else q
    anchors = np.array([c.anchor for c in cuts])
    worst = np.inf
    fallback, since = None, 0

    def done(q, info):
        return (q, info) if full_output else q

    for rounds in range(1, max_rounds + 1):
        planes = base + [p for c in cuts for p in c.planes]
        if method == "nnls":
            q = project_polyhedron(x, planes)
        else:
            q = project_polyhedron_dykstra(x, planes, tol=tol * 1e-2)
        vals = _cut_values(f, anchors, q)
        scaled = _scaled_violation(f, anchors, q, vals, tol)
        worst = float(np.max(scaled))
        viol = float(np.max(vals))
        floor = _ROUNDOFF * (1.0 + float(np.linalg.norm(q)))
        if worst <= tol:
            if viol <= abs_tol or worst <= floor:
                return done(q, {"rounds": rounds, "violation": viol, "scaled": worst})
            if fallback is None or viol < fallback[1]:
                fallback = (q, viol, worst)
        if fallback is not None:
            since += 1
            if since > refine_rounds:
                q, viol, sv = fallback
                return done(q, {"rounds": rounds, "violation": viol, "scaled": sv,
                                "refined": False})
        elif rounds % _POLISH_EVERY == 0:
            # nearly tangent cut boundaries make the planes creep; switch to
            # a Newton-type solve on the smooth constraints
            qp = _polish_Kk(prob, x, anchors, q, tol)
            if qp is not None:
                pvals = _cut_values(f, anchors, qp)
                pv = float(np.max(pvals))
                ps = max(float(np.max(_scaled_violation(f, anchors, qp, pvals, tol))), 0.0)
                if pv <= abs_tol:
                    return done(qp, {"rounds": rounds, "violation": pv, "scaled": ps,
                                     "polished": True})
                fallback, since = (qp, pv, ps), 0
        cut_floor = tol if fallback is None else floor
        for j in np.flatnonzero(np.max(vals, axis=1) > min(tol, abs_tol)):
            cut = cuts[j]
            if not np.any(scaled[j] > cut_floor):
                continue
            jac = f.grad_y(cut.anchor, q)
            for i in np.flatnonzero(vals[j] > min(tol, abs_tol)):
                s = jac[i]
                if not np.any(s):
                    raise InfeasibleError("cut set is empty: violated component has zero subgradient")
                cut.planes.append(Halfspace(s, float(s @ q) - float(vals[j, i])))
            if len(cut.planes) > planes_per_cut:
                del cut.planes[: len(cut.planes) - planes_per_cut]
    if fallback is not None:
        q, viol, sv = fallback
        return done(q, {"rounds": max_rounds, "violation": viol, "scaled": sv, "refined": False})
    raise InfeasibleError(
        f"K_k projection did not reach the cut sets after {max_rounds} rounds "
        f"(violation {worst:.2e}); the dual solution set may be empty")


def _polish_Kk(prob, x, anchors, q0, tol):
    """SLSQP on ``min ||q - x||^2`` over ``K`` and the cut sets, from ``q0``.

    Returns None unless the result meets every constraint within ``tol`` and
    is at least as close to ``x`` as the outer approximation allows.
    """
    f, K = prob.f, prob.K
    A, b = _halfspace_rows(K.halfspaces(), x.size)

    def cut_fun(q):
        return -f.over_x(anchors, q).ravel()

    def cut_jac(q):
        return -np.vstack([f.grad_y(a, q) for a in anchors])

    cons = [{"type": "ineq", "fun": cut_fun, "jac": cut_jac}]
    if A.shape[0]:
        cons.append({"type": "ineq", "fun": lambda q: b - A @ q, "jac": lambda q: -A})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(lambda q: float((q - x) @ (q - x)), q0, jac=lambda q: 2.0 * (q - x),
                       method="SLSQP", constraints=cons,
                       options={"ftol": 1e-16, "maxiter": 200})
    q = res.x
    if not np.all(np.isfinite(q)):
        return None
    vals = f.over_x(anchors, q)
    if np.max(_scaled_violation(f, anchors, q, vals, tol)) > tol:
        return None
    if A.shape[0] and np.max(A @ q - b) > tol:
        return None
    # the outer approximation solves a relaxation, so its distance is a lower bound
    if np.linalg.norm(q - x) < np.linalg.norm(q0 - x) * (1 - 1e-9) - 1e-12:
        return None
    return q


def _halfspace_rows(halfspaces, n):
    rows = [(h.normal, h.offset) for h in halfspaces if not h.is_trivial]
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


def _c1_violation(prob, x, z, c, e, beta, base, n_samples, rng):
    """Largest excess of the subproblem optimality inequality over sampled ``y in T(base)``."""
    lo, hi = prob.T.bounds(base)
    Y = rng.uniform(lo, hi, size=(n_samples, lo.size))
    Y = np.array([prob.T.project(base, y) for y in Y])
    lhs = (Y - z) @ (2.0 * (x - z)) * float(e @ c)
    rhs = beta * (prob.f.over_y(x, Y) @ c - float(prob.f(x, z) @ c))
    return float(np.max(lhs - rhs))


def seml_step(prob, params, state, rng=None):
    """Run one outer iteration from ``state.v``.

    Returns a new :class:`SemlState` (with ``k`` advanced) or a
    :class:`Terminal` when the subproblem returns ``v`` itself.
    """
    t0 = time.perf_counter()
    k, v, v0 = state.k, state.v, state.v0
    m = prob.m
    beta, gamma = params.beta_k(k), params.gamma_k(k)
    e = params.e_k(k, m)
    c = uniform_weight(m) if params.c is None else np.asarray(params.c, dtype=float)

    v_minus_x = -prob.T.step(v, v)
    x = v - v_minus_x
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        sub = solve_subproblem(prob, SubproblemSpec(
            x=x, base=v, beta=beta, e=e, c=c, tol=params.tol_inner,
            max_iters=params.inner_max_iters))
    z = sub.z
    if np.linalg.norm(z - v) <= params.eps_fix:
        return Terminal(solution=x, state=state, z=z)

    ls = armijo_search(prob.f, x, z, beta, params.delta, params.theta, e, params.ell_max)
    cuts = list(state.cuts) + [Cut(anchor=ls.y)]
    if params.max_cuts is not None and len(cuts) > params.max_cuts:
        cuts = cuts[-params.max_cuts:]
    w, kk_info = project_Kk(prob, x, cuts, tol=params.cut_tol, abs_tol=params.cut_abs_tol,
                            max_rounds=params.max_cut_rounds,
                            method=params.kk_method, planes_per_cut=params.planes_per_cut,
                            full_output=True)
    L = build_L(x, w, gamma)
    M = build_M(v, x, gamma)
    N = build_N(v0, v)
    v_next = _project_lmn(v0, v, x, w, gamma, v_minus_x)

    checks = {}
    if params.check_invariants:
        worst = max((h.value(v_next) / np.linalg.norm(h.normal)
                     for h in (L, M, N) if not h.is_trivial), default=0.0)
        checks["lmn_violation"] = worst
        if worst > params.membership_tol:
            raise InvariantViolation(f"v_(k+1) violates L/M/N by {worst:.2e} at k={k}")
        d_old, d_new = bregman_distance(v, v0), bregman_distance(v_next, v0)
        checks["D_next"] = d_new
        if d_new < d_old - 1e-9 * max(1.0, d_old):
            raise InvariantViolation(f"D(v_k, v0) decreased at k={k}: {d_old} -> {d_new}")
        checks["cut_violation"] = kk_info["violation"]
        checks["cut_scaled"] = kk_info["scaled"]
        checks["fix_violation"] = float(np.linalg.norm(prob.T.project(v, x) - x))
        checks["lk_min_gap"] = float(np.max(prob.f(ls.y, x)))
        checks["ls_previous_min"] = float(np.min(ls.trials[-2])) if ls.ell > 0 else None
        if params.c1_samples:
            rng = rng if rng is not None else np.random.default_rng(params.seed + k)
            checks["c1_violation"] = _c1_violation(prob, x, z, c, e, beta, v,
                                                   params.c1_samples, rng)

    record = {
        "k": k,
        "v": v.tolist(), "x": x.tolist(), "z": z.tolist(), "y": ls.y.tolist(), "w": w.tolist(),
        "alpha": ls.alpha, "ell": ls.ell, "n_cuts": len(cuts),
        "D_v0": bregman_distance(v, v0),
        "gap_vv": float(np.linalg.norm(v_next - v)),
        "gap_vx": float(np.linalg.norm(v - x)),
        "gap_xw": float(np.linalg.norm(x - w)),
        "subsolver_iters": sub.iterations,
        "wall_ms": 1e3 * (time.perf_counter() - t0),
    }
    if checks:
        record["checks"] = checks
    trace = state.trace
    if params.keep_trace:
        trace = trace + [record]
    return SemlState(k=k + 1, v=v_next, v0=v0, cuts=cuts, x=x, z=z, y=ls.y, w=w,
                     alpha=ls.alpha, ell=ls.ell, L=L, M=M, N=N, trace=trace)


def solve(prob, params=None, v0=None, callback=None):
    """Iterate :func:`seml_step` from ``v0`` until a stopping rule fires.

    Stops when ``||v_k - v_(k-1)|| < eps_stop`` (status ``converged``), when
    the subproblem returns ``v`` (``stopped-at-fixed-point``) or after
    ``max_outer`` steps. Numerical failures of an invariant end the run
    with status ``invariant-violation``; the trace up to that point is kept.

    The reported solution is ``P_{T(v)}(v)`` for the final ``v``; when
    ``params.certify`` is set, the sampling certificate from
    :mod:`vqep.oracle` is attached as ``residuals``.
    """
    params = params or SemlParams()
    if v0 is None:
        raise ValueError("a starting point v0 is required")
    v0 = as_point(v0, prob.n, name="v0")
    if not prob.K.contains(v0):
        raise ValueError(f"starting point {v0} is not in K")
    state = SemlState.initial(v0)
    rng = np.random.default_rng(params.seed)
    status, error, solution = "max-iters", None, None
    t0 = time.perf_counter()
    try:
        for _ in range(params.max_outer):
            out = seml_step(prob, params, state, rng=rng)
            if isinstance(out, Terminal):
                status, solution = "stopped-at-fixed-point", out.solution
                break
            gap = float(np.linalg.norm(out.v - state.v))
            state = out
            if callback is not None:
                callback(state)
            if np.linalg.norm(state.v) > params.norm_bound:
                raise InvariantViolation(
                    f"iterate norm exceeded {params.norm_bound:g}; the iterates look unbounded")
            if gap < params.eps_stop:
                status = "converged"
                break
    except (InvariantViolation, InfeasibleError) as exc:
        status, error = "invariant-violation", f"{type(exc).__name__}: {exc}"
    if solution is None:
        try:
            solution = fixed_point_step(prob, state.v)
        except InfeasibleError as exc:  # pragma: no cover - T(v) nonempty on K
            solution, error = state.v.copy(), str(exc)
    wall = time.perf_counter() - t0

    residuals = None
    if params.certify:
        from .oracle import vqep_residual

        residuals = vqep_residual(prob, solution, n_samples=params.oracle_samples,
                                  seed=params.seed)
    return SolveReport(status=status, solution=solution, iterations=state.k, wall_time=wall,
                       residuals=residuals, trace=state.trace, error=error, v_final=state.v)

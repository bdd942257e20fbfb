"""Built-in problems and a generalized Nash equilibrium builder.

Instances can also be described in JSON::

    {"type": "ab",      "params": {"a": 1.0, "b": 1.0, "c": 1.0}}
    {"type": "bimat",   "params": {"preset": "paper"}}
    {"type": "bimat",   "params": {"A": [[[...]]], "B": [[[...]]], "c": [[...]],
                                   "a": [...], "d1": 1.0, "d2": 3.0}}
    {"type": "l2trunc", "params": {"n": 6, "R": 100.0}}
    {"type": "gnep",    "params": {"players": [...], "costs": [...]}}

For ``gnep`` each player is ``{"dim": d, "lo": [...], "hi": [...],
"constraint": C}`` where ``C`` is omitted (strategy box only) or one of

* ``{"type": "halfspace", "a": [...], "b": b}``: ``<a, y_i> <= max(b, <a, x_i>)``
* ``{"type": "ball", "center": [...], "radius": r}``:
  ``||y_i - center|| <= max(r, ||x_i - center||)``

Both forms keep ``x_i`` feasible for its own profile. ``costs[j][i]`` is the
loss of player ``i`` in area ``j``, a quadratic in the full profile:
``{"Q": [[...]], "q": [...], "r": 0.0}`` meaning ``0.5 x'Qx + q'x + r``.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import Ball, Box, Halfspace, as_point
from .model import Bifunction, CompoundMap, ConstraintMap, ProductMap, VqepProblem

__all__ = [
    "InstanceError",
    "ABBifunction",
    "BimatBifunction",
    "TruncatedL2Bifunction",
    "GnepBifunction",
    "QuadraticCost",
    "Cost",
    "make_ab",
    "make_bimat",
    "reference_bimat",
    "make_truncated_l2",
    "make_gnep",
    "REFERENCE_BIMAT",
    "REFERENCE_STARTS",
    "BUILTINS",
    "builtin",
    "instance_from_dict",
    "load_instance",
    "random_ab_params",
    "random_starts",
    "sample_box",
]


class InstanceError(ValueError):
    """Malformed or inconsistent instance description."""


# -- two-dimensional instance with weights (a, b, c) ---------------------------------


class ABBifunction(Bifunction):
    """``f(x, y) = (a w(x) (|y|^2 - |x|^2), b x1^2 (y1 - x1) + c x2 (y2 - x2))``
    with ``w(x) = max(x1^2 + x2, 0)``.

    On ``K`` (where ``x2 >= 1``) the clamp is inactive; outside it keeps the
    first component convex in ``y`` without breaking ``f(x, x) = 0``.
    """

    m = 2

    def __init__(self, a, b, c):
        self.a, self.b, self.c = float(a), float(b), float(c)

    def _weight(self, x):
        return max(x[0] ** 2 + x[1], 0.0)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f1 = self.a * self._weight(x) * ((y[0] ** 2 + y[1] ** 2) - (x[0] ** 2 + x[1] ** 2))
        f2 = self.b * x[0] ** 2 * (y[0] - x[0]) + self.c * x[1] * (y[1] - x[1])
        return np.array([f1, f2])

    def grad_y(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = 2.0 * self.a * self._weight(x)
        return np.array([[s * y[0], s * y[1]], [self.b * x[0] ** 2, self.c * x[1]]])

    def over_y(self, x, Y):
        x = np.asarray(x, dtype=float)
        Y = np.atleast_2d(Y)
        f1 = self.a * self._weight(x) * ((Y[:, 0] ** 2 + Y[:, 1] ** 2) - (x[0] ** 2 + x[1] ** 2))
        f2 = self.b * x[0] ** 2 * (Y[:, 0] - x[0]) + self.c * x[1] * (Y[:, 1] - x[1])
        return np.column_stack([f1, f2])

    def over_x(self, X, y):
        X = np.atleast_2d(X)
        y = np.asarray(y, dtype=float)
        w = np.maximum(X[:, 0] ** 2 + X[:, 1], 0.0)
        f1 = self.a * w * ((y[0] ** 2 + y[1] ** 2) - (X[:, 0] ** 2 + X[:, 1] ** 2))
        f2 = self.b * X[:, 0] ** 2 * (y[0] - X[:, 0]) + self.c * X[:, 1] * (y[1] - X[:, 1])
        return np.column_stack([f1, f2])


def make_ab(a=1.0, b=1.0, c=1.0):
    """Two-dimensional instance on ``K = [-10, 10] x [1, 10]`` with
    ``T(x) = {z in K : z1 + z2 >= max(x1 + x2, 2)}``.

    ``(1, 1)`` is a solution for all ``a, b, c >= 0``. It is not the only
    one in general: for some weights (e.g. ``b`` small next to ``c``) points
    such as ``(1.49, 1.34)`` pass the certificate as well.
    """
    if min(a, b, c) < 0:
        raise InstanceError("a, b, c must be nonnegative")
    K = Box([-10.0, 1.0], [10.0, 10.0])
    ones = np.ones(2)

    def halfspace(x):
        return Halfspace(-ones, -max(float(x[0] + x[1]), 2.0))

    T = CompoundMap(K, halfspace=halfspace)
    return VqepProblem(f=ABBifunction(a, b, c), T=T, K=K, name="ab",
                       known_solutions=[np.array([1.0, 1.0])],
                       params={"a": float(a), "b": float(b), "c": float(c)})


def random_ab_params(rng, low=0.0, high=100.0):
    """One ``(a, b, c)`` triple drawn uniformly from ``[low, high]^3``."""
    a, b, c = rng.uniform(low, high, size=3)
    return {"a": float(a), "b": float(b), "c": float(c)}


# -- bimatrix instance ----------------------------------------------------------------


class BimatBifunction(Bifunction):
    """``f_i(x, y) = <A_i x + B_i y + c_i, y - x>`` for ``i = 1..m``."""

    def __init__(self, A, B, c):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.cvec = np.asarray(c, dtype=float)
        self.m = self.A.shape[0]

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lin = self.A @ x + self.B @ y + self.cvec  # (m, n)
        return lin @ (y - x)

    def grad_y(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        Bt = np.transpose(self.B, (0, 2, 1))
        return self.A @ x + self.cvec + self.B @ y + Bt @ (y - x)

    def over_y(self, x, Y):
        x = np.asarray(x, dtype=float)
        Y = np.atleast_2d(Y)
        D = Y - x
        lin = (self.A @ x + self.cvec)[None, :, :] + np.einsum("mij,kj->kmi", self.B, Y)
        return np.einsum("kmi,ki->km", lin, D)

    def over_x(self, X, y):
        X = np.atleast_2d(X)
        y = np.asarray(y, dtype=float)
        D = y[None, :] - X
        lin = np.einsum("mij,kj->kmi", self.A, X) + (self.B @ y + self.cvec)[None, :, :]
        return np.einsum("kmi,ki->km", lin, D)


REFERENCE_BIMAT = {
    "A": [[[-1, 3, 0], [-3, -2, 0], [0, 0, -3]],
          [[-5, -1, 2], [1, -3, 0], [-2, 0, -2]]],
    "B": [[[1, 0, -2], [0, 2, 0], [2, 0, 3]],
          [[3, -2, 1], [2, 1, 3], [-1, -3, 2]]],
    "c": [[0, 0, 0], [0, 0, 0]],
    "a": [10, 10, 10],
    "d1": 1.0,
    "d2": 3.0,
}


def make_bimat(A, B, c, a, d1, d2):
    """Bimatrix instance on the box ``prod [-a_i, a_i]``.

    ``T(x) = {z in K : sum z >= max(sum x, d1), ||z|| <= max(||x||, d2)}``.
    Each ``B_i`` must be positive semidefinite (its symmetric part is
    checked), which makes every component convex in ``y``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    c = np.asarray(c, dtype=float)
    a = as_point(a, name="a")
    n = a.size
    if A.ndim != 3 or A.shape[1:] != (n, n) or B.shape != A.shape or c.shape != A.shape[:2]:
        raise InstanceError(f"inconsistent shapes A{A.shape} B{B.shape} c{c.shape} for n={n}")
    if np.any(a <= 0):
        raise InstanceError("box radii must be positive")
    for i, Bi in enumerate(B):
        if np.min(np.linalg.eigvalsh(0.5 * (Bi + Bi.T))) < -1e-10:
            raise InstanceError(f"B_{i + 1} is not positive semidefinite")
    d1, d2 = float(d1), float(d2)
    if not d1 <= d2 <= float(np.sum(a)):
        raise InstanceError("need d1 <= d2 <= sum(a)")
    K = Box(-a, a)
    ones = np.ones(n)
    origin = np.zeros(n)

    def halfspace(x):
        return Halfspace(-ones, -max(float(np.sum(x)), d1))

    def ball(x):
        return Ball(origin, max(float(np.linalg.norm(x)), d2))

    T = CompoundMap(K, halfspace=halfspace, ball=ball)
    return VqepProblem(f=BimatBifunction(A, B, c), T=T, K=K, name="bimat",
                       params={"A": A.tolist(), "B": B.tolist(), "c": c.tolist(),
                               "a": a.tolist(), "d1": d1, "d2": d2})


def reference_bimat():
    """The printed ``n = 3, m = 2`` data with ``K = [-10, 10]^3, d1 = 1, d2 = 3``."""
    prob = make_bimat(**REFERENCE_BIMAT)
    prob.name = "bimat-paper"
    prob.known_solutions = [np.array([10.0, 10.0, 10.0]), np.array([-10.0, 10.0, 10.0])]
    return prob


# -- truncated sequence-space instance -------------------------------------------------


class TruncatedL2Bifunction(Bifunction):
    """``f(x, y) = <y - x, x - A(x)> phi(x)`` with
    ``A(x) = (x1^2 + x1 - 9, 3 x2 - 5, x3^3 + x3 - 8, -x4, ..., -xn)`` and
    ``phi(x) = (3 x1 x2 + 1, x3^2 + x2 + 2, 7 x2^2 + 4 x1 x3 + 1)``.
    """

    m = 3

    def residual(self, x):
        """``x - A(x)``."""
        x = np.asarray(x, dtype=float)
        r = 2.0 * x
        r[0] = 9.0 - x[0] ** 2
        r[1] = 5.0 - 2.0 * x[1]
        r[2] = 8.0 - x[2] ** 3
        return r

    def phi(self, x):
        return np.array([3 * x[0] * x[1] + 1, x[2] ** 2 + x[1] + 2, 7 * x[1] ** 2 + 4 * x[0] * x[2] + 1])

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return float((y - x) @ self.residual(x)) * self.phi(x)

    def grad_y(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.outer(self.phi(x), self.residual(x))

    def over_y(self, x, Y):
        x = np.asarray(x, dtype=float)
        s = (np.atleast_2d(Y) - x) @ self.residual(x)
        return s[:, None] * self.phi(x)[None, :]

    def over_x(self, X, y):
        X = np.atleast_2d(X)
        y = np.asarray(y, dtype=float)
        R = 2.0 * X
        R[:, 0] = 9.0 - X[:, 0] ** 2
        R[:, 1] = 5.0 - 2.0 * X[:, 1]
        R[:, 2] = 8.0 - X[:, 2] ** 3
        s = np.einsum("ki,ki->k", y[None, :] - X, R)
        P = np.column_stack([3 * X[:, 0] * X[:, 1] + 1, X[:, 2] ** 2 + X[:, 1] + 2,
                             7 * X[:, 1] ** 2 + 4 * X[:, 0] * X[:, 2] + 1])
        return s[:, None] * P


def make_truncated_l2(n=6, R=100.0):
    """Sequence-space instance truncated to ``R^n`` (``n >= 4``) with ``p = 2``.

    ``K = [0, R]^n`` and ``T(x) = {xi in K : ||xi|| <= ||x||}``. The cap
    ``R`` replaces the unbounded orthant so that the iterates stay bounded;
    the listed solutions ``(3, 2.5, 2, 0, ...)`` and ``0`` lie well inside.
    """
    n = int(n)
    if n < 4:
        raise InstanceError("the truncated instance needs n >= 4")
    if not R > 3.0:
        raise InstanceError("cap R must exceed 3 to contain the known solution")
    K = Box(np.zeros(n), np.full(n, float(R)))
    origin = np.zeros(n)

    def ball(x):
        return Ball(origin, float(np.linalg.norm(x)))

    T = CompoundMap(K, ball=ball)
    x_star = np.zeros(n)
    x_star[:3] = [3.0, 2.5, 2.0]
    return VqepProblem(f=TruncatedL2Bifunction(), T=T, K=K, name="l2trunc",
                       known_solutions=[x_star, np.zeros(n)], params={"n": n, "R": float(R)})


# -- generalized Nash equilibrium ------------------------------------------------------


@dataclass
class Cost:
    """Loss of one player in one area: a function of the full profile and its gradient."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


class QuadraticCost(Cost):
    """``0.5 x'Qx + q'x + r`` in the full strategy profile ``x``."""

    def __init__(self, Q, q, r=0.0):
        self.Q = np.asarray(Q, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.r = float(r)
        if self.Q.shape != (self.q.size, self.q.size):
            raise InstanceError("Q must be square with the size of q")
        Qs = 0.5 * (self.Q + self.Q.T)
        super().__init__(value=lambda x: float(0.5 * x @ Qs @ x + self.q @ x + self.r),
                         grad=lambda x: Qs @ x + self.q)


class GnepBifunction(Bifunction):
    """``f_j(x, y) = sum_i [phi_ij(x_{-i}, y_i) - phi_ij(x)]`` for each area ``j``."""

    def __init__(self, costs, slices):
        self.costs = [list(area) for area in costs]
        self.slices = list(slices)
        self.m = len(self.costs)

    def _swap(self, x, y, sl):
        u = x.copy()
        u[sl] = y[sl]
        return u

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(self.m)
        for i, sl in enumerate(self.slices):
            u = self._swap(x, y, sl)
            for j in range(self.m):
                out[j] += self.costs[j][i].value(u) - self.costs[j][i].value(x)
        return out

    def grad_y(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        jac = np.zeros((self.m, x.size))
        for i, sl in enumerate(self.slices):
            u = self._swap(x, y, sl)
            for j in range(self.m):
                jac[j, sl] = np.asarray(self.costs[j][i].grad(u), dtype=float)[sl]
        return jac


def make_gnep(dims: Sequence[int], costs, lo, hi,
              constraints: Optional[Sequence[Optional[Callable]]] = None,
              n_probe=200, seed=0):
    """Assemble a generalized Nash game as a vector quasi-equilibrium problem.

    Parameters
    ----------
    dims : sequence of int
        Strategy dimension of each player.
    costs : nested sequence of Cost
        ``costs[j][i]`` is the loss of player ``i`` in area ``j``; it must be
        convex in player ``i``'s block.
    lo, hi : array_like
        Strategy boxes, concatenated over players.
    constraints : sequence, optional
        Per player ``None`` or a callable ``x -> (Halfspace | None, Ball | None)``
        giving the block constraint ``h_i(x, y_i) <= 0`` in the current profile.
    n_probe : int
        Random profiles used to verify that ``x_i`` satisfies its own
        constraint.
    """
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise InstanceError("player dimensions must be positive")
    n = sum(dims)
    K = Box(as_point(lo, n, name="lo"), as_point(hi, n, name="hi"))
    offsets = np.cumsum([0] + dims)
    slices = [slice(int(offsets[i]), int(offsets[i + 1])) for i in range(len(dims))]
    if not costs or any(len(area) != len(dims) for area in costs):
        raise InstanceError("costs must list one entry per player in every area")
    constraints = list(constraints) if constraints is not None else [None] * len(dims)
    if len(constraints) != len(dims):
        raise InstanceError("need one constraint entry per player")

    blocks = []
    for sl, con in zip(slices, constraints):
        box = Box(K.lo[sl], K.hi[sl])
        if con is None:
            blocks.append(CompoundMap(box))
        else:
            blocks.append(CompoundMap(box, halfspace=lambda x, con=con: con(x)[0],
                                      ball=lambda x, con=con: con(x)[1]))
    T = ProductMap(blocks, slices)

    rng = np.random.default_rng(seed)
    for x in rng.uniform(K.lo, K.hi, size=(n_probe, n)):
        for i, (blk, sl) in enumerate(zip(blocks, slices)):
            if not blk.contains(x, x[sl], tol=1e-9):
                raise InstanceError(f"player {i}: own strategy violates its constraint at {x}")
    return VqepProblem(f=GnepBifunction(costs, slices), T=T, K=K, name="gnep")


def _gnep_constraint(spec, dim):
    if spec is None:
        return None
    kind = spec.get("type")
    if kind == "halfspace":
        a = as_point(spec["a"], dim, name="a")
        b = float(spec["b"])
        return lambda xi: (Halfspace(a, max(b, float(a @ xi))), None)
    if kind == "ball":
        center = as_point(spec["center"], dim, name="center")
        r = float(spec["radius"])
        return lambda xi: (None, Ball(center, max(r, float(np.linalg.norm(xi - center)))))
    raise InstanceError(f"unknown gnep constraint type {kind!r}")


def _gnep_from_params(p):
    players = p["players"]
    dims = [int(pl["dim"]) for pl in players]
    offsets = np.cumsum([0] + dims)
    lo = np.concatenate([as_point(pl["lo"], d) for pl, d in zip(players, dims)])
    hi = np.concatenate([as_point(pl["hi"], d) for pl, d in zip(players, dims)])
    constraints = []
    for i, (pl, d) in enumerate(zip(players, dims)):
        local = _gnep_constraint(pl.get("constraint"), d)
        if local is None:
            constraints.append(None)
        else:
            sl = slice(int(offsets[i]), int(offsets[i + 1]))
            constraints.append(lambda x, local=local, sl=sl: local(np.asarray(x)[sl]))
    costs = [[QuadraticCost(c["Q"], c["q"], c.get("r", 0.0)) for c in area] for area in p["costs"]]
    prob = make_gnep(dims, costs, lo, hi, constraints)
    prob.params = p
    if "known_solutions" in p:
        prob.known_solutions = [np.asarray(s, dtype=float) for s in p["known_solutions"]]
    return prob


def _gnep_demo():
    # two players, one area, separable quadratic losses; the equilibrium is (1, 2)
    params = {
        "players": [{"dim": 1, "lo": [-5.0], "hi": [5.0]},
                    {"dim": 1, "lo": [-5.0], "hi": [5.0]}],
        "costs": [[{"Q": [[2, 0], [0, 0]], "q": [-2, 0], "r": 1.0},
                   {"Q": [[0, 0], [0, 2]], "q": [0, -4], "r": 4.0}]],
        "known_solutions": [[1.0, 2.0]],
    }
    prob = _gnep_from_params(params)
    prob.name = "gnep-demo"
    return prob


# reference start points, keyed by builtin name
REFERENCE_STARTS = {
    "ab": [(-3.0, 2.0), (-9.0, 7.0), (0.0, 2.0), (2.0, 8.0), (-5.0, 5.0)],
    "bimat-paper": [(4.0, 2.0, -3.0), (5.0, -2.0, -5.0), (6.0, 3.0, -2.0), (-4.0, -3.0, -1.0),
                    (4.0, 4.0, 4.0), (7.0, -4.0, -3.0), (5.0, -5.0, 5.0)],
}

def sample_box(prob):
    """Box used for random starts and property sampling.

    ``K``'s bounding box, except ``[0, 10]^n`` for the truncated
    sequence-space instance, which keeps points at the scale of the known
    solutions instead of the cap.
    """
    lo, hi = prob.K.bounds()
    if prob.name == "l2trunc":
        hi = np.minimum(hi, 10.0)
    return lo, hi


def random_starts(prob, count, rng):
    """``count`` start points drawn uniformly from :func:`sample_box`."""
    lo, hi = sample_box(prob)
    return [prob.K.project(p) for p in rng.uniform(lo, hi, size=(int(count), lo.size))]


BUILTINS = {
    "ab": lambda: make_ab(1.0, 1.0, 1.0),
    "bimat-paper": reference_bimat,
    "l2trunc": lambda: make_truncated_l2(6),
    "gnep-demo": _gnep_demo,
}


def builtin(name):
    try:
        return BUILTINS[name]()
    except KeyError:
        raise InstanceError(f"unknown builtin instance {name!r}; choose from {sorted(BUILTINS)}") from None


def instance_from_dict(spec):
    """Build a problem from a ``{"type": ..., "params": {...}}`` mapping."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise InstanceError("instance description needs a 'type' field")
    kind = spec["type"]
    p = spec.get("params", {})
    if not isinstance(p, dict):
        raise InstanceError("'params' must be an object")
    try:
        if kind == "ab":
            return make_ab(p.get("a", 1.0), p.get("b", 1.0), p.get("c", 1.0))
        if kind == "bimat":
            if p.get("preset") == "paper":
                return reference_bimat()
            return make_bimat(p["A"], p["B"], p["c"], p["a"], p["d1"], p["d2"])
        if kind == "l2trunc":
            return make_truncated_l2(p.get("n", 6), p.get("R", 100.0))
        if kind == "gnep":
            return _gnep_from_params(p)
    except InstanceError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"bad parameters for {kind!r} instance: {exc}") from exc
    raise InstanceError(f"unknown instance type {kind!r}")


def load_instance(path):
    """Read a JSON instance file (see the module docstring for the schema)."""
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceError(f"cannot read instance file {path}: {exc}") from exc
    return instance_from_dict(spec)

"""Armijo-type backtracking on the segment between ``x`` and ``z``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvariantViolation, LinesearchError

__all__ = ["LinesearchResult", "armijo_search"]


@dataclass(frozen=True)
class LinesearchResult:
    ell: int
    alpha: float
    y: np.ndarray
    trials: list = field(default_factory=list)


def armijo_search(f, x, z, beta, delta, theta, e, ell_max=60, tol=1e-9):
    """Find the smallest ``ell >= 0`` passing the cone-exclusion test.

    With ``y_ell = theta**ell z + (1 - theta**ell) x`` and

        w(ell) = -beta f(y_ell, x) + beta f(y_ell, z) + delta ||z - x||^2 e,

    the test passes when ``w(ell)`` is not in the open orthant, i.e. when
    ``min_i w_i(ell) <= 0``. The comparison is strict (no tolerance).

    Parameters
    ----------
    f : Bifunction
    x, z : ndarray
        Current point and subproblem solution.
    beta, delta, theta : float
        ``beta > 0`` and ``delta, theta`` in ``(0, 1)``.
    e : ndarray
        Strictly positive direction.
    ell_max : int
        Trials beyond this raise :class:`LinesearchError`.
    tol : float
        Slack for the post-check ``max_i f_i(y, x) > -tol`` (run when
        ``x != z``), which holds whenever ``f(y, .)`` is convex.

    Returns
    -------
    LinesearchResult
        ``trials`` holds every evaluated ``w(ell)``.
    """
    if not (0 < delta < 1 and 0 < theta < 1):
        raise ValueError("delta and theta must lie in (0, 1)")
    if not beta > 0:
        raise ValueError("beta must be positive")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    e = np.asarray(e, dtype=float)
    dz = z - x
    shift = delta * float(dz @ dz) * e

    trials = []
    alpha = 1.0
    for ell in range(ell_max + 1):
        y = alpha * z + (1.0 - alpha) * x
        w = -beta * f(y, x) + beta * f(y, z) + shift
        trials.append(w)
        if np.min(w) <= 0.0:
            if np.any(dz) and np.max(f(y, x)) <= -tol:
                raise InvariantViolation(
                    f"f(y, x) lies in -C at the accepted trial point (ell={ell}); "
                    "the bifunction is probably not convex in its second argument")
            return LinesearchResult(ell=ell, alpha=alpha, y=y, trials=trials)
        alpha *= theta
    raise LinesearchError(
        f"Armijo search exceeded ell_max={ell_max}; expected finite termination, "
        "check f(x, x) = 0, convexity in y, and the subproblem accuracy")

import numpy as np
import pytest

from vqep.exceptions import InfeasibleError
from vqep.geometry import (
    Ball,
    Box,
    Halfspace,
    Polyhedron,
    bregman_distance,
    project_box,
    project_box_halfspace_ball,
    project_halfspace,
    project_halfspaces_exact,
    project_polyhedron,
    project_polyhedron_dykstra,
)

import derived


@pytest.mark.parametrize("x, y, expected", derived.BREGMAN)
def test_bregman_distance_examples(x, y, expected):
    assert bregman_distance(x, y) == pytest.approx(expected)


def test_bregman_dimension_mismatch():
    with pytest.raises(ValueError):
        bregman_distance([1.0, 2.0], [1.0])


def test_project_halfspace_examples():
    h = Halfspace([1.0, 1.0], 1.0)
    np.testing.assert_allclose(project_halfspace([0.0, 0.0], h), [0.0, 0.0])
    np.testing.assert_allclose(project_halfspace([2.0, 0.0], h), derived.HALFSPACE_P20)
    np.testing.assert_allclose(project_halfspace([0.0, 5.0], Halfspace([0.0, 1.0], 1.0)), [0.0, 1.0])


def test_project_halfspace_zero_normal():
    with pytest.raises(ValueError):
        project_halfspace([1.0, 1.0], Halfspace([0.0, 0.0], 1.0))


def test_exact_examples():
    z1, z2 = Halfspace([1.0, 0.0], 1.0), Halfspace([0.0, 1.0], 1.0)
    np.testing.assert_allclose(project_halfspaces_exact([2.0, 2.0], [z1, z2]), [1.0, 1.0])
    np.testing.assert_allclose(
        project_halfspaces_exact([2.0, 2.0], [z1, z2, Halfspace([1.0, 1.0], 3.0)]), [1.0, 1.0])
    np.testing.assert_allclose(project_halfspaces_exact([0.0, 0.0], [z1]), [0.0, 0.0])


def test_exact_rejects_four_and_empty():
    hs = [Halfspace(np.eye(2)[i % 2] * (1 if i < 2 else -1), 1.0) for i in range(4)]
    with pytest.raises(ValueError):
        project_halfspaces_exact([5.0, 5.0], hs)
    with pytest.raises(InfeasibleError):
        project_halfspaces_exact([0.0, 0.0], [Halfspace([1.0, 0.0], -1.0), Halfspace([-1.0, 0.0], -1.0)])


def test_exact_nearly_antiparallel_strip():
    # a strip 1e-10 wide between almost opposite walls, far from p
    a = np.array([1.0, 1e-6])
    hs = [Halfspace(a, 0.0), Halfspace(-a + [0.0, 1e-9], 1e-10)]
    q = project_halfspaces_exact([5.0, 3.0], hs, tol=1e-13)
    assert all(h.value(q) / np.linalg.norm(h.normal) <= 1e-12 for h in hs)


def test_dykstra_examples():
    q = project_polyhedron_dykstra([3.0, 0.0], [Halfspace([1.0, 0.0], 1.0), Halfspace([1.0, 0.0], 2.0)])
    np.testing.assert_allclose(q, [1.0, 0.0], atol=1e-9)
    p = np.array([0.1, -0.3])
    np.testing.assert_allclose(project_polyhedron_dykstra(p, [Halfspace([1.0, 1.0], 1.0)]), p)
    q = project_polyhedron_dykstra([2.0, 2.0], [Halfspace([1.0, 0.0], 1.0), Halfspace([0.0, 1.0], 1.0)],
                                   tol=1e-12)
    np.testing.assert_allclose(q, [1.0, 1.0], atol=1e-9)


def test_polyhedron_nnls_matches_exact(rng):
    for _ in range(50):
        hs = [Halfspace(rng.normal(size=3), rng.normal()) for _ in range(3)]
        p = rng.normal(size=3) * 3
        try:
            ref = project_halfspaces_exact(p, hs)
        except InfeasibleError:
            continue
        np.testing.assert_allclose(project_polyhedron(p, hs), ref, atol=1e-9)


def test_polyhedron_empty():
    with pytest.raises(InfeasibleError):
        project_polyhedron([0.0, 0.0], [Halfspace([1.0, 0.0], -1.0), Halfspace([-1.0, 0.0], -1.0)])


def test_project_box_examples():
    np.testing.assert_allclose(project_box([15, -12, 3], [-10] * 3, [10] * 3), [10, -10, 3])
    np.testing.assert_allclose(project_box([1, 2], [0, 0], [5, 5]), [1, 2])
    np.testing.assert_allclose(project_box([0, 0.5], [-10, 1], [10, 10]), [0, 1])
    with pytest.raises(ValueError):
        project_box([0.0], [1.0], [0.0])


def test_sets_contains_and_project():
    box = Box([0.0, 0.0], [1.0, 1.0])
    assert box.contains([0.5, 0.5]) and not box.contains([2.0, 0.0])
    ball = Ball([0.0, 0.0], 2.0)
    np.testing.assert_allclose(ball.project([4.0, 0.0]), [2.0, 0.0])
    P = Polyhedron(box.halfspaces())
    np.testing.assert_allclose(P.project([2.0, -1.0]), [1.0, 0.0], atol=1e-12)
    lo, hi = P.bounds()
    np.testing.assert_allclose(lo, [0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(hi, [1.0, 1.0], atol=1e-9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_box_halfspace_ball_matches_slsqp(rng):
    from scipy.optimize import minimize

    for _ in range(30):
        lo, hi = -rng.uniform(1, 3, 3), rng.uniform(1, 3, 3)
        h = Halfspace(rng.normal(size=3), rng.uniform(-0.5, 0.5))
        b = Ball(rng.normal(size=3) * 0.3, rng.uniform(1.0, 2.0))
        p = rng.normal(size=3) * 4
        q = project_box_halfspace_ball(p, lo, hi, halfspace=h, ball=b)
        cons = [{"type": "ineq", "fun": lambda z: h.offset - h.normal @ z},
                {"type": "ineq", "fun": lambda z: b.radius ** 2 - (z - b.center) @ (z - b.center)}]
        ref = minimize(lambda z: (z - p) @ (z - p), np.clip(b.center, lo, hi), method="SLSQP",
                       bounds=list(zip(lo, hi)), constraints=cons,
                       options={"ftol": 1e-14, "maxiter": 500})
        if not ref.success:
            continue
        np.testing.assert_allclose(q, ref.x, atol=1e-5)


def test_box_halfspace_ball_step_matches_projection(rng):
    p = np.array([3.0, -2.0])
    h = Halfspace([-1.0, -1.0], -2.0)
    q = project_box_halfspace_ball(p, [-10, 1], [10, 10], halfspace=h)
    d = project_box_halfspace_ball(p, [-10, 1], [10, 10], halfspace=h, return_step=True)
    np.testing.assert_allclose(p + d, q, atol=1e-14)

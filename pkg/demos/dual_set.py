"""Search the feasible set for points y with f(y, x) outside -C.

The method's convergence argument needs some solution x for which
f(y, x) lies in -C for every feasible y, i.e. every component is <= 0.
The grid search below finds a y that breaks this for the reference
solution of each shipped instance. That explains why some runs end with
an empty outer approximation instead of converging.
"""
import numpy as np

from vqep.instances import make_ab, make_truncated_l2, reference_bimat


def worst_y(prob, x, Y):
    vals = prob.f.over_x(Y, x)
    # f(y, x) in -C fails as soon as one component is positive
    j = int(np.argmax(np.max(vals, axis=1)))
    return Y[j], vals[j]


rng = np.random.default_rng(1)

ab = make_ab(1.0, 1.0, 1.0)
g = np.stack(np.meshgrid(np.linspace(-10, 10, 201), np.linspace(1, 10, 91)), -1).reshape(-1, 2)
y, v = worst_y(ab, np.array([1.0, 1.0]), g)
print(f"ab, x = (1, 1):            y = {y}, f(y, x) = {np.round(v, 3)}")

bm = reference_bimat()
Y = rng.uniform(-10, 10, size=(20000, 3))
for x in ([10.0, 10.0, 10.0], [-10.0, 10.0, 10.0]):
    y, v = worst_y(bm, np.array(x), Y)
    print(f"bimat, x = {x}: y = {np.round(y, 2)}, f(y, x) = {np.round(v, 3)}")

l2 = make_truncated_l2(6)
Y = rng.uniform(0, 10, size=(20000, 6))
y, v = worst_y(l2, np.array([3.0, 2.5, 2.0, 0.0, 0.0, 0.0]), Y)
print(f"l2trunc, x = (3, 2.5, 2, 0, 0, 0): y = {np.round(y, 2)}, f(y, x) = {np.round(v, 3)}")

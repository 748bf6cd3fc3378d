import numpy as np
import pytest

from riemspline.manifold import FeasibilityError
from riemspline.optimize import LineSearchError, lbfgs


def rosenbrock(x):
    f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
    return f, g, None


def test_rosenbrock():
    res = lbfgs(rosenbrock, [-1.2, 1.0], tol=1e-10)
    assert res.converged
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-8)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_max_iters_reports_non_converged():
    res = lbfgs(rosenbrock, [-1.2, 1.0], max_iters=3)
    assert res.status == "non_converged" and res.iterations == 3
    assert "max_iters" in res.message


def test_infeasible_trials_are_halved():
    # feasible region x < 1; the minimizer of (x - 2)^2 restricted to it is the boundary
    def fun(x):
        if x[0] >= 1.0:
            raise FeasibilityError("outside")
        return float((x[0] - 0.9) ** 2), np.array([2 * (x[0] - 0.9)]), None

    res = lbfgs(fun, [-5.0], tol=1e-10)
    assert res.converged and res.x[0] == pytest.approx(0.9)


def test_all_infeasible_raises():
    calls = {"n": 0}

    def fun(x):
        calls["n"] += 1
        if calls["n"] > 1:
            raise FeasibilityError("nowhere")
        return 1.0, np.array([1.0]), None

    with pytest.raises(LineSearchError):
        lbfgs(fun, [0.0], max_halvings=5)


def test_accept_hook_and_refresh():
    seen, rebuilt = [], []
    A = np.diag([1.0, 100.0])

    def fun(x):
        return 0.5 * x @ A @ x, A @ x, float(x[0])

    def update(x):
        rebuilt.append(x.copy())
        return lambda g: np.linalg.solve(A, g)

    res = lbfgs(fun, [1.0, 1.0], tol=1e-12, on_accept=seen.append,
                precond=lambda g: g, precond_update=update, refresh=1)
    assert res.converged
    assert len(seen) == res.iterations + 1
    assert len(rebuilt) == res.iterations

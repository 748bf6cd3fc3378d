"""Gradient-check suite over all backends on small random paths."""

from __future__ import annotations

import math
import time
import warnings

import numpy as np

from .embedded import euclidean, sphere, torus
from .rods import RodManifold, RodShape
from .shells import ShellManifold, book_mesh, fold_book
from .solver import InterpolationProblem, PathSpace, gradient_check, initial_path

GRADCHECK_TOL = 1e-5
BACKENDS = ("euclidean", "sphere", "torus", "rod", "shell")


def _fixture(name):
    """``(model, problem, noise)`` for a backend; problems have few free points."""
    half = ("0", "1/2", "1")
    if name == "euclidean":
        m = euclidean(2)
        data = [[0.0, 0.0], [1.0, 0.5], [0.2, 1.4]]
        return m, InterpolationProblem(6, half, data, sigma=0.1), 0.3
    if name == "sphere":
        m = sphere()
        data = [[1.0, 0.0], [1.5, 1.0], [1.0, 2.0]]
        return m, InterpolationProblem(6, half, data, sigma=0.1), 0.1
    if name == "torus":
        m = torus()
        data = [[0.0, 0.0], [1.6, 2.2], [3.4, 0.6]]
        return m, InterpolationProblem(6, half, data, sigma=0.1), 0.2
    if name == "rod":
        m = RodManifold(order=4, nodes=64)
        shapes = [RodShape.circle(1.0, 4).dofs, RodShape.circle(1.2, 4, 0.05).dofs, RodShape.circle(0.9, 4).dofs]
        shapes[1][1] += 0.1
        return m, InterpolationProblem(4, half, shapes, sigma=0.1), 0.02
    if name == "shell":
        mesh = book_mesh()
        m = ShellManifold(mesh)
        data = [m.to_reduced(fold_book(mesh, a)) for a in (0.0, 0.6, 1.2)]
        return m, InterpolationProblem(4, half, data, sigma=0.1), 0.02
    raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")


def gradcheck_backend(name, n_paths=10, seed=0, model=None):
    """Max relative adjoint-vs-FD gradient error over ``n_paths`` random paths.

    The paths are the chart-linear initialization plus Gaussian noise; the
    regularization weight is 0.1 so both energy terms are exercised.
    """
    fx_model, problem, noise = _fixture(name)
    model = model or fx_model
    space = PathSpace(problem, model)
    x0 = space.extract(initial_path(problem, space)[: space.n_store])
    rng = np.random.default_rng(seed)
    errs = []
    t0 = time.perf_counter()
    for _ in range(n_paths):
        for _attempt in range(20):
            x = x0 + noise * rng.standard_normal(x0.shape)
            if np.all(model.feasible(space.assemble(x))):
                break
        errs.append(gradient_check(model, problem, x)["max_rel_err"])
    return {
        "backend": name,
        "max_rel_err": float(max(errs)),
        "errors": [float(e) for e in errs],
        "passed": bool(max(errs) <= GRADCHECK_TOL and all(math.isfinite(e) for e in errs)),
        "seconds": time.perf_counter() - t0,
    }


def gradcheck_suite(backends=BACKENDS, n_paths=10, seed=0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return [gradcheck_backend(b, n_paths, seed) for b in backends]

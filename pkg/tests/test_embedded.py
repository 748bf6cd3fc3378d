import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemspline.continuum import analytic_curve, great_circle
from riemspline.embedded import (
    builtin_surface,
    cylinder,
    cylinder_parameterization,
    cylinder_winding_energy,
    dirichlet_sweep,
    embedded_d12,
    embedded_energy,
    euclidean,
    sphere,
    sphere_distance,
    sphere_parameterization,
    torus,
    torus_parameterization,
)
from riemspline.manifold import FeasibilityError, covariant_accel, fd_derivatives

from .conftest import rel_err

SURFACES = {
    "euclidean": lambda: euclidean(2),
    "sphere": sphere,
    "torus": torus,
    "cylinder": lambda: cylinder(1.0),
}


def random_points(name, rng, n):
    y = rng.uniform(-2.0, 2.0, size=(n, 2))
    if name == "sphere":
        y[:, 0] = rng.uniform(0.3, math.pi - 0.3, size=n)
    return y


def test_closed_form_energies():
    assert embedded_energy(sphere_parameterization(), [math.pi / 2, 0.0], [math.pi / 2, math.pi / 2]) == pytest.approx(2.0)
    # the raw energy has no guard band; the model does
    assert embedded_energy(sphere_parameterization(), [0.0, 0.0], [math.pi, 0.0]) == pytest.approx(4.0)
    assert embedded_energy(torus_parameterization(2, 1), [0.0, 0.0], [math.pi, 0.0]) == pytest.approx(36.0)
    assert euclidean(2).energy([1.0, 1.0], [4.0, 5.0]) == 25.0
    assert np.allclose(embedded_d12(euclidean(2).param, [0.1, 2.0], [3.0, 1.0]), -2 * np.eye(2))


def test_sphere_guard_band():
    m = sphere()
    with pytest.raises(FeasibilityError, match="guard band"):
        m.energy([0.0, 0.0], [math.pi, 0.0])
    assert not m.feasible([5e-4, 1.0])
    assert m.feasible([2e-3, 1.0])


@pytest.mark.parametrize("name", sorted(SURFACES))
def test_analytic_derivatives_match_fd(name, rng):
    m = SURFACES[name]()
    pts = random_points(name, rng, 100)
    for y1, y2 in zip(pts[:50], pts[50:]):
        y2 = y1 + 0.3 * (y2 - y1) / (1 + np.linalg.norm(y2 - y1))
        b = fd_derivatives(m, y1, y2, order=2)
        assert rel_err(m.d1(y1, y2), b.d1) < 1e-6
        assert rel_err(m.d2(y1, y2), b.d2) < 1e-6
        assert rel_err(m.d11(y1, y2), b.d11) < 1e-5
        assert rel_err(m.d22(y1, y2), b.d22) < 1e-5
        assert rel_err(m.d12(y1, y2), b.d12) < 1e-5
        # symmetric W: the (y1, y2) mixed block seen from the other side
        assert np.allclose(m.d21(y1, y2), m.d12(y2, y1))
        assert np.array_equal(m.d21(y1, y2), m.d12(y1, y2).T)


@pytest.mark.parametrize("name", sorted(SURFACES))
def test_diagonal_identities_and_metric(name, rng):
    m = SURFACES[name]()
    for y in random_points(name, rng, 100):
        assert abs(m.energy(y, y)) <= 1e-12
        assert np.linalg.norm(m.d1(y, y)) <= 1e-8
        assert np.linalg.norm(m.d2(y, y)) <= 1e-8
        g = m.metric(y)
        J = m.param.dphi(y)
        assert rel_err(g, J.T @ J) < 1e-10
        assert rel_err(0.5 * m.d22(y, y), g) < 1e-12
        assert np.linalg.eigvalsh(g)[0] > 0


def test_sphere_metric_and_christoffel():
    m = sphere()
    th = 0.7
    assert np.allclose(m.metric([th, 0.3]), np.diag([1.0, math.sin(th) ** 2]))
    assert np.allclose(m.christoffel([math.pi / 2, 0], [1, 0], [1, 0]), 0.0, atol=1e-12)
    assert np.allclose(m.christoffel([math.pi / 2, 0], [0, 1], [0, 1]), 0.0, atol=1e-12)
    assert np.allclose(m.christoffel([math.pi / 4, 0], [0, 1], [0, 1]), [-0.5, 0.0], atol=1e-10)


def test_christoffel_bilinear_and_symmetric(rng):
    m = torus()
    y = np.array([0.4, 1.1])
    u, v, w = rng.normal(size=(3, 2))
    a, b = 0.7, -1.3
    lhs = m.christoffel(y, a * v + b * u, w)
    rhs = a * m.christoffel(y, v, w) + b * m.christoffel(y, u, w)
    assert np.allclose(lhs, rhs, atol=1e-10)
    assert np.array_equal(m.christoffel(y, v, w), m.christoffel(y, w, v))


def test_great_circle_is_geodesic():
    m = sphere()
    c = great_circle(speed=1.3)
    t = np.linspace(0.0, 1.0, 5)
    assert np.max(np.abs(covariant_accel(m, c, t))) < 1e-6


def test_metric_compatibility_along_curve():
    m = torus()

    def func(t, nu):
        t = np.asarray(t, float)
        if nu == 0:
            return np.stack([np.sin(t), t**2], axis=-1)
        if nu == 1:
            return np.stack([np.cos(t), 2 * t], axis=-1)
        return np.stack([-np.sin(t), np.full_like(t, 2.0)], axis=-1)

    c = analytic_curve(func)
    t, h = 0.37, 1e-5

    def speed2(s):
        y, v = c(np.array(s), 0), c(np.array(s), 1)
        return v @ m.metric(y) @ v

    lhs = (speed2(t + h) - speed2(t - h)) / (2 * h)
    y, v = c(np.array(t), 0), c(np.array(t), 1)
    rhs = 2 * covariant_accel(m, c, np.array(t)) @ m.metric(y) @ v
    assert abs(lhs - rhs) < 1e-4


def test_sphere_distance_and_third_order_consistency():
    assert sphere_distance([1e-2, 0.0], [math.pi / 2, 0.0]) == pytest.approx(math.pi / 2 - 1e-2)
    assert sphere_distance([0.5, 0.2], [0.5, 0.2]) == 0.0
    assert sphere_distance([math.pi / 2, 0.0], [math.pi / 2, math.pi / 2]) == pytest.approx(math.pi / 2)
    m = sphere()
    y1 = np.array([1.0, 0.3])
    direction = np.array([0.6, 0.8])
    ratios = []
    for dist in np.logspace(-3, -1, 9):
        y2 = y1 + dist * direction / np.sqrt(direction @ m.metric(y1) @ direction)
        dd = m.distance(y1, y2)
        ratios.append(abs(m.energy(y1, y2) - dd**2) / dd**3)
        assert abs(m.energy(y1, y2) - dd**2) <= 0.2 * dd**3
    assert max(ratios) < 1e-2  # chord-vs-arc error is in fact fourth order


@pytest.mark.parametrize("name", ["torus", "cylinder"])
def test_periodic_wrapping_invariance(name, rng):
    m = SURFACES[name]()
    per = m.periods()
    y1, y2 = rng.uniform(0, 1, size=(2, 2))
    for i in range(2):
        shift = np.zeros(2)
        shift[i] = per[i]
        for f in (m.energy, m.d1, m.d2, m.d11, m.d22, m.d12):
            assert np.allclose(f(y1 + shift, y2), f(y1, y2), atol=1e-12)
            assert np.allclose(f(y1, y2 - shift), f(y1, y2), atol=1e-12)


def test_cylinder_chart_speed_is_arclength():
    p = cylinder_parameterization(1.0)
    J = p.dphi(np.array([0.3, 2.0]))
    assert np.allclose(J.T @ J, np.eye(2))


def test_rank_check_detects_pole():
    p = sphere_parameterization()
    assert p.check_rank(np.array([[1.0, 0.0], [2.0, 1.0]])) > 0.5
    with pytest.raises(FeasibilityError):
        p.check_rank(np.array([[0.0, 0.0]]))


def test_builtin_surface_lookup():
    assert builtin_surface("torus", R=3.0, r=1.0).energy([0.0, 0.0], [math.pi, 0.0]) == pytest.approx(64.0)
    with pytest.raises(ValueError):
        builtin_surface("klein")


def test_winding_energy_examples():
    assert cylinder_winding_energy(0.25, 0, 2) == 0.0
    assert cylinder_winding_energy(0.4, 0, 1) == pytest.approx(0.03 / 0.0576)
    with pytest.raises(ValueError):
        cylinder_winding_energy(1.0, 0, 1)


@given(
    r=st.floats(0.01, 0.99),
    m=st.integers(-50, 50),
    n=st.integers(-50, 50),
)
def test_winding_energy_formula(r, m, n):
    expected = 3 * (m + 0.5 - r * n) ** 2 / ((1 - r) ** 2 * r**2)
    assert cylinder_winding_energy(r, m, n) == pytest.approx(expected, rel=1e-12, abs=1e-300)


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0.05, 0.95), n_max=st.integers(1, 300))
def test_dirichlet_sweep_running_minimum(r, n_max):
    rec = dirichlet_sweep(r, n_max)
    energies = [x["energy"] for x in rec]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    for x in rec:
        assert x["energy"] == cylinder_winding_energy(r, x["m"], x["n"])
    assert all(x["n"] <= n_max for x in rec)


def test_golden_ratio_sweep_gets_small():
    rec = dirichlet_sweep((math.sqrt(5) - 1) / 2, 1000)
    assert rec[-1]["energy"] < 1e-3
    assert rec[-1]["n"] > 100  # the winding number grows along the sequence

"""Manifolds parameterized over a chart and embedded in Euclidean space.

The pair energy is the squared embedding distance ``|phi(y1) - phi(y2)|^2``
and all derivatives are analytic in terms of ``phi``, ``Dphi`` and
``D2phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .manifold import FeasibilityError, ManifoldModel

SPHERE_POLE_GUARD = 1e-3
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Parameterization:
    """Chart map ``phi: R^d -> R^m`` with its first two derivatives.

    ``dphi`` returns shape ``(..., m, d)`` and ``d2phi`` shape
    ``(..., m, d, d)``.  ``periods[i]`` is the period of chart coordinate
    ``i`` (0 when it does not wrap).
    """

    dim: int
    embed_dim: int
    phi: Callable
    dphi: Callable
    d2phi: Callable
    periods: tuple = ()
    name: str = "chart"
    params: dict = field(default_factory=dict)

    def period_array(self):
        if not self.periods:
            return np.zeros(self.dim)
        return np.asarray(self.periods, dtype=float)

    def min_singular_value(self, samples):
        """Smallest singular value of ``Dphi`` over the sample points."""
        jac = self.dphi(np.asarray(samples, dtype=float))
        return float(np.min(np.linalg.svd(jac, compute_uv=False)))

    def check_rank(self, samples, tol=1e-8):
        smin = self.min_singular_value(samples)
        if smin <= tol:
            raise FeasibilityError(
                f"{self.name}: Dphi loses rank on the sampled domain (sigma_min={smin:.3e})"
            )
        return smin


def euclidean_parameterization(dim=2):
    def phi(y):
        return np.asarray(y, dtype=float)

    def dphi(y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.eye(dim), y.shape[:-1] + (dim, dim)).copy()

    def d2phi(y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape[:-1] + (dim, dim, dim))

    return Parameterization(dim, dim, phi, dphi, d2phi, (0.0,) * dim, "euclidean", {"dim": dim})


def sphere_parameterization(radius=1.0):
    """Spherical coordinates ``(theta, phi)``; theta is the polar angle."""
    if radius <= 0:
        raise ValueError("sphere radius must be positive")
    r = float(radius)

    def phi(y):
        th, ph = y[..., 0], y[..., 1]
        st = np.sin(th)
        return r * np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1)

    def dphi(y):
        th, ph = y[..., 0], y[..., 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        col_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
        col_p = np.stack([-st * sp, st * cp, np.zeros_like(th)], axis=-1)
        return r * np.stack([col_t, col_p], axis=-1)

    def d2phi(y):
        th, ph = y[..., 0], y[..., 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        z = np.zeros_like(th)
        tt = np.stack([-st * cp, -st * sp, -ct], axis=-1)
        tp = np.stack([-ct * sp, ct * cp, z], axis=-1)
        pp = np.stack([-st * cp, -st * sp, z], axis=-1)
        row_t = np.stack([tt, tp], axis=-1)
        row_p = np.stack([tp, pp], axis=-1)
        return r * np.stack([row_t, row_p], axis=-2)

    return Parameterization(2, 3, phi, dphi, d2phi, (0.0, TWO_PI), "sphere", {"radius": r})


def torus_parameterization(R=2.0, r=1.0):
    """``phi(theta, psi) = ((R + r cos psi) cos theta, (R + r cos psi) sin theta, r sin psi)``."""
    if not R > r > 0:
        raise ValueError("torus requires R > r > 0")
    R, r = float(R), float(r)

    def phi(y):
        th, ps = y[..., 0], y[..., 1]
        rho = R + r * np.cos(ps)
        return np.stack([rho * np.cos(th), rho * np.sin(th), r * np.sin(ps)], axis=-1)

    def dphi(y):
        th, ps = y[..., 0], y[..., 1]
        rho = R + r * np.cos(ps)
        ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ps), np.sin(ps)
        col_t = np.stack([-rho * st, rho * ct, np.zeros_like(th)], axis=-1)
        col_p = np.stack([-r * sp * ct, -r * sp * st, r * cp], axis=-1)
        return np.stack([col_t, col_p], axis=-1)

    def d2phi(y):
        th, ps = y[..., 0], y[..., 1]
        rho = R + r * np.cos(ps)
        ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ps), np.sin(ps)
        z = np.zeros_like(th)
        tt = np.stack([-rho * ct, -rho * st, z], axis=-1)
        tp = np.stack([r * sp * st, -r * sp * ct, z], axis=-1)
        pp = np.stack([-r * cp * ct, -r * cp * st, -r * sp], axis=-1)
        row_t = np.stack([tt, tp], axis=-1)
        row_p = np.stack([tp, pp], axis=-1)
        return np.stack([row_t, row_p], axis=-2)

    return Parameterization(2, 3, phi, dphi, d2phi, (TWO_PI, TWO_PI), "torus", {"R": R, "r": r})


def cylinder_parameterization(perimeter=1.0):
    """``phi(theta, z) = (P/2pi cos 2pi theta, P/2pi sin 2pi theta, z)``.

    Chart speed in ``theta`` equals the perimeter ``P``; theta has period 1.
    """
    if perimeter <= 0:
        raise ValueError("cylinder perimeter must be positive")
    P = float(perimeter)
    c = P / TWO_PI

    def phi(y):
        a = TWO_PI * y[..., 0]
        return np.stack([c * np.cos(a), c * np.sin(a), y[..., 1]], axis=-1)

    def dphi(y):
        a = TWO_PI * y[..., 0]
        z = np.zeros_like(a)
        col_t = np.stack([-P * np.sin(a), P * np.cos(a), z], axis=-1)
        col_z = np.stack([z, z, np.ones_like(a)], axis=-1)
        return np.stack([col_t, col_z], axis=-1)

    def d2phi(y):
        a = TWO_PI * y[..., 0]
        z = np.zeros_like(a)
        tt = np.stack([-P * TWO_PI * np.cos(a), -P * TWO_PI * np.sin(a), z], axis=-1)
        zero = np.stack([z, z, z], axis=-1)
        row_t = np.stack([tt, zero], axis=-1)
        row_z = np.stack([zero, zero], axis=-1)
        return np.stack([row_t, row_z], axis=-2)

    return Parameterization(2, 3, phi, dphi, d2phi, (1.0, 0.0), "cylinder", {"perimeter": P})


# -- the pair energy and its derivatives ------------------------------------


def embedded_energy(p, y1, y2):
    diff = p.phi(np.asarray(y1, float)) - p.phi(np.asarray(y2, float))
    return np.sum(diff * diff, axis=-1)


def embedded_d1(p, y1, y2):
    y1 = np.asarray(y1, float)
    diff = p.phi(y1) - p.phi(np.asarray(y2, float))
    return 2.0 * np.einsum("...m,...md->...d", diff, p.dphi(y1))


def embedded_d2(p, y1, y2):
    return embedded_d1(p, y2, y1)


def embedded_d11(p, y1, y2):
    y1 = np.asarray(y1, float)
    j1 = p.dphi(y1)
    diff = p.phi(y1) - p.phi(np.asarray(y2, float))
    return 2.0 * np.einsum("...mi,...mj->...ij", j1, j1) + 2.0 * np.einsum(
        "...m,...mij->...ij", diff, p.d2phi(y1)
    )


def embedded_d22(p, y1, y2):
    return embedded_d11(p, y2, y1)


def embedded_d12(p, y1, y2):
    """Mixed block, ``[i, j] = d^2 W / dy1_i dy2_j = -2 (Dphi(y1)^T Dphi(y2))_ij``."""
    j1 = p.dphi(np.asarray(y1, float))
    j2 = p.dphi(np.asarray(y2, float))
    return -2.0 * np.einsum("...mi,...mj->...ij", j1, j2)


class EmbeddedManifold(ManifoldModel):
    """Backend for a parameterized surface with squared chord energy.

    Parameters
    ----------
    param : Parameterization
    theta_guard : float, optional
        Only for spheres: the polar coordinate must stay in
        ``[guard, pi - guard]``.
    """

    has_analytic_derivatives = True

    def __init__(self, param, *, theta_guard=None, debug=None):
        super().__init__(param.dim, debug=debug)
        self.param = param
        self.name = param.name
        self.theta_guard = theta_guard
        self.has_closed_form_distance = param.name in ("sphere", "euclidean")

    def periods(self):
        return self.param.period_array()

    def feasible(self, y):
        y = np.asarray(y, dtype=float)
        ok = np.all(np.isfinite(y), axis=-1)
        if self.theta_guard is not None:
            th = y[..., 0]
            ok &= (th >= self.theta_guard) & (th <= math.pi - self.theta_guard)
        return ok

    def violation(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            return "non-finite chart coordinates"
        th = y[..., 0][~self.feasible(y)].ravel()
        return (
            f"chart coordinate theta={th[0]:.6g} outside guard band "
            f"[{self.theta_guard:g}, pi-{self.theta_guard:g}]; re-chart the problem"
        )

    def embed(self, y):
        return self.param.phi(np.asarray(y, dtype=float))

    def _energy(self, y1, y2):
        return embedded_energy(self.param, y1, y2)

    def _d1(self, y1, y2):
        return embedded_d1(self.param, y1, y2)

    def _d2(self, y1, y2):
        return embedded_d2(self.param, y1, y2)

    def _d11(self, y1, y2):
        return embedded_d11(self.param, y1, y2)

    def _d22(self, y1, y2):
        return embedded_d22(self.param, y1, y2)

    def _d12(self, y1, y2):
        return embedded_d12(self.param, y1, y2)

    def _metric(self, y):
        jac = self.param.dphi(y)
        return np.einsum("...mi,...mj->...ij", jac, jac)

    def _metric_derivative(self, y):
        jac = self.param.dphi(y)
        hes = self.param.d2phi(y)
        # d_a g_ij = D2phi[:, i, a] . Dphi[:, j] + Dphi[:, i] . D2phi[:, j, a]
        t = np.einsum("...mia,...mj->...aij", hes, jac)
        return t + np.swapaxes(t, -1, -2)

    def distance(self, y1, y2):
        if self.param.name == "sphere":
            return sphere_distance(y1, y2, self.param.params["radius"])
        if self.param.name == "euclidean":
            return np.sqrt(self._energy(np.asarray(y1, float), np.asarray(y2, float)))
        return super().distance(y1, y2)


def euclidean(dim=2, **kw):
    return EmbeddedManifold(euclidean_parameterization(dim), **kw)


def sphere(radius=1.0, *, pole_guard=SPHERE_POLE_GUARD, **kw):
    return EmbeddedManifold(sphere_parameterization(radius), theta_guard=pole_guard, **kw)


def torus(R=2.0, r=1.0, **kw):
    return EmbeddedManifold(torus_parameterization(R, r), **kw)


def cylinder(perimeter=1.0, **kw):
    return EmbeddedManifold(cylinder_parameterization(perimeter), **kw)


BUILTIN_SURFACES = {
    "euclidean": euclidean,
    "sphere": sphere,
    "torus": torus,
    "cylinder": cylinder,
}


def builtin_surface(name, **params):
    """Construct a built-in surface by name, e.g. ``builtin_surface("torus", R=2, r=1)``."""
    try:
        factory = BUILTIN_SURFACES[name]
    except KeyError:
        raise ValueError(f"unknown surface {name!r}; choose from {sorted(BUILTIN_SURFACES)}")
    return factory(**params)


def sphere_distance(y1, y2, radius=1.0):
    """Great-circle distance between two chart points of a sphere."""
    p = sphere_parameterization(radius)
    a = p.phi(np.asarray(y1, float)) / radius
    b = p.phi(np.asarray(y2, float)) / radius
    c = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return radius * np.arccos(c)


# -- winding curves on the cylinder ------------------------------------------


def cylinder_winding_energy(r, m, n):
    """Spline energy of the winding cubic through ``(0, m + 1/2, n)`` at ``(0, r, 1)``.

    On a cylinder of perimeter one, this is ``3 (m + 1/2 - r n)^2 / ((1 - r)^2 r^2)``.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    return 3.0 * (m + 0.5 - r * n) ** 2 / ((1.0 - r) ** 2 * r**2)


def dirichlet_sweep(r, n_max):
    """Best winding pairs ``(m, n)`` with ``1 <= n <= n_max``.

    Returns the running-minimum records as a list of dicts with keys
    ``n``, ``m``, ``energy``; energies are non-increasing.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    records = []
    best = math.inf
    for n in range(1, int(n_max) + 1):
        m0 = round(r * n - 0.5)
        for m in (m0 - 1, m0, m0 + 1):
            e = cylinder_winding_energy(r, m, n)
            if e < best:
                best = e
                records.append({"n": n, "m": m, "energy": e})
        if best == 0.0:
            break
    return records

"""Manifold abstraction shared by every backend.

A manifold is described entirely through a two-point energy ``W[y1, y2]``
approximating the squared Riemannian distance.  Everything else (metric,
Christoffel operator, covariant acceleration) is derived from it.

All operations accept arrays with arbitrary leading batch axes; the last axis
holds the ``dof_count`` chart coordinates.  Covectors are plain coordinate
vectors and bilinear operators are ``(d, d)`` matrices.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# Relative steps (scaled by 1 + |y|) of the real finite-difference fallback.
FD_STEP_GRADIENT = 5e-6
FD_STEP_HESSIAN = 1e-4
FD_STEP_METRIC = 1e-5

METRIC_EIGEN_FLOOR = 1e-12
RELEASE_VALIDATE_EVERY = 16


class ManifoldError(Exception):
    """Base class for numerical errors raised by manifold backends."""


class FeasibilityError(ManifoldError, ValueError):
    """A point violates the feasibility constraints of its backend."""


class DegeneracyError(ManifoldError, ArithmeticError):
    """A metric or Hessian is singular or indefinite."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass
class DerivativeBundle:
    """Finite-difference derivatives of ``W`` at a pair of points.

    ``d11``, ``d22`` and ``d12`` are only filled for ``order=2``.  ``d12[i, j]``
    is the mixed derivative with respect to ``y1[i]`` and ``y2[j]``.
    """

    d1: np.ndarray
    d2: np.ndarray
    d11: np.ndarray | None = None
    d22: np.ndarray | None = None
    d12: np.ndarray | None = None
    step_gradient: float = FD_STEP_GRADIENT
    step_hessian: float = FD_STEP_HESSIAN

    @property
    def d21(self):
        return None if self.d12 is None else np.swapaxes(self.d12, -1, -2)


class ManifoldModel:
    """Base class of all manifold backends.

    Subclasses implement ``_energy`` and ``feasible``; analytic derivatives are
    optional and default to central finite differences of ``_energy``.
    Instances are immutable after construction.

    Parameters
    ----------
    dof_count : int
        Number of chart coordinates ``d``.
    debug : bool, optional
        Validate every call when true, otherwise every 16th call.  Defaults to
        the interpreter's ``__debug__`` flag.
    """

    has_analytic_derivatives = False
    has_closed_form_distance = False
    name = "manifold"

    def __init__(self, dof_count, *, debug=None):
        self.dof_count = int(dof_count)
        self.debug = __debug__ if debug is None else bool(debug)
        self._calls = itertools.count()

    # -- feasibility -----------------------------------------------------
    def periods(self):
        """Per-coordinate period (0 for non-periodic coordinates)."""
        return np.zeros(self.dof_count)

    def feasible(self, y):
        """Boolean mask over the batch axes: which points are feasible."""
        y = np.asarray(y, dtype=float)
        return np.all(np.isfinite(y), axis=-1)

    def violation(self, y):
        """Describe why the first infeasible point of ``y`` fails."""
        return "non-finite coordinates"

    def validate(self, y):
        """Raise :class:`FeasibilityError` unless every point of ``y`` is feasible."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dof_count:
            raise FeasibilityError(
                f"{self.name}: expected {self.dof_count} coordinates, got {y.shape[-1]}"
            )
        ok = self.feasible(y)
        if not np.all(ok):
            raise FeasibilityError(f"{self.name}: {self.violation(y)}")

    def _checked(self, *ys):
        count = next(self._calls)
        if self.debug or count % RELEASE_VALIDATE_EVERY == 0:
            for y in ys:
                self.validate(y)
        return [np.asarray(y, dtype=float) for y in ys]

    # -- public API --------------------------------------------------------
    def energy(self, y1, y2):
        y1, y2 = self._checked(y1, y2)
        return self._energy(y1, y2)

    def d1(self, y1, y2):
        y1, y2 = self._checked(y1, y2)
        return self._d1(y1, y2)

    def d2(self, y1, y2):
        y1, y2 = self._checked(y1, y2)
        return self._d2(y1, y2)

    def d11(self, y1, y2):
        y1, y2 = self._checked(y1, y2)
        return self._d11(y1, y2)

    def d22(self, y1, y2):
        y1, y2 = self._checked(y1, y2)
        return self._d22(y1, y2)

    def d12(self, y1, y2):
        y1, y2 = self._checked(y1, y2)
        return self._d12(y1, y2)

    def d21(self, y1, y2):
        return np.swapaxes(self.d12(y1, y2), -1, -2)

    def d12_apply(self, y1, y2, v):
        """``d12 W[y1, y2] @ v``: gradient in ``y1`` of the ``y2``-derivative along ``v``."""
        y1, y2 = self._checked(y1, y2)
        return self._d12_apply(y1, y2, np.asarray(v, dtype=float))

    def d21_apply(self, y1, y2, v):
        """``d12 W[y1, y2]^T @ v``: gradient in ``y2`` of the ``y1``-derivative along ``v``."""
        y1, y2 = self._checked(y1, y2)
        return self._d21_apply(y1, y2, np.asarray(v, dtype=float))

    def metric(self, y):
        """Metric matrix ``g_y = 1/2 d22 W[y, y]``; raises if not SPD."""
        (y,) = self._checked(y)
        g = self._metric(y)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        check_spd(g, what=f"{self.name} metric")
        return g

    def metric_derivative(self, y):
        """``Dg[..., a, i, j] = d g_ij / d y_a`` by central differences."""
        (y,) = self._checked(y)
        return self._metric_derivative(y)

    def christoffel(self, y, v, w):
        """Christoffel operator ``Gamma_y(v, w)``.

        Solves ``2 g(Gamma, z) = Dg(w)(v, z) - Dg(z)(v, w) + Dg(v)(w, z)`` for
        all ``z`` and symmetrizes in ``(v, w)`` so the result is exactly
        symmetric.
        """
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        g = self.metric(y)
        dg = self.metric_derivative(y)
        raw_vw = _christoffel_rhs(dg, v, w)
        raw_wv = _christoffel_rhs(dg, w, v)
        rhs = 0.5 * (raw_vw + raw_wv)
        return 0.5 * _spd_solve(g, rhs)

    def quadratic_part(self, v, w):
        """Spatially constant quadratic part of the metric, if the backend has one."""
        return None

    def distance(self, y1, y2):
        raise NotImplementedError(f"{self.name} has no closed-form distance")

    # -- overridable kernels ----------------------------------------------
    def _energy(self, y1, y2):
        raise NotImplementedError

    def _d1(self, y1, y2):
        return _fd_gradient(self, y1, y2, slot=1)

    def _d2(self, y1, y2):
        return _fd_gradient(self, y1, y2, slot=2)

    def _d11(self, y1, y2):
        return _fd_hessian(self, y1, y2, 1, 1)

    def _d22(self, y1, y2):
        return _fd_hessian(self, y1, y2, 2, 2)

    def _d12(self, y1, y2):
        return _fd_hessian(self, y1, y2, 1, 2)

    def _d12_apply(self, y1, y2, v):
        return np.einsum("...ij,...j->...i", self._d12(y1, y2), v)

    def _d21_apply(self, y1, y2, v):
        return np.einsum("...ji,...j->...i", self._d12(y1, y2), v)

    def _metric(self, y):
        return 0.5 * self._d22(y, y)

    def _metric_derivative(self, y):
        d = self.dof_count
        h = FD_STEP_METRIC * (1.0 + np.linalg.norm(y, axis=-1))
        eye = np.eye(d)
        out = np.empty(y.shape[:-1] + (d, d, d))
        for a in range(d):
            step = h[..., None] * eye[a]
            gp = self._metric(y + step)
            gm = self._metric(y - step)
            out[..., a, :, :] = (gp - gm) / (2.0 * h[..., None, None])
        return 0.5 * (out + np.swapaxes(out, -1, -2))


def _christoffel_rhs(dg, v, w):
    # r_c = Dg(w)(v, c) - Dg(c)(v, w) + Dg(v)(w, c)
    t1 = np.einsum("...a,...aic,...i->...c", w, dg, v)
    t2 = np.einsum("...cij,...i,...j->...c", dg, v, w)
    t3 = np.einsum("...a,...aic,...i->...c", v, dg, w)
    return t1 - t2 + t3


def check_spd(g, what="matrix"):
    """Raise :class:`DegeneracyError` if any matrix in the batch is not SPD."""
    eig = np.linalg.eigvalsh(g)
    lo = eig[..., 0]
    scale = np.maximum(1.0, eig[..., -1])
    bad = lo <= METRIC_EIGEN_FLOOR * scale
    if np.any(bad):
        worst = float(np.min(lo))
        raise DegeneracyError(
            f"{what} is not positive definite (smallest eigenvalue {worst:.3e})",
            min_eigenvalue=worst,
        )


def _spd_solve(g, rhs):
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("metric factorization failed") from exc
    z = np.linalg.solve(chol, rhs[..., None])
    return np.linalg.solve(np.swapaxes(chol, -1, -2), z)[..., 0]


# -- finite differences -------------------------------------------------------


def _step(y, rel):
    return rel * (1.0 + np.linalg.norm(y, axis=-1))


def _guarded_energy(model, a, b):
    if not (np.all(model.feasible(a)) and np.all(model.feasible(b))):
        raise FeasibilityError(
            f"{model.name}: finite-difference stencil left the feasible region; "
            "move the point further from the feasibility boundary"
        )
    return model._energy(a, b)


def _fd_gradient(model, y1, y2, slot):
    y1, y2 = np.broadcast_arrays(np.asarray(y1, float), np.asarray(y2, float))
    d = y1.shape[-1]
    base = y1 if slot == 1 else y2
    h = _step(base, FD_STEP_GRADIENT)[..., None]
    # perturbation stack along a new leading axis
    shift = np.eye(d).reshape((d,) + (1,) * (y1.ndim - 1) + (d,)) * h
    if slot == 1:
        fp = _guarded_energy(model, y1 + shift, y2)
        fm = _guarded_energy(model, y1 - shift, y2)
    else:
        fp = _guarded_energy(model, y1, y2 + shift)
        fm = _guarded_energy(model, y1, y2 - shift)
    grad = (fp - fm) / (2.0 * h[..., 0])
    return np.moveaxis(grad, 0, -1)


def _fd_hessian(model, y1, y2, slot_a, slot_b):
    y1, y2 = np.broadcast_arrays(np.asarray(y1, float), np.asarray(y2, float))
    d = y1.shape[-1]
    nb = y1.ndim - 1
    ha = _step(y1 if slot_a == 1 else y2, FD_STEP_HESSIAN)
    hb = _step(y1 if slot_b == 1 else y2, FD_STEP_HESSIAN)
    eye = np.eye(d)
    ea = eye.reshape((d, 1) + (1,) * nb + (d,)) * ha[..., None]
    eb = eye.reshape((1, d) + (1,) * nb + (d,)) * hb[..., None]

    def ev(sa, sb):
        p1 = y1 + (sa * ea if slot_a == 1 else 0) + (sb * eb if slot_b == 1 else 0)
        p2 = y2 + (sa * ea if slot_a == 2 else 0) + (sb * eb if slot_b == 2 else 0)
        p1, p2 = np.broadcast_arrays(p1, p2)
        return _guarded_energy(model, p1, p2)

    hess = (ev(1, 1) - ev(1, -1) - ev(-1, 1) + ev(-1, -1)) / (4.0 * ha * hb)
    hess = np.moveaxis(np.moveaxis(hess, 0, -1), 0, -1)
    if slot_a == slot_b:
        hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    return hess


def fd_derivatives(model, y1, y2, order=1):
    """Central-difference derivatives of ``model``'s energy at ``(y1, y2)``.

    First derivatives use the step ``5e-6 (1 + |y|)``, second derivatives the
    four-point mixed stencil with step ``1e-4 (1 + |y|)``.  Works on any
    backend and serves as the oracle for analytic derivatives.

    Raises
    ------
    FeasibilityError
        If a stencil point leaves the feasible set.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    bundle = DerivativeBundle(
        d1=_fd_gradient(model, y1, y2, 1), d2=_fd_gradient(model, y1, y2, 2)
    )
    if order == 2:
        bundle.d11 = _fd_hessian(model, y1, y2, 1, 1)
        bundle.d22 = _fd_hessian(model, y1, y2, 2, 2)
        bundle.d12 = _fd_hessian(model, y1, y2, 1, 2)
    return bundle


def covariant_accel(model, curve, t):
    """Covariant derivative of the velocity, ``y'' + Gamma_y(y', y')``.

    ``curve`` is any object with ``__call__(t, nu)`` returning the ``nu``-th
    derivative and a ``domain`` pair, e.g. a continuum ``ContinuousCurve``.
    """
    t = np.asarray(t, dtype=float)
    lo, hi = curve.domain
    if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
        raise ValueError(f"time outside curve domain [{lo}, {hi}]")
    y = curve(t, 0)
    v = curve(t, 1)
    a = curve(t, 2)
    return a + model.christoffel(y, v, v)

"""Closed planar viscous rods in a truncated Fourier basis.

A shape is a mean-zero curve ``y: S^1 -> R^2`` stored as Fourier
coefficients, component-major::

    [x: a_1..a_N, b_1..b_N, y: a_1..a_N, b_1..b_N]

so the DOF vector has length ``4N``.  The dissipation between two shapes is

    W[y, z] = int (delta/2) (1 - |z_s|^2/|y_s|^2)^2 |y_s| + delta^3 |z_ss - y_ss|^2 ds

evaluated by the trapezoidal rule on ``M`` equispaced nodes.  Derivatives
are taken with respect to the node samples and pulled back through the
fixed evaluation matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .manifold import DegeneracyError, ManifoldModel

TWO_PI = 2.0 * math.pi

DEFAULT_ORDER = 16
DEFAULT_NODES = 128
DEFAULT_DELTA = 0.1
DEFAULT_C_MIN = 1e-3


class RodQuadrature:
    """Trapezoidal rule on ``M`` equispaced nodes ``s_j = j/M`` of the circle.

    Holds the evaluation matrices ``E0``, ``E1``, ``E2`` of shape ``(M, 2N)``
    mapping one component's coefficients to samples of the curve and its
    first two arclength-parameter derivatives.  Use :func:`rod_quadrature`
    to get a shared cached instance.
    """

    def __init__(self, order, nodes):
        order, nodes = int(order), int(nodes)
        if order < 1:
            raise ValueError("truncation order N must be at least 1")
        if nodes % 2:
            raise ValueError(f"node count M must be even, got {nodes}")
        if nodes < 4 * order + 4:
            raise ValueError(f"node count M={nodes} below 4N+4={4 * order + 4}")
        self.order = order
        self.nodes = nodes
        self.s = np.arange(nodes) / nodes
        self.weight = 1.0 / nodes
        k = np.arange(1, order + 1)
        ang = TWO_PI * np.outer(self.s, k)
        c, s = np.cos(ang), np.sin(ang)
        w = TWO_PI * k
        self.E0 = np.hstack([c, s])
        self.E1 = np.hstack([-w * s, w * c])
        self.E2 = np.hstack([-(w**2) * c, -(w**2) * s])
        for mat in (self.E0, self.E1, self.E2):
            mat.setflags(write=False)
        # Gram matrix of second derivatives, (1/M) E2^T E2
        self.G2 = self.E2.T @ self.E2 / nodes
        self.G2.setflags(write=False)

    def __repr__(self):
        return f"RodQuadrature(N={self.order}, M={self.nodes})"


@lru_cache(maxsize=32)
def rod_quadrature(order=DEFAULT_ORDER, nodes=DEFAULT_NODES):
    return RodQuadrature(order, nodes)


@dataclass(frozen=True)
class RodShape:
    """A closed planar curve given by its Fourier coefficients.

    ``coeffs`` has shape ``(2, 2N)``: row ``c`` holds ``a_1..a_N, b_1..b_N``
    of spatial component ``c``.  The constant mode is absent, which fixes
    the translation gauge.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != 2 or c.shape[1] % 2:
            raise ValueError(f"coefficients must have shape (2, 2N), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self):
        return self.coeffs.shape[1] // 2

    @property
    def dofs(self):
        return self.coeffs.reshape(-1).copy()

    @classmethod
    def from_dofs(cls, y):
        y = np.asarray(y, dtype=float)
        return cls(y.reshape(2, -1))

    @classmethod
    def circle(cls, radius=1.0, order=DEFAULT_ORDER, phase=0.0):
        """Counter-clockwise circle ``radius (cos 2pi(s+phase), sin 2pi(s+phase))``."""
        c = np.zeros((2, 2 * order))
        a = TWO_PI * phase
        c[0, 0], c[0, order] = radius * math.cos(a), -radius * math.sin(a)
        c[1, 0], c[1, order] = radius * math.sin(a), radius * math.cos(a)
        return cls(c)

    @classmethod
    def from_polygon(cls, points, order=DEFAULT_ORDER, samples=None):
        """Project a closed polygon onto the first ``order`` harmonics.

        The polygon is resampled uniformly in arclength and transformed with
        a real FFT; the mean is dropped.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise ValueError("polygon must be an (n, 2) array with n >= 3")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        closed = np.vstack([pts, pts[:1]])
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        total = seg.sum()
        if total <= 0:
            raise ValueError("polygon has zero perimeter")
        arc = np.concatenate([[0.0], np.cumsum(seg)]) / total
        n = samples or max(8 * order, 256)
        s = np.arange(n) / n
        res = np.column_stack([np.interp(s, arc, closed[:, i]) for i in range(2)])
        spec = np.fft.rfft(res, axis=0)[1 : order + 1]
        if spec.shape[0] < order:
            raise ValueError("too few resampling points for the requested order")
        a = 2.0 * spec.real / n
        b = -2.0 * spec.imag / n
        return cls(np.hstack([a.T, b.T]))

    def sample(self, nodes=256):
        """Curve points at ``nodes`` equispaced parameters, shape ``(nodes, 2)``."""
        k = np.arange(1, self.order + 1)
        ang = TWO_PI * np.outer(np.arange(nodes) / nodes, k)
        basis = np.hstack([np.cos(ang), np.sin(ang)])
        return basis @ self.coeffs.T

    def rotated(self, angle):
        c, s = math.cos(angle), math.sin(angle)
        return RodShape(np.array([[c, -s], [s, c]]) @ self.coeffs)


def _coeffs(y, order):
    y = np.asarray(y, dtype=float)
    return y.reshape(y.shape[:-1] + (2, 2 * order))


def rod_eval(y, quad):
    """Samples of ``y``, ``y_s`` and ``y_ss`` at the nodes, each ``(..., M, 2)``."""
    if isinstance(y, RodShape):
        y = y.dofs
    c = _coeffs(y, quad.order)
    return tuple(np.einsum("mk,...ck->...mc", E, c) for E in (quad.E0, quad.E1, quad.E2))


def _node_terms(y1, y2, quad):
    c1 = _coeffs(y1, quad.order)
    c2 = _coeffs(y2, quad.order)
    A = np.einsum("mk,...ck->...mc", quad.E1, c1)
    B = np.einsum("mk,...ck->...mc", quad.E1, c2)
    A2 = np.einsum("mk,...ck->...mc", quad.E2, c1)
    B2 = np.einsum("mk,...ck->...mc", quad.E2, c2)
    p = np.sum(A * A, axis=-1)
    q = np.sum(B * B, axis=-1)
    return A, B, A2, B2, p, q


def rod_energy_from_samples(ys, zs, yss, zss, delta):
    """Trapezoidal dissipation from node samples of ``y_s``, ``z_s``, ``y_ss``, ``z_ss``."""
    p = np.sum(ys * ys, axis=-1)
    q = np.sum(zs * zs, axis=-1)
    u = 1.0 - q / p
    stretch = 0.5 * delta * u * u * np.sqrt(p)
    bend = delta**3 * np.sum((zss - yss) ** 2, axis=-1)
    return np.mean(stretch + bend, axis=-1)


def _check_density(p, c_min, which):
    lo = np.sqrt(np.min(p))
    if not lo >= c_min:
        raise DegeneracyError(
            f"rod {which}: arclength density |y_s|={lo:.3e} below c_min={c_min:g}"
        )


def rod_energy(shape1, shape2, delta=DEFAULT_DELTA, quad=None, c_min=DEFAULT_C_MIN):
    """Viscous-rod dissipation between two shapes (RodShape or DOF arrays)."""
    y1 = shape1.dofs if isinstance(shape1, RodShape) else np.asarray(shape1, float)
    y2 = shape2.dofs if isinstance(shape2, RodShape) else np.asarray(shape2, float)
    if quad is None:
        quad = rod_quadrature(y1.shape[-1] // 4, max(DEFAULT_NODES, y1.shape[-1] + 4))
    A, B, A2, B2, p, q = _node_terms(y1, y2, quad)
    _check_density(p, c_min, "first argument")
    _check_density(q, c_min, "second argument")
    return rod_energy_from_samples(A, B, A2, B2, delta)


def _f_derivatives(p, q, delta, second):
    u = 1.0 - q / p
    rp = 1.0 / np.sqrt(p)
    fq = -delta * u * rp
    fp = delta * u * q * rp**3 + 0.25 * delta * u * u * rp
    if not second:
        return fp, fq
    fqq = delta * rp**3
    fpq = -delta * q * rp**5 + 0.5 * delta * u * rp**3
    fpp = delta * q * q * rp**7 - delta * q * u * rp**5 - 0.125 * delta * u * u * rp**3
    return fp, fq, fpp, fpq, fqq


def _pull_vec(quad, g1, g2):
    # node covectors (..., M, 2) for first/second derivative samples -> coefficients
    out = np.einsum("mk,...mc->...ck", quad.E1, g1) + np.einsum("mk,...mc->...ck", quad.E2, g2)
    out = out / quad.nodes
    return out.reshape(out.shape[:-2] + (-1,))


def _pull_mat(quad, h1, bend):
    # h1: (..., M, 2, 2) node Hessian in the first-derivative samples
    M = quad.nodes
    out = np.einsum("mk,...mcd,ml->...ckdl", quad.E1, h1, quad.E1) / M
    n2 = quad.E2.shape[1]
    eye2 = np.eye(2)
    out = out + bend * np.einsum("cd,kl->ckdl", eye2, quad.G2)
    return out.reshape(out.shape[:-4] + (2 * n2, 2 * n2))


class RodManifold(ManifoldModel):
    """Viscous-rod backend with analytic derivatives.

    Parameters
    ----------
    order : int
        Truncation order ``N``; the DOF count is ``4N``.
    nodes : int
        Quadrature node count ``M`` (even, ``>= 4N+4``).
    delta : float
        Thickness weighting stretching against bending.
    c_min : float
        Lower bound on ``|y_s|`` at every node.
    """

    has_analytic_derivatives = True
    name = "rod"

    def __init__(self, order=DEFAULT_ORDER, nodes=DEFAULT_NODES, delta=DEFAULT_DELTA,
                 c_min=DEFAULT_C_MIN, *, debug=None):
        if not delta > 0:
            raise ValueError("rod thickness delta must be positive")
        if not c_min > 0:
            raise ValueError("c_min must be positive")
        super().__init__(4 * int(order), debug=debug)
        self.quad = rod_quadrature(int(order), int(nodes))
        self.order = int(order)
        self.delta = float(delta)
        self.c_min = float(c_min)

    def feasible(self, y):
        y = np.asarray(y, dtype=float)
        ok = np.all(np.isfinite(y), axis=-1)
        ys = np.einsum("mk,...ck->...mc", self.quad.E1, _coeffs(np.nan_to_num(y), self.order))
        return ok & (np.min(np.linalg.norm(ys, axis=-1), axis=-1) >= self.c_min)

    def violation(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            return "non-finite Fourier coefficients"
        _, ys, _ = rod_eval(y, self.quad)
        lo = float(np.min(np.linalg.norm(ys, axis=-1)))
        return f"arclength density |y_s|={lo:.3e} below c_min={self.c_min:g}"

    def embed(self, y, nodes=None):
        """Node samples of the curve, ``(..., M, 2)``."""
        if nodes is None:
            return rod_eval(y, self.quad)[0]
        shape = RodShape.from_dofs(np.asarray(y).reshape(-1)[: self.dof_count])
        return shape.sample(nodes)

    def _energy(self, y1, y2):
        A, B, A2, B2, p, q = _node_terms(y1, y2, self.quad)
        return rod_energy_from_samples(A, B, A2, B2, self.delta)

    def _d1(self, y1, y2):
        A, B, A2, B2, p, q = _node_terms(y1, y2, self.quad)
        fp, _ = _f_derivatives(p, q, self.delta, False)
        g1 = 2.0 * A * fp[..., None]
        g2 = -2.0 * self.delta**3 * (B2 - A2)
        return _pull_vec(self.quad, g1, g2)

    def _d2(self, y1, y2):
        A, B, A2, B2, p, q = _node_terms(y1, y2, self.quad)
        _, fq = _f_derivatives(p, q, self.delta, False)
        g1 = 2.0 * B * fq[..., None]
        g2 = 2.0 * self.delta**3 * (B2 - A2)
        return _pull_vec(self.quad, g1, g2)

    def _hess_terms(self, y1, y2):
        A, B, A2, B2, p, q = _node_terms(y1, y2, self.quad)
        return A, B, _f_derivatives(p, q, self.delta, True)

    def _d11(self, y1, y2):
        A, B, (fp, fq, fpp, fpq, fqq) = self._hess_terms(y1, y2)
        eye = np.eye(2)
        h = 4.0 * np.einsum("...mc,...md->...mcd", A, A) * fpp[..., None, None]
        h = h + 2.0 * fp[..., None, None] * eye
        return _pull_mat(self.quad, h, 2.0 * self.delta**3)

    def _d22(self, y1, y2):
        A, B, (fp, fq, fpp, fpq, fqq) = self._hess_terms(y1, y2)
        eye = np.eye(2)
        h = 4.0 * np.einsum("...mc,...md->...mcd", B, B) * fqq[..., None, None]
        h = h + 2.0 * fq[..., None, None] * eye
        return _pull_mat(self.quad, h, 2.0 * self.delta**3)

    def _d12(self, y1, y2):
        A, B, (fp, fq, fpp, fpq, fqq) = self._hess_terms(y1, y2)
        h = 4.0 * np.einsum("...mc,...md->...mcd", A, B) * fpq[..., None, None]
        return _pull_mat(self.quad, h, -2.0 * self.delta**3)

    def _metric(self, y):
        _, ys, _ = rod_eval(y, self.quad)
        p = np.sum(ys * ys, axis=-1)
        h = 2.0 * self.delta * np.einsum("...mc,...md->...mcd", ys, ys) / p[..., None, None] ** 1.5
        return _pull_mat(self.quad, h, self.delta**3)

    def quadratic_part(self, v, w):
        """Bending part ``delta^3 int v_ss . w_ss ds`` of the metric."""
        _, _, vss = rod_eval(v, self.quad)
        _, _, wss = rod_eval(w, self.quad)
        return self.delta**3 * np.mean(np.sum(vss * wss, axis=-1), axis=-1)


def rod_metric(shape, delta, quad, v, w):
    """Metric ``g_y(v, w) = int 2 delta (v_s.t)(w_s.t)/|y_s| + delta^3 v_ss.w_ss ds``.

    ``t`` is the unit tangent of ``y``; ``v`` and ``w`` are coefficient vectors.
    """
    y = shape.dofs if isinstance(shape, RodShape) else np.asarray(shape, float)
    _, ys, _ = rod_eval(y, quad)
    _, vs, vss = rod_eval(v, quad)
    _, ws, wss = rod_eval(w, quad)
    norm = np.linalg.norm(ys, axis=-1)
    if np.min(norm) <= 0:
        raise DegeneracyError("rod metric at a shape with vanishing arclength density")
    t = ys / norm[..., None]
    vt = np.sum(vs * t, axis=-1)
    wt = np.sum(ws * t, axis=-1)
    integrand = 2.0 * delta * vt * wt / norm + delta**3 * np.sum(vss * wss, axis=-1)
    return np.mean(integrand, axis=-1)

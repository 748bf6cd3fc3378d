"""Discrete shells: triangle meshes with membrane and bending dissipation.

The dissipation between two embeddings ``y`` and ``z`` of the same
connectivity is ``W = zeta * E_mem + eta * E_bend`` where

* ``E_mem`` sums ``area(y(T)) * Psi(C_T)`` over triangles, with ``C_T`` the
  Cauchy-Green tensor of the affine map ``y(T) -> z(T)`` and
  ``Psi = mu/2 tr sqrt C + lam/4 det sqrt C - (2 mu + lam)/4 log det sqrt C - mu - lam/4``;
* ``E_bend`` sums ``l_e^2 (theta_e[y] - theta_e[z])^2 / d_e`` over interior
  edges, with ``3 d_e`` the area of the two adjacent triangles of ``y``.

Derivatives are computed per element (complex-step gradients, central
differences of those for Hessians) and scattered into the global arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._files import atomic_write_text, fmt
from .manifold import DegeneracyError, ManifoldModel

DET_FLOOR = 1e-14
CS_STEP = 1e-20
HESS_REL_STEP = 1e-5


@dataclass(frozen=True)
class ShellParams:
    """Lame constants ``lam``, ``mu`` and the membrane/bending weights."""

    lam: float = 1.0
    mu: float = 1.0
    zeta: float = 1.0
    eta: float = 1e-4

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("Lame constants must be positive")
        if self.zeta < 0 or self.eta < 0 or self.zeta + self.eta <= 0:
            raise ValueError("weights zeta, eta must be non-negative and not both zero")

    def as_dict(self):
        return {"lam": self.lam, "mu": self.mu, "zeta": self.zeta, "eta": self.eta}


class ShellMesh:
    """Fixed connectivity of a triangle mesh plus reference vertex positions.

    Attributes
    ----------
    vertices : ndarray, shape (V, 3)
    triangles : ndarray of int, shape (T, 3)
    edges : ndarray of int, shape (n_edges, 2)
        Undirected edges with ``i < j``.
    stencils : ndarray of int, shape (n_interior, 4)
        Per interior edge the vertices ``[i, j, k, l]``: the edge ``i -> j``,
        ``k`` opposite in the triangle containing ``i -> j`` and ``l``
        opposite in the other triangle.
    """

    def __init__(self, vertices, triangles):
        v = np.array(vertices, dtype=float)
        t = np.array(triangles, dtype=int)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (V, 3)")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise ValueError("triangles must have shape (T, 3) with T >= 1")
        if t.min() < 0 or t.max() >= len(v):
            raise ValueError("triangle references a missing vertex")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise ValueError("triangle with repeated vertex")
        self.vertices = v
        self.triangles = t
        incident = {}
        for ti, (a, b, c) in enumerate(t):
            for p, q, r in ((a, b, c), (b, c, a), (c, a, b)):
                incident.setdefault((min(p, q), max(p, q)), []).append((ti, p, q, r))
        stencils = []
        for key, items in sorted(incident.items()):
            if len(items) > 2:
                raise ValueError(f"non-manifold edge {key} shared by {len(items)} triangles")
            if len(items) == 2:
                (_, i, j, k), (_, _, _, l) = items
                stencils.append((i, j, k, l))
        self.edges = np.array(sorted(incident), dtype=int).reshape(-1, 2)
        self.stencils = np.array(stencils, dtype=int).reshape(-1, 4)
        self._tri_idx = (3 * t[:, :, None] + np.arange(3)).reshape(len(t), 9)
        self._edge_idx = (3 * self.stencils[:, :, None] + np.arange(3)).reshape(-1, 12)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def __repr__(self):
        return f"ShellMesh(V={self.n_vertices}, T={self.n_triangles}, interior_edges={len(self.stencils)})"


# -- element kernels (complex-safe) ----------------------------------------


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _cross(a, b):
    # np.cross carries heavy per-call overhead for small stacked arrays
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _atan2(y, x):
    if not (np.iscomplexobj(y) or np.iscomplexobj(x)):
        return np.arctan2(y, x)
    # first-order complex extension, exact for complex-step differentiation
    re = np.arctan2(y.real, x.real)
    im = (x.real * y.imag - y.real * x.imag) / (x.real**2 + y.real**2)
    return re + 1j * im


def _gram(T):
    e1 = T[..., 1, :] - T[..., 0, :]
    e2 = T[..., 2, :] - T[..., 0, :]
    return _dot(e1, e1), _dot(e1, e2), _dot(e2, e2)


def membrane_density(tr_c, det_c, params):
    """``Psi`` from the invariants ``tr C`` and ``det C`` of a 2x2 Cauchy-Green tensor.

    Uses ``tr sqrt C = sqrt(tr C + 2 sqrt(det C))``, valid for SPD ``C``.
    """
    lam, mu = params.lam, params.mu
    root_det = np.sqrt(det_c)
    tr_root = np.sqrt(tr_c + 2.0 * root_det)
    return (
        0.5 * mu * tr_root
        + 0.25 * lam * root_det
        - 0.125 * (2.0 * mu + lam) * np.log(det_c)
        - mu
        - 0.25 * lam
    )


def _tri_invariants(Ty, Tz):
    g11, g12, g22 = _gram(Ty)
    h11, h12, h22 = _gram(Tz)
    det_g = g11 * g22 - g12 * g12
    det_h = h11 * h22 - h12 * h12
    tr_c = (g22 * h11 - 2.0 * g12 * h12 + g11 * h22) / det_g
    return det_g, tr_c, det_h / det_g


def _tri_energy(Ty, Tz, params):
    det_g, tr_c, det_c = _tri_invariants(Ty, Tz)
    return 0.5 * np.sqrt(det_g) * membrane_density(tr_c, det_c, params)


def _dihedral(S):
    """Dihedral angle at the edge of a stencil ``(..., 4, 3)``; ``pi`` when flat."""
    xi, xj, xk, xl = S[..., 0, :], S[..., 1, :], S[..., 2, :], S[..., 3, :]
    e = xj - xi
    n1 = _cross(e, xk - xi)
    n2 = _cross(xi - xj, xl - xj)
    le = np.sqrt(_dot(e, e))
    phi = _atan2(_dot(e, _cross(n1, n2)), le * _dot(n1, n2))
    return math.pi - phi


def _edge_weight(S):
    xi, xj, xk, xl = S[..., 0, :], S[..., 1, :], S[..., 2, :], S[..., 3, :]
    e = xj - xi
    n1 = _cross(e, xk - xi)
    n2 = _cross(xi - xj, xl - xj)
    area = 0.5 * (np.sqrt(_dot(n1, n1)) + np.sqrt(_dot(n2, n2)))
    return _dot(e, e) / (area / 3.0)


def _edge_energy(Sy, Sz):
    d = _dihedral(Sy) - _dihedral(Sz)
    return _edge_weight(Sy) * d * d


def dihedral_angles(mesh, X):
    """Dihedral angles of all interior edges, ``(..., n_interior)``."""
    return _dihedral(np.asarray(X)[..., mesh.stencils, :])


def triangle_areas(mesh, X):
    det_g = _tri_invariants(np.asarray(X)[..., mesh.triangles, :], np.asarray(X)[..., mesh.triangles, :])[0]
    return 0.5 * np.sqrt(det_g)


def membrane_energy(mesh, Y, Z, params=ShellParams()):
    """Membrane dissipation ``sum_T area(y(T)) Psi(C_T)``.

    Raises
    ------
    DegeneracyError
        If some ``det C_T <= 1e-14`` (triangle collapse).
    """
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    Ty, Tz = Y[..., mesh.triangles, :], Z[..., mesh.triangles, :]
    det_g, tr_c, det_c = _tri_invariants(Ty, Tz)
    bad = ~(det_c > DET_FLOOR) | ~(det_g > 0)
    if np.any(bad):
        tri = int(np.argwhere(bad)[0][-1])
        raise DegeneracyError(
            f"triangle {tri} {tuple(mesh.triangles[tri])} collapsed (det C <= {DET_FLOOR:g})"
        )
    return np.sum(0.5 * np.sqrt(det_g) * membrane_density(tr_c, det_c, params), axis=-1)


def bending_energy(mesh, Y, Z):
    """Bending dissipation ``sum_e l_e^2 (theta_e[y] - theta_e[z])^2 / d_e``."""
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if len(mesh.stencils) == 0:
        return np.zeros(Y.shape[:-2])
    Sy, Sz = Y[..., mesh.stencils, :], Z[..., mesh.stencils, :]
    w = _edge_weight(Sy)
    if not np.all(np.isfinite(w)):
        raise DegeneracyError("degenerate triangle pair at an interior edge")
    return np.sum(_edge_energy(Sy, Sz), axis=-1)


def shell_energy(mesh, Y, Z, params=ShellParams()):
    """``W = zeta * E_mem + eta * E_bend`` between vertex arrays ``(..., V, 3)``."""
    out = params.zeta * membrane_energy(mesh, Y, Z, params)
    if params.eta:
        out = out + params.eta * bending_energy(mesh, Y, Z)
    return out


# -- element-local differentiation ------------------------------------------


def _local_pairs(mesh, params):
    """(local energy, element vertex indices, global coordinate indices) per element family."""
    fams = [(lambda a, b: params.zeta * _tri_energy(a, b, params), mesh.triangles, mesh._tri_idx)]
    if params.eta and len(mesh.stencils):
        fams.append((lambda a, b: params.eta * _edge_energy(a, b), mesh.stencils, mesh._edge_idx))
    return fams


def _cs_grad(f, za, zb, slot):
    """Complex-step gradient of ``f(za, zb)`` in slot ``slot``; z's are ``(..., nv, 3)``."""
    nv = za.shape[-2]
    n = 3 * nv
    pert = (1j * CS_STEP * np.eye(n)).reshape(n, nv, 3)
    za = za[..., None, :, :].astype(complex)
    zb = zb[..., None, :, :].astype(complex)
    if slot == 1:
        val = f(za + pert, zb)
    else:
        val = f(za, zb + pert)
    return val.imag / CS_STEP


def _fd_cs_hess(f, za, zb, slot_a, slot_b, step):
    """``H[i, j] = d^2 f / d(slot_a)_i d(slot_b)_j`` by central differences of the CS gradient."""
    nv = za.shape[-2]
    n = 3 * nv
    pert = np.eye(n).reshape(n, nv, 3) * step[..., None, None, None]
    za_, zb_ = za[..., None, :, :], zb[..., None, :, :]
    if slot_b == 1:
        gp = _cs_grad(f, za_ + pert, zb_, slot_a)
        gm = _cs_grad(f, za_ - pert, zb_, slot_a)
    else:
        gp = _cs_grad(f, za_, zb_ + pert, slot_a)
        gm = _cs_grad(f, za_, zb_ - pert, slot_a)
    # gp[..., j, i]
    h = (gp - gm) / (2.0 * step[..., None, None])
    h = np.swapaxes(h, -1, -2)
    if slot_a == slot_b:
        h = 0.5 * (h + np.swapaxes(h, -1, -2))
    return h


def _diameter(X):
    return np.max(np.ptp(X, axis=-2), axis=-1)


def _scatter_vec(vals, idx, n, batch):
    # vals (B, E, m), idx (E, m) -> (B, n)
    B = int(np.prod(batch, dtype=int))
    vals = vals.reshape(B, -1)
    flat = (np.arange(B)[:, None] * n + idx.reshape(1, -1)).ravel()
    out = np.bincount(flat, weights=vals.ravel(), minlength=B * n)
    return out.reshape(batch + (n,))


def _scatter_mat(vals, idx, n, batch):
    # vals (B, E, m, m) -> (B, n, n)
    B = int(np.prod(batch, dtype=int))
    E, m = idx.shape
    vals = vals.reshape(B, E * m * m)
    rows = np.broadcast_to(idx[:, :, None], (E, m, m)).reshape(-1)
    cols = np.broadcast_to(idx[:, None, :], (E, m, m)).reshape(-1)
    flat = (np.arange(B)[:, None] * (n * n) + (rows * n + cols)[None, :]).ravel()
    out = np.bincount(flat, weights=vals.ravel(), minlength=B * n * n)
    return out.reshape(batch + (n, n))


def shell_gradient(mesh, Y, Z, params=ShellParams(), slot=1):
    """Gradient of :func:`shell_energy` in slot 1 or 2 w.r.t. all ``3V`` coordinates."""
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    Y, Z = np.broadcast_arrays(Y, Z)
    batch = Y.shape[:-2]
    n = 3 * mesh.n_vertices
    out = np.zeros(batch + (n,))
    for f, verts, idx in _local_pairs(mesh, params):
        g = _cs_grad(f, Y[..., verts, :], Z[..., verts, :], slot)
        out = out + _scatter_vec(g, idx, n, batch)
    return out


def shell_hessian(mesh, Y, Z, params=ShellParams(), slots=(2, 2)):
    """Second derivative block ``d^2 W / d(slot_a) d(slot_b)`` on all ``3V`` coordinates.

    Step of the outer central difference: ``1e-5`` times the diameter of the
    differentiated mesh.
    """
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    Y, Z = np.broadcast_arrays(Y, Z)
    batch = Y.shape[:-2]
    n = 3 * mesh.n_vertices
    sa, sb = slots
    step = HESS_REL_STEP * _diameter(Y if sb == 1 else Z)
    out = np.zeros(batch + (n, n))
    for f, verts, idx in _local_pairs(mesh, params):
        h = _fd_cs_hess(f, Y[..., verts, :], Z[..., verts, :], sa, sb, step[..., None])
        out = out + _scatter_mat(h, idx, n, batch)
    return out


# -- gauge ------------------------------------------------------------------


def canonical_pose(X, anchors):
    """Rigidly move ``X`` so ``v1`` is at the origin, ``v2`` on the +x axis, ``v3`` in the xy-plane (y > 0)."""
    X = np.asarray(X, dtype=float)
    a0, a1, a2 = anchors
    p0 = X[..., a0, :]
    e1 = X[..., a1, :] - p0
    e1 = e1 / np.linalg.norm(e1, axis=-1, keepdims=True)
    u = X[..., a2, :] - p0
    e2 = u - _dot(u, e1)[..., None] * e1
    nrm = np.linalg.norm(e2, axis=-1, keepdims=True)
    if np.any(nrm <= 1e-12):
        raise DegeneracyError("gauge anchors are collinear")
    e2 = e2 / nrm
    e3 = _cross(e1, e2)
    R = np.stack([e1, e2, e3], axis=-2)
    out = np.einsum("...ij,...vj->...vi", R, X - p0[..., None, :])
    out[..., a0, :] = 0.0
    out[..., a1, 1:] = 0.0
    out[..., a2, 2] = 0.0
    return out


class ShellManifold(ManifoldModel):
    """Discrete-shell backend on the gauge-reduced coordinates.

    Six coordinates are frozen at zero by the anchors ``(v1, v2, v3)``
    (default: the first triangle): all of ``v1``, the y/z of ``v2`` and the
    z of ``v3``.  The remaining ``3V - 6`` coordinates are the DOFs.

    Parameters
    ----------
    mesh : ShellMesh
    params : ShellParams
    rho : float, optional
        Minimal triangle inradius; default a tenth of the smallest reference inradius.
    max_diameter : float, optional
        Maximal triangle diameter; default ten times the largest reference one.
    """

    name = "shell"

    def __init__(self, mesh, params=ShellParams(), *, rho=None, max_diameter=None,
                 anchors=None, debug=None):
        super().__init__(3 * mesh.n_vertices - 6, debug=debug)
        self.mesh = mesh
        self.params = params
        self.anchors = tuple(int(a) for a in (mesh.triangles[0] if anchors is None else anchors))
        ref_in, ref_diam = triangle_shape_stats(mesh, mesh.vertices)
        self.rho = 0.1 * float(np.min(ref_in)) if rho is None else float(rho)
        self.max_diameter = 10.0 * float(np.max(ref_diam)) if max_diameter is None else float(max_diameter)
        a0, a1, a2 = self.anchors
        frozen = [3 * a0, 3 * a0 + 1, 3 * a0 + 2, 3 * a1 + 1, 3 * a1 + 2, 3 * a2 + 2]
        mask = np.ones(3 * mesh.n_vertices, dtype=bool)
        mask[frozen] = False
        self.free = np.flatnonzero(mask)
        self.frozen = np.array(frozen)

    # -- coordinates ------------------------------------------------------
    def to_full(self, y):
        y = np.asarray(y)
        full = np.zeros(y.shape[:-1] + (3 * self.mesh.n_vertices,), dtype=y.dtype)
        full[..., self.free] = y
        return full.reshape(y.shape[:-1] + (self.mesh.n_vertices, 3))

    def to_reduced(self, X, canonicalize=True):
        X = np.asarray(X, dtype=float)
        if canonicalize:
            X = canonical_pose(X, self.anchors)
        flat = X.reshape(X.shape[:-2] + (-1,))
        return flat[..., self.free].copy()

    def embed(self, y):
        return self.to_full(y)

    # -- feasibility ------------------------------------------------------
    def feasible(self, y):
        y = np.asarray(y, dtype=float)
        ok = np.all(np.isfinite(y), axis=-1)
        inr, diam = triangle_shape_stats(self.mesh, self.to_full(np.nan_to_num(y)))
        return ok & (np.min(inr, axis=-1) >= self.rho) & (np.max(diam, axis=-1) <= self.max_diameter)

    def violation(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            return "non-finite vertex coordinates"
        inr, diam = triangle_shape_stats(self.mesh, self.to_full(y))
        lo, hi = float(np.min(inr)), float(np.max(diam))
        if lo < self.rho:
            return f"triangle inradius {lo:.3e} below rho={self.rho:.3e}"
        return f"triangle diameter {hi:.3e} above h={self.max_diameter:.3e}"

    # -- kernels ------------------------------------------------------------
    def _energy(self, y1, y2):
        return shell_energy(self.mesh, self.to_full(y1), self.to_full(y2), self.params)

    def _grad(self, y1, y2, slot):
        g = shell_gradient(self.mesh, self.to_full(y1), self.to_full(y2), self.params, slot)
        return g[..., self.free]

    def _hess(self, y1, y2, slots):
        h = shell_hessian(self.mesh, self.to_full(y1), self.to_full(y2), self.params, slots)
        return h[..., self.free[:, None], self.free[None, :]]

    def _d1(self, y1, y2):
        return self._grad(y1, y2, 1)

    def _d2(self, y1, y2):
        return self._grad(y1, y2, 2)

    def _d11(self, y1, y2):
        return self._hess(y1, y2, (1, 1))

    def _d22(self, y1, y2):
        return self._hess(y1, y2, (2, 2))

    def _d12(self, y1, y2):
        return self._hess(y1, y2, (1, 2))

    def _directional_step(self, y, v):
        diam = _diameter(self.to_full(y))
        vn = np.max(np.abs(v), axis=-1)
        return HESS_REL_STEP * diam / np.where(vn > 0, vn, 1.0)

    def _d12_apply(self, y1, y2, v):
        # mixed products by central differences of the complex-step gradient
        # along v: two gradients instead of a full 3V x 3V block
        h = self._directional_step(y2, v)[..., None]
        return (self._grad(y1, y2 + h * v, 1) - self._grad(y1, y2 - h * v, 1)) / (2.0 * h)

    def _d21_apply(self, y1, y2, v):
        h = self._directional_step(y1, v)[..., None]
        return (self._grad(y1 + h * v, y2, 2) - self._grad(y1 - h * v, y2, 2)) / (2.0 * h)

    def full_metric(self, X):
        """``1/2 d22 W[X, X]`` on all ``3V`` coordinates (rigid motions in the kernel)."""
        X = np.asarray(X, dtype=float)
        return 0.5 * shell_hessian(self.mesh, X, X, self.params, (2, 2))

    def quadratic_part(self, v, w):
        return 0.0


def triangle_shape_stats(mesh, X):
    """Per-triangle inradius and diameter, each ``(..., T)``."""
    T = np.asarray(X)[..., mesh.triangles, :]
    a = np.linalg.norm(T[..., 1, :] - T[..., 2, :], axis=-1)
    b = np.linalg.norm(T[..., 0, :] - T[..., 2, :], axis=-1)
    c = np.linalg.norm(T[..., 0, :] - T[..., 1, :], axis=-1)
    area = 0.5 * np.linalg.norm(_cross(T[..., 1, :] - T[..., 0, :], T[..., 2, :] - T[..., 0, :]), axis=-1)
    perim = a + b + c
    inradius = np.divide(2.0 * area, perim, out=np.zeros_like(perim), where=perim > 0)
    return inradius, np.maximum(np.maximum(a, b), c)


# -- fixtures ---------------------------------------------------------------


def book_mesh():
    """Two unit-hinged triangles sharing the edge ``(0,0,0)-(1,0,0)``."""
    V = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.5, 0.8, 0.0), (0.5, -0.8, 0.0)]
    return ShellMesh(V, [(0, 1, 2), (1, 0, 3)])


def fold_book(mesh, angle):
    """Rotate the second wing of :func:`book_mesh` about the hinge (x-axis) by ``angle``."""
    X = mesh.vertices.copy()
    c, s = math.cos(angle), math.sin(angle)
    y, z = X[3, 1], X[3, 2]
    X[3, 1], X[3, 2] = c * y - s * z, s * y + c * z
    return X


def strip_mesh(length=6, width=1):
    """Flat ``(length+1) x (width+1)`` grid strip in the xy-plane, unit spacing."""
    nx, ny = length + 1, width + 1
    V = [(float(i), float(j), 0.0) for j in range(ny) for i in range(nx)]
    T = []
    for j in range(width):
        for i in range(length):
            a, b = j * nx + i, j * nx + i + 1
            c, d = a + nx, b + nx
            T += [(a, b, d), (a, d, c)]
    return ShellMesh(V, T)


def fold_strip(X, x0, angle):
    """Fold the part ``x > x0`` of a strip about the line ``x = x0`` (parallel to y) by ``angle``."""
    X = np.array(X, dtype=float)
    sel = X[:, 0] > x0 + 1e-12
    dx = X[sel, 0] - x0
    dz = X[sel, 2]
    c, s = math.cos(angle), math.sin(angle)
    X[sel, 0] = x0 + c * dx - s * dz
    X[sel, 2] = s * dx + c * dz
    return X


# -- OBJ --------------------------------------------------------------------


def read_obj(path):
    """Read vertices and triangular faces from an OBJ file."""
    verts, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise ValueError(f"{path}:{lineno}: only triangular faces are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    if not verts or not faces:
        raise ValueError(f"{path}: no vertices or faces")
    return np.array(verts, dtype=float), np.array(faces, dtype=int)


def obj_text(vertices, triangles):
    lines = [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in np.asarray(vertices, float)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(triangles, int)]
    return "\n".join(lines) + "\n"


def write_obj(path, vertices, triangles):
    return atomic_write_text(path, obj_text(vertices, triangles))

"""Discrete geodesic and spline interpolation.

A discrete path ``y_0, ..., y_K`` has path energy

    E^K = K sum_{k=1}^K W[y_{k-1}, y_k]

and spline energy

    F^K = 4 K^3 sum_{k=1}^{Khat} W[y_k, z_k],   z_k = argmin_z W[y_{k-1}, z] + W[z, y_{k+1}],

where the ``z_k`` are geodesic midpoints.  Spline interpolation minimizes
``F^K + sigma E^K`` over the free points with the midpoints solved exactly
in every evaluation; the gradient uses adjoint states instead of
differentiating through the inner Newton solves.

Boundary conditions: ``natural`` (``Khat = K - 1``), ``hermite`` (``y_1``
and ``y_{K-1}`` eliminated through prescribed end velocities) and
``periodic`` (``y_K = y_0``, ``y_{K+1} = y_1``, ``Khat = K``).
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .manifold import DegeneracyError, ManifoldError
from .optimize import lbfgs

logger = logging.getLogger(__name__)

BOUNDARY_CONDITIONS = ("natural", "hermite", "periodic")
MID_MAX_ITERS = 100
MID_MAX_HALVINGS = 40


class MidpointError(ManifoldError):
    """The geodesic-midpoint Newton solve failed."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class ProblemError(ValueError):
    """An interpolation problem is malformed."""


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and limits of the nested solve.

    ``tol_grad`` and ``tol_mid`` are scaled by ``1 + max|data|``.
    """

    tol_grad: float = 1e-8
    tol_mid: float = 1e-10
    max_iters: int = 2000
    memory: int = 10
    max_halvings: int = 60
    restarts: int = 0
    seed: int | None = None
    threads: int = 1
    precond_refresh: int = 10

    def __post_init__(self):
        if not (self.tol_grad > 0 and self.tol_mid > 0):
            raise ProblemError("tolerances must be positive")
        if self.max_iters < 0 or self.memory < 1 or self.max_halvings < 1:
            raise ProblemError("max_iters >= 0, memory >= 1 and max_halvings >= 1 required")
        if self.restarts < 0:
            raise ProblemError("restarts must be non-negative")


def as_fraction(t):
    """Exact rational from a float (via its repr), int, Fraction or ``"p/q"`` string."""
    if isinstance(t, Fraction):
        return t
    if isinstance(t, bool):
        raise ProblemError(f"invalid time {t!r}")
    if isinstance(t, int):
        return Fraction(t)
    if isinstance(t, float):
        return Fraction(repr(t))
    if isinstance(t, str):
        try:
            return Fraction(t.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ProblemError(f"invalid time {t!r}") from exc
    raise ProblemError(f"invalid time {t!r}")


class InterpolationProblem:
    """Interpolation data, boundary condition and discretization.

    Parameters
    ----------
    K : int
        Number of time steps (``tau = 1/K``).
    times : sequence
        Interpolation times in ``[0, 1]``, strictly increasing; each ``K t_i``
        must be an integer.  Fractions, ints, floats or ``"p/q"`` strings.
    data : array_like, shape (I, d)
    bc : {"natural", "hermite", "periodic"}
    sigma : float
        Weight of the path energy in ``F + sigma E``.
    v0, v1 : array_like, optional
        End velocities for ``hermite``.
    """

    def __init__(self, K, times, data, bc="natural", sigma=1e-4, v0=None, v1=None,
                 settings=None, unwrap_periodic=True):
        if isinstance(K, bool) or int(K) != K:
            raise ProblemError(f"K must be an integer, got {K!r}")
        self.K = int(K)
        if self.K < 2:
            raise ProblemError(f"K must be at least 2, got {self.K}")
        self.times = tuple(as_fraction(t) for t in times)
        self.data = np.array(data, dtype=float)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.data.ndim != 2 or len(self.data) != len(self.times):
            raise ProblemError("data must have one row per interpolation time")
        if len(self.times) < 1:
            raise ProblemError("at least one interpolation point is required")
        if not np.all(np.isfinite(self.data)):
            raise ProblemError("data must be finite")
        if bc not in BOUNDARY_CONDITIONS:
            raise ProblemError(f"boundary condition must be one of {BOUNDARY_CONDITIONS}, got {bc!r}")
        self.bc = bc
        self.sigma = float(sigma)
        if not self.sigma >= 0:
            raise ProblemError("sigma must be non-negative")
        self.settings = settings or SolverSettings()
        self.unwrap_periodic = bool(unwrap_periodic)
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise ProblemError("interpolation times must be strictly increasing")
        for t in self.times:
            if t < 0 or t > 1:
                raise ProblemError(f"interpolation time {t} outside [0, 1]")
            if (self.K * t).denominator != 1:
                raise ProblemError(
                    f"K*t must be an integer: K={self.K}, t={t} gives K*t={self.K * t}"
                )
        self.indices = tuple(int(self.K * t) for t in self.times)
        d = self.data.shape[1]
        self.v0 = self.v1 = None
        if bc == "hermite":
            if self.times[0] != 0 or self.times[-1] != 1:
                raise ProblemError("hermite boundary conditions require t_1 = 0 and t_I = 1")
            if v0 is None or v1 is None:
                raise ProblemError("hermite boundary conditions require v0 and v1")
            self.v0 = np.array(v0, dtype=float).reshape(d)
            self.v1 = np.array(v1, dtype=float).reshape(d)
            if self.K < 3:
                raise ProblemError("hermite boundary conditions require K >= 3")
            if 1 in self.indices or self.K - 1 in self.indices:
                raise ProblemError(
                    "hermite: indices 1 and K-1 are fixed by the end velocities and cannot carry data"
                )
        elif v0 is not None or v1 is not None:
            raise ProblemError(f"end velocities are only valid with hermite, not {bc}")
        if bc == "periodic":
            if self.times[0] == 0 and self.times[-1] == 1:
                raise ProblemError("periodic problems must not prescribe both t=0 and t=1")
            if self.K < 3:
                raise ProblemError("periodic problems require K >= 3")
        if self.sigma == 0:
            warnings.warn(
                "sigma = 0: minimizers need not exist on curved spaces; convergence is empirical",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def dim(self):
        return self.data.shape[1]

    @property
    def periodic(self):
        return self.bc == "periodic"

    @property
    def khat(self):
        return self.K if self.periodic else self.K - 1

    @property
    def data_scale(self):
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def with_K(self, K):
        return self.replace(K=K)

    def replace(self, **changes):
        kw = dict(K=self.K, times=self.times, data=self.data, bc=self.bc, sigma=self.sigma,
                  v0=self.v0, v1=self.v1, settings=self.settings,
                  unwrap_periodic=self.unwrap_periodic)
        kw.update(changes)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return InterpolationProblem(**kw)

    def __repr__(self):
        ts = ", ".join(str(t) for t in self.times)
        return f"InterpolationProblem(K={self.K}, bc={self.bc!r}, sigma={self.sigma}, times=({ts}))"


@dataclass
class DiscretePath:
    """Points ``y_0..y_K`` and midpoints ``z_1..z_Khat``."""

    points: np.ndarray
    midpoints: np.ndarray | None = None
    periodic: bool = False
    shift: np.ndarray | None = None

    @property
    def K(self):
        return len(self.points) - 1

    @property
    def khat(self):
        return self.K if self.periodic else self.K - 1

    def extended(self):
        """Points with ``y_{K+1} = y_1`` appended for periodic paths."""
        if not self.periodic:
            return self.points
        shift = np.zeros(self.points.shape[-1]) if self.shift is None else self.shift
        return np.concatenate([self.points, self.points[1:2] + shift], axis=0)


@dataclass
class SplineSolution:
    """Result of :func:`solve_spline` or :func:`solve_geodesic`."""

    kind: str
    path: DiscretePath
    path_energy: float
    spline_energy: float
    regularized_energy: float
    sigma: float
    diagnostics: np.ndarray
    midpoint_residuals: np.ndarray
    status: str
    iterations: int
    grad_norm: float
    tol_grad: float
    history: list = field(default_factory=list)
    message: str = ""
    elapsed: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def points(self):
        return self.path.points

    @property
    def times(self):
        return np.arange(self.path.K + 1) / self.path.K

    def energies(self):
        return {
            "path_energy": self.path_energy,
            "spline_energy": self.spline_energy,
            "regularized_energy": self.regularized_energy,
        }


# -- midpoints ----------------------------------------------------------------


def _midpoint_residual(model, a, b, z):
    return model.d2(a, z) + model.d1(z, b)


def _midpoint_hessian(model, a, b, z):
    return model.d22(a, z) + model.d11(z, b)


def _modified_newton_step(H, r):
    w, V = np.linalg.eigh(H)
    scale = np.max(np.abs(w), axis=-1, keepdims=True)
    w = np.maximum(np.abs(w), 1e-10 * np.maximum(scale, 1e-300))
    return -np.einsum("...ij,...j->...i", V, np.einsum("...ji,...j->...i", V, r) / w)


def solve_midpoints(model, a, b, init=None, tol=1e-10, max_iters=MID_MAX_ITERS, hessian=None):
    """Batched geodesic midpoints ``argmin_z W[a, z] + W[z, b]``.

    Newton's method with eigenvalue-modified Hessians and an Armijo line
    search per item, falling back to damped gradient steps when a Newton
    direction cannot be accepted.  Once an item's residual drops below
    ``tol`` one more Newton step polishes it.

    A ``hessian`` from a nearby solve (shape ``(..., d, d)``) is used as a
    chord matrix; an item's Hessian is recomputed only when a chord step is
    rejected or fails to halve its residual.

    Returns
    -------
    z, H, residual_norms
        Midpoints, the Hessians ``d22 W[a, z] + d11 W[z, b]`` at the solution
        (positive definite) and the final residual norms.

    Raises
    ------
    MidpointError
        On failure to converge or if the Hessian at the result is not SPD.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    d = shape[-1]
    a = a.reshape(-1, d)
    b = b.reshape(-1, d)
    n = len(a)
    z = 0.5 * (a + b) if init is None else np.array(np.broadcast_to(init, shape), dtype=float).reshape(-1, d)
    bad_init = ~model.feasible(z)
    if np.any(bad_init):
        z[bad_init] = 0.5 * (a[bad_init] + b[bad_init])
    if not np.all(model.feasible(z)):
        raise MidpointError("midpoint initialization is infeasible")
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (n,))
    chord = np.zeros((n, d, d))
    have = np.zeros(n, dtype=bool)
    if hessian is not None and np.shape(hessian) == shape + (d,):
        chord[:] = np.reshape(hessian, (n, d, d))
        have[:] = ~bad_init
    fresh = np.zeros(n, dtype=bool)  # chord evaluated at the current z
    active = np.ones(n, dtype=bool)
    polish = np.zeros(n, dtype=bool)
    history = []
    r = _midpoint_residual(model, a, b, z)
    rn = np.linalg.norm(r, axis=-1)
    G = model.energy(a, z) + model.energy(z, b)
    for _ in range(max_iters):
        history.append(float(np.max(rn)))
        reached = active & (rn <= tol)
        # items at tolerance get a single polishing step, then stop
        finished = reached & polish
        active &= ~finished
        polish |= reached
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        need = idx[~have[idx]]
        if need.size:
            chord[need] = _midpoint_hessian(model, a[need], b[need], z[need])
            have[need] = fresh[need] = True
        ai, bi, zi, ri = a[idx], b[idx], z[idx], r[idx]
        step = _modified_newton_step(chord[idx], ri)
        znew, rnew, Gnew, ok = _midpoint_line_search(model, ai, bi, zi, ri, G[idx], step, polish[idx])
        stale = ~ok & ~fresh[idx]
        # a rejected chord step only triggers a Hessian update
        have[idx[stale]] = False
        if np.any(~ok & ~stale):
            # gradient fallback for items whose exact Newton step failed
            f = np.flatnonzero(~ok & ~stale)
            gstep = -ri[f] / max(1.0, float(np.max(np.abs(ri[f]))))
            zf, rf, Gf, okf = _midpoint_line_search(
                model, ai[f], bi[f], zi[f], ri[f], G[idx][f], gstep, polish[idx][f]
            )
            znew[f], rnew[f], Gnew[f], ok[f] = zf, rf, Gf, okf
            stuck = ~ok & ~stale
            if np.any(stuck & ~polish[idx]):
                raise MidpointError(
                    f"midpoint solve stalled with residual {float(np.max(rn[idx][stuck])):.3e}", history
                )
            # polished items whose extra step was rejected are simply done
            active[idx[stuck]] = False
        upd = idx[ok]
        slow = np.linalg.norm(rnew[ok], axis=-1) > 0.5 * rn[upd]
        z[upd], r[upd], G[upd] = znew[ok], rnew[ok], Gnew[ok]
        rn[upd] = np.linalg.norm(r[upd], axis=-1)
        fresh[upd] = False
        have[upd[slow & ~polish[upd]]] = False
    else:
        if np.any(active & ~polish):
            raise MidpointError(
                f"midpoint solve did not reach tol after {max_iters} iterations "
                f"(residual {float(np.max(rn[active])):.3e})",
                history,
            )
    if np.any(rn > tol):
        raise MidpointError(f"midpoint residual {float(np.max(rn)):.3e} above tol", history)
    H = _midpoint_hessian(model, a, b, z)
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    lo = np.linalg.eigvalsh(H)[:, 0]
    if np.any(lo <= 0):
        raise MidpointError(
            f"midpoint Hessian not positive definite (min eigenvalue {float(np.min(lo)):.3e}); "
            "stationary point is not a local minimizer",
            history,
        )
    return z.reshape(shape), H.reshape(shape + (d,)), rn.reshape(shape[:-1])


def _midpoint_line_search(model, a, b, z, r, G, step, polishing):
    n = len(z)
    alpha = np.ones(n)
    slope = np.einsum("ij,ij->i", r, step)
    rn = np.linalg.norm(r, axis=-1)
    znew = z.copy()
    rnew = r.copy()
    Gnew = G.copy()
    ok = np.zeros(n, dtype=bool)
    pending = np.ones(n, dtype=bool)
    for _ in range(MID_MAX_HALVINGS):
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        zt = z[idx] + alpha[idx, None] * step[idx]
        feas = model.feasible(zt)
        fi = idx[feas]
        if fi.size:
            zf = zt[feas]
            Gt = model.energy(a[fi], zf) + model.energy(zf, b[fi])
            rt = _midpoint_residual(model, a[fi], b[fi], zf)
            rtn = np.linalg.norm(rt, axis=-1)
            # energies can carry round-off far above eps*G when the terms
            # cancel, so a strong residual decrease also accepts the step
            noise = 1e-8 * np.abs(G[fi]) + 1e-300
            armijo = Gt <= G[fi] + 1e-4 * alpha[fi] * slope[fi]
            flat = (Gt <= G[fi] + noise) & (rtn <= 0.5 * rn[fi])
            # near convergence G is at round-off level; residual decrease decides
            acc = (armijo & (np.isfinite(rtn))) | flat
            acc &= ~(polishing[fi] & (rtn > rn[fi]))
            good = fi[acc]
            znew[good], rnew[good], Gnew[good] = zf[acc], rt[acc], Gt[acc]
            ok[good] = True
            pending[good] = False
        alpha[pending] *= 0.5
    return znew, rnew, Gnew, ok


def geodesic_midpoint(model, y_minus, y_plus, init=None, tol_mid=1e-10):
    """Geodesic midpoint of two points; see :func:`solve_midpoints`."""
    z, _, _ = solve_midpoints(model, y_minus, y_plus, init=init, tol=tol_mid)
    return z


# -- energies ---------------------------------------------------------------


def discrete_path_energy(model, path):
    """``K sum_k W[y_{k-1}, y_k]`` for a :class:`DiscretePath` or ``(..., K+1, d)`` array."""
    Y = path.points if isinstance(path, DiscretePath) else np.asarray(path, dtype=float)
    K = Y.shape[-2] - 1
    return K * np.sum(model.energy(Y[..., :-1, :], Y[..., 1:, :]), axis=-1)


def _triples(Y, khat):
    return Y[..., 0:khat, :], Y[..., 1 : khat + 1, :], Y[..., 2 : khat + 2, :]


def discrete_spline_energy(model, path, tol_mid=1e-10):
    """``4 K^3 sum_k W[y_k, z_k]`` with midpoints re-solved (warm start from ``path.midpoints``).

    The solved midpoints are stored back on ``path``.
    """
    Y = path.extended()
    K, khat = path.K, path.khat
    a, c, b = _triples(Y, khat)
    z, _, _ = solve_midpoints(model, a, b, init=path.midpoints, tol=tol_mid)
    path.midpoints = z
    return 4.0 * K**3 * float(np.sum(model.energy(c, z)))


def adjoint_state(model, path, k):
    """Adjoint ``p_k = -H_k^{-1} d2 W[y_k, z_k]`` for midpoint index ``k`` (1-based).

    Requires solved midpoints on ``path``.
    """
    if path.midpoints is None:
        raise ValueError("path midpoints must be solved first")
    if not 1 <= k <= path.khat:
        raise IndexError(f"midpoint index {k} outside 1..{path.khat}")
    Y = path.extended()
    a, c, b = Y[k - 1], Y[k], Y[k + 1]
    z = path.midpoints[k - 1]
    H = _midpoint_hessian(model, a, b, z)
    H = 0.5 * (H + H.T)
    try:
        chol = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("adjoint system is not positive definite") from exc
    rhs = -model.d2(c, z)
    return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))


# -- free-DOF bookkeeping ---------------------------------------------------


def lift_data(problem, periods):
    """Unwrap periodic coordinates of the data by minimal image.

    Returns the lifted data and, for periodic problems, the lattice shift
    ``y_K - y_0`` of the closed curve.
    """
    data = problem.data.copy()
    periods = np.asarray(periods, dtype=float)
    wrap = periods > 0
    shift = np.zeros(problem.dim)
    if not problem.unwrap_periodic or not np.any(wrap):
        return data, shift

    def mi(delta):
        out = delta.copy()
        out[..., wrap] -= periods[wrap] * np.round(delta[..., wrap] / periods[wrap])
        return out

    for i in range(1, len(data)):
        data[i] = data[i - 1] + mi(data[i] - data[i - 1])
    if problem.periodic:
        closing = data[-1] + mi(problem.data[0] - data[-1])
        shift = closing - data[0]
        shift[wrap] = periods[wrap] * np.round(shift[wrap] / periods[wrap])
        shift[~wrap] = 0.0
    return data, shift


class PathSpace:
    """Maps the free-DOF vector of a problem to full paths and back."""

    def __init__(self, problem, model, data=None, shift=None):
        if problem.dim != model.dof_count:
            raise ProblemError(
                f"data dimension {problem.dim} does not match {model.name} dof_count {model.dof_count}"
            )
        self.problem = problem
        self.model = model
        K, d = problem.K, problem.dim
        self.K, self.d = K, d
        if data is None:
            data, shift = lift_data(problem, model.periods())
        self.data = data
        self.shift = np.zeros(d) if shift is None else shift
        self.periodic = problem.periodic
        self.n_store = K if self.periodic else K + 1
        base = np.zeros((self.n_store, d))
        fixed = np.zeros(self.n_store, dtype=bool)
        for idx, row in zip(problem.indices, data):
            if self.periodic and idx == K:
                base[0] = row - self.shift
                fixed[0] = True
            else:
                base[idx] = row
                fixed[idx] = True
        if problem.bc == "hermite":
            base[1] = base[0] + problem.v0 / K
            base[K - 1] = base[K] - problem.v1 / K
            fixed[1] = fixed[K - 1] = True
        self.base = base
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)

    @property
    def n_free(self):
        return self.free.size * self.d

    def assemble(self, x):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        Y = np.broadcast_to(self.base, batch + self.base.shape).copy()
        Y[..., self.free, :] = x.reshape(batch + (self.free.size, self.d))
        if self.periodic:
            Y = np.concatenate([Y, Y[..., 0:2, :] + self.shift], axis=-2)
        return Y

    def fold(self, G):
        if self.periodic:
            Gs = G[..., : self.K, :].copy()
            Gs[..., 0, :] += G[..., self.K, :]
            Gs[..., 1, :] += G[..., self.K + 1, :]
            G = Gs
        g = G[..., self.free, :]
        return g.reshape(g.shape[:-2] + (-1,))

    def extract(self, Y):
        Y = np.asarray(Y, dtype=float)
        return Y[..., self.free, :].reshape(Y.shape[:-2] + (-1,))

    def to_path(self, x, midpoints=None):
        Y = self.assemble(x)
        if self.periodic:
            Y = Y[: self.K + 1]
        return DiscretePath(Y, midpoints, self.periodic, self.shift.copy())


# -- objectives -------------------------------------------------------------


def _path_energy_grad(model, Y, K):
    G = np.zeros_like(Y)
    y0, y1 = Y[..., : K, :], Y[..., 1 : K + 1, :]
    E = K * np.sum(model.energy(y0, y1), axis=-1)
    G[..., :K, :] += K * model.d1(y0, y1)
    G[..., 1 : K + 1, :] += K * model.d2(y0, y1)
    return E, G


def spline_objective(model, space, x, sigma, midpoints=None, tol_mid=1e-10, with_grad=True,
                     hessians=None):
    """``F^K + sigma E^K`` at free DOFs ``x`` (batched) and its adjoint gradient.

    Returns ``(value, gradient, info)`` where ``info`` holds the midpoints,
    ``F^K``, ``E^K``, per-k ``W[y_k, z_k]``, midpoint residuals and the
    midpoint Hessians (reusable as ``hessians`` for warm starts).
    """
    K, khat = space.K, space.problem.khat
    Y = space.assemble(x)
    a, c, b = _triples(Y, khat)
    z, H, res = solve_midpoints(model, a, b, init=midpoints, tol=tol_mid, hessian=hessians)
    Wk = model.energy(c, z)
    scale = 4.0 * K**3
    F = scale * np.sum(Wk, axis=-1)
    E, GE = _path_energy_grad(model, Y, K)
    info = {"midpoints": z, "F": F, "E": E, "W": Wk, "residuals": res, "hessians": H}
    if not with_grad:
        return F + sigma * E, None, info
    d2 = model.d2(c, z)
    p = -np.linalg.solve(H, d2[..., None])[..., 0]
    G = np.zeros_like(Y)
    G[..., 1 : khat + 1, :] += scale * model.d1(c, z)
    G[..., 0:khat, :] += scale * model.d12_apply(a, z, p)
    G[..., 2 : khat + 2, :] += scale * model.d21_apply(z, b, p)
    G = G + sigma * GE
    return F + sigma * E, space.fold(G), info


def path_objective(model, space, x):
    Y = space.assemble(x)
    E, G = _path_energy_grad(model, Y, space.K)
    return E, space.fold(G)


def spline_gradient(model, path, sigma, problem):
    """Adjoint gradient of ``F^K + sigma E^K`` over the free DOFs of ``problem`` at ``path``."""
    space = PathSpace(problem, model)
    x = space.extract(path.points[: space.n_store])
    tol = problem.settings.tol_mid * (1.0 + problem.data_scale)
    _, g, info = spline_objective(model, space, x, sigma, path.midpoints, tol)
    path.midpoints = info["midpoints"]
    return g


# -- preconditioning ----------------------------------------------------------


def _psd(B):
    w, V = np.linalg.eigh(0.5 * (B + np.swapaxes(B, -1, -2)))
    return np.einsum("...ij,...j,...kj->...ik", V, np.maximum(w, 0.0), V)


def _pair_blocks(model, u, v):
    """Batched ``2d x 2d`` Hessians of ``W[u, v]`` in ``(u, v)``."""
    d11, d12, d22 = model.d11(u, v), model.d12(u, v), model.d22(u, v)
    top = np.concatenate([d11, d12], axis=-1)
    bot = np.concatenate([np.swapaxes(d12, -1, -2), d22], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _preconditioner(model, space, x, spline_weight, path_weight, midpoints=None, tol_mid=1e-10):
    """Sparse SPD Gauss-Newton model of the objective Hessian at ``x``, returned as a solve.

    Each pair term contributes its ``(y_{k-1}, y_k)`` Hessian block projected
    onto the PSD cone.  Each spline term ``W[y_k, z_k]`` contributes its
    PSD-projected block pulled back through the linearized midpoint map
    ``dz = -H^{-1}(d21 W[a, z] da + d12 W[z, b] db)``; the neglected part is
    weighted by ``d2 W[y_k, z_k]``, which vanishes for straight paths.
    """
    from scipy import sparse
    from scipy.sparse.linalg import splu

    Y = space.assemble(x)
    K, d = space.K, space.d
    n = len(Y) * d
    eye = np.eye(d)
    rows, cols, vals = [], [], []

    def add(first, blocks):
        # blocks: (nb, m*d, m*d) acting on points first[i], first[i]+1, ...
        nb, md = blocks.shape[0], blocks.shape[1]
        idx = (np.asarray(first)[:, None] * d + np.arange(md)[None, :])
        rows.append(np.repeat(idx, md, axis=1).ravel())
        cols.append(np.tile(idx, (1, md)).ravel())
        vals.append(blocks.reshape(nb, -1).ravel())

    if path_weight:
        B = _psd(_pair_blocks(model, Y[:K], Y[1 : K + 1]))
        add(np.arange(K), path_weight * K * B)
    if spline_weight:
        khat = space.problem.khat
        a, c, b = _triples(Y, khat)
        z, H, _ = solve_midpoints(model, a, b, init=midpoints, tol=tol_mid)
        Za = -np.linalg.solve(H, model.d21(a, z))
        Zb = -np.linalg.solve(H, model.d12(z, b))
        T = np.zeros((khat, 2 * d, 3 * d))
        T[:, :d, d : 2 * d] = eye
        T[:, d:, :d] = Za
        T[:, d:, 2 * d :] = Zb
        B = _psd(_pair_blocks(model, c, z))
        add(np.arange(khat), spline_weight * 4.0 * K**3 * np.einsum("kai,kab,kbj->kij", T, B, T))
    P = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsc()
    # free DOF -> extended index map (periodic copies of y_0, y_1 at K, K+1)
    n_ext = len(Y)
    jr, jc = [], []
    for col, j in enumerate(space.free):
        for e in (j, j + K) if space.periodic else (j,):
            if e < n_ext:
                jr.append(e * d + np.arange(d))
                jc.append(col * d + np.arange(d))
    J = sparse.csc_matrix((np.ones(len(jr) * d), (np.concatenate(jr), np.concatenate(jc))),
                          shape=(n, space.n_free))
    Pf = (J.T @ P @ J).tocsc()
    diag = Pf.diagonal()
    ridge = 1e-10 * float(np.mean(np.abs(diag))) + 1e-300
    Pf = Pf + ridge * sparse.identity(space.n_free, format="csc")
    lu = splu(Pf)
    return lu.solve


# -- initialization ---------------------------------------------------------


def initial_path(problem, space):
    """Chart-linear interpolation of the (lifted) data segment by segment."""
    K, d = problem.K, problem.dim
    idx = list(problem.indices)
    data = space.data
    Y = np.empty((K + 1, d))
    if problem.periodic:
        idx_ext = idx + [idx[0] + K]
        data_ext = np.vstack([data, data[:1] + space.shift])
        for (i0, y0), (i1, y1) in zip(zip(idx_ext, data_ext), zip(idx_ext[1:], data_ext[1:])):
            for k in range(i0, i1):
                s = (k - i0) / (i1 - i0)
                Y[k % K] = (1 - s) * y0 + s * y1 - (k // K) * space.shift
        Y[K] = Y[0] + space.shift
    else:
        Y[: idx[0] + 1] = data[0]
        Y[idx[-1] :] = data[-1]
        for (i0, y0), (i1, y1) in zip(zip(idx, data), zip(idx[1:], data[1:])):
            for k in range(i0, i1 + 1):
                s = (k - i0) / (i1 - i0)
                Y[k] = (1 - s) * y0 + s * y1
    return Y


# -- drivers ------------------------------------------------------------------


def _scaled_tols(problem):
    s = 1.0 + problem.data_scale
    return problem.settings.tol_grad * s, problem.settings.tol_mid * s


def _geodesic_space(problem, model, space):
    if problem.bc == "hermite":
        gprob = problem.replace(bc="natural", v0=None, v1=None)
    else:
        gprob = problem
    return PathSpace(gprob, model, space.data, space.shift)


def _run_geodesic(model, problem, space, Y0):
    tol_grad, _ = _scaled_tols(problem)
    s = problem.settings
    x0 = space.extract(Y0[: space.n_store])
    if space.n_free == 0:
        return x0, None

    def fun(x):
        E, g = path_objective(model, space, x)
        return float(E), g, None

    res = lbfgs(fun, x0, tol=tol_grad, max_iters=s.max_iters, memory=s.memory,
                max_halvings=s.max_halvings,
                precond=_preconditioner(model, space, x0, 0.0, 1.0),
                precond_update=lambda x: _preconditioner(model, space, x, 0.0, 1.0),
                refresh=s.precond_refresh)
    return res.x, res


def _finish(kind, model, problem, space, x, res, sigma, midpoints, t0, extra=None):
    tol_grad, tol_mid = _scaled_tols(problem)
    value, g, info = spline_objective(model, space, x, sigma, midpoints, tol_mid,
                                      with_grad=(kind == "spline"))
    if kind == "spline":
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    else:
        _, gE = path_objective(model, space, x)
        gnorm = float(np.max(np.abs(gE))) if gE.size else 0.0
    if res is None:
        status, iters, hist, msg = "converged", 0, [float(value)], "no free degrees of freedom"
    else:
        status, iters, hist, msg = res.status, res.iterations, res.history, res.message
        if gnorm <= tol_grad:
            status = "converged"
    F, E = float(info["F"]), float(info["E"])
    meta = {"model": model.name, "boundary": problem.bc, "K": problem.K,
            "times": [str(t) for t in problem.times]}
    params = getattr(model, "params", None)
    if params is not None and hasattr(params, "as_dict"):
        meta["model_params"] = params.as_dict()
    if extra:
        meta.update(extra)
    return SplineSolution(
        kind=kind,
        path=space.to_path(x, info["midpoints"]),
        path_energy=E,
        spline_energy=F,
        regularized_energy=F + sigma * E,
        sigma=sigma,
        diagnostics=np.asarray(info["W"], dtype=float),
        midpoint_residuals=np.asarray(info["residuals"], dtype=float),
        status=status,
        iterations=iters,
        grad_norm=gnorm,
        tol_grad=tol_grad,
        history=list(hist),
        message=msg,
        elapsed=time.perf_counter() - t0,
        metadata=meta,
    )


def solve_geodesic(model, problem):
    """Discrete geodesic interpolation: minimize ``E^K`` subject to the data.

    Non-periodic problems require ``t_1 = 0`` and ``t_I = 1``.  The result
    also carries the midpoints and ``W[y_k, z_k]`` diagnostics.
    """
    t0 = time.perf_counter()
    if not problem.periodic and (problem.times[0] != 0 or problem.times[-1] != 1):
        raise ProblemError("geodesic interpolation requires t_1 = 0 and t_I = 1")
    space = PathSpace(problem, model)
    gspace = _geodesic_space(problem, model, space)
    Y0 = initial_path(problem, gspace)
    x, res = _run_geodesic(model, problem, gspace, Y0)
    return _finish("geodesic", model, problem, gspace, x, res, problem.sigma, None, t0)


def solve_spline(model, problem, init=None):
    """Discrete spline interpolation: minimize ``F^K + sigma E^K``.

    The path is initialized by the discrete piecewise geodesic (unless an
    initial ``(K+1, d)`` array is given) and optimized with L-BFGS over the
    free points; every evaluation re-solves the midpoints.

    Returns
    -------
    SplineSolution
        ``status`` is ``"converged"`` or ``"non_converged"`` (best iterate).
    """
    t0 = time.perf_counter()
    s = problem.settings
    tol_grad, tol_mid = _scaled_tols(problem)
    space = PathSpace(problem, model)
    if init is None:
        gspace = _geodesic_space(problem, model, space)
        Y0 = initial_path(problem, gspace)
        xg, _ = _run_geodesic(model, problem, gspace, Y0)
        Yg = gspace.assemble(xg)
        Y0 = Yg[: problem.K + 1].copy()
        if problem.bc == "hermite":
            Y0[1] = space.base[1]
            Y0[problem.K - 1] = space.base[problem.K - 1]
    else:
        Y0 = np.asarray(init, dtype=float)
    starts = [space.extract(Y0[: space.n_store])]
    if s.restarts:
        rng = np.random.default_rng(s.seed)
        amp = 1e-2 * (1.0 + problem.data_scale)
        starts += [starts[0] + amp * rng.standard_normal(starts[0].shape) for _ in range(s.restarts)]
    best = None
    for x0 in starts:
        sol = _spline_from(model, problem, space, x0, tol_grad, tol_mid, t0)
        if best is None or (sol.converged, -sol.regularized_energy) > (best.converged, -best.regularized_energy):
            best = sol
    return best


def _spline_from(model, problem, space, x0, tol_grad, tol_mid, t0):
    s = problem.settings
    sigma = problem.sigma
    if space.n_free == 0:
        return _finish("spline", model, problem, space, x0, None, sigma, None, t0)
    cache = {"mid": None, "hess": None}

    def fun(x):
        val, g, info = spline_objective(model, space, x, sigma, cache["mid"], tol_mid,
                                        hessians=cache["hess"])
        return float(val), g, (info["midpoints"], info["hessians"])

    def accept(aux):
        cache["mid"], cache["hess"] = aux

    precond = _preconditioner(model, space, x0, 1.0, sigma, None, tol_mid)
    res = lbfgs(fun, x0, tol=tol_grad, max_iters=s.max_iters, memory=s.memory,
                max_halvings=s.max_halvings, on_accept=accept, precond=precond,
                precond_update=lambda x: _preconditioner(model, space, x, 1.0, sigma, cache["mid"], tol_mid),
                refresh=s.precond_refresh)
    return _finish("spline", model, problem, space, res.x, res, sigma, cache["mid"], t0)


# -- gradient check -----------------------------------------------------------


def gradient_check(model, problem, x=None, step=1e-6, midpoints=None):
    """Compare the adjoint gradient of ``F^K + sigma E^K`` with central differences.

    The FD step is ``step * (1 + |x|)``.  Midpoints are solved to
    ``1e-3 * tol_mid`` so their error does not pollute the quotient.

    Returns
    -------
    dict
        ``max_rel_err`` (infinity norms), ``adjoint``, ``fd``.
    """
    space = PathSpace(problem, model)
    if x is None:
        x = space.extract(initial_path(problem, space)[: space.n_store])
    x = np.asarray(x, dtype=float)
    _, tol_mid = _scaled_tols(problem)
    tol_mid *= 1e-3
    sigma = problem.sigma
    _, g, info = spline_objective(model, space, x, sigma, midpoints, tol_mid)
    mids = info["midpoints"]
    h = step * (1.0 + np.linalg.norm(x))
    n = x.size
    pert = np.eye(n) * h
    vp, _, _ = spline_objective(model, space, x + pert, sigma, mids, tol_mid, with_grad=False)
    vm, _, _ = spline_objective(model, space, x - pert, sigma, mids, tol_mid, with_grad=False)
    fd = (vp - vm) / (2.0 * h)
    denom = max(float(np.max(np.abs(fd))), 1e-300)
    err = float(np.max(np.abs(g - fd))) / denom
    return {"max_rel_err": err, "adjoint": g, "fd": fd, "step": h}


def with_settings(problem, **kw):
    """Copy of ``problem`` with updated solver settings."""
    return problem.replace(settings=replace(problem.settings, **kw))

"""Continuous reference curves and energies.

Provides the piecewise-quadratic C^1 interpolant of a discrete path, the
Euclidean cubic-spline oracle, quadrature of the continuous path and spline
energies, and a driver comparing discrete and continuous energies as ``K``
grows.
"""

from __future__ import annotations

import csv
import io
import logging
import math

import numpy as np
from scipy.interpolate import CubicSpline, PPoly

from ._files import atomic_write_text, fmt
from .manifold import covariant_accel
from .solver import DiscretePath, solve_spline

logger = logging.getLogger(__name__)

DEFAULT_QUAD_ORDER = 5


class ContinuousCurve:
    """Curve ``[a, b] -> R^d`` evaluable with derivatives.

    Parameters
    ----------
    func : callable
        ``func(t, nu)`` returning the ``nu``-th derivative, shape ``t.shape + (d,)``.
    domain : (float, float)
    breakpoints : array_like
        Pieces on which the curve is smooth (used by the quadrature).
    variant : str
    period : float, optional
        If given, the curve is extended periodically, with
        ``c(t + period) = c(t) + shift``.
    """

    def __init__(self, func, domain, breakpoints=None, variant="analytic", period=None, shift=None):
        self._func = func
        self.domain = (float(domain[0]), float(domain[1]))
        self.breakpoints = np.asarray(
            breakpoints if breakpoints is not None else self.domain, dtype=float
        )
        self.variant = variant
        self.period = period
        self.shift = shift

    @classmethod
    def from_ppoly(cls, pp, variant, period=None, shift=None):
        def func(t, nu):
            return pp(t, nu) if nu else pp(t)

        return cls(func, (pp.x[0], pp.x[-1]), pp.x, variant, period, shift)

    def __call__(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        if self.period is None:
            return self._func(t, nu)
        lo = self.domain[0]
        n = np.floor((t - lo) / self.period)
        val = self._func(t - n * self.period, nu)
        if nu == 0 and self.shift is not None:
            val = val + n[..., None] * self.shift
        return val

    def quadrature(self, order=DEFAULT_QUAD_ORDER):
        """Composite Gauss-Legendre nodes and weights over the pieces."""
        x, w = np.polynomial.legendre.leggauss(order)
        bp = self.breakpoints
        lo, hi = bp[:-1], bp[1:]
        half = 0.5 * (hi - lo)
        nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
        weights = half[:, None] * w[None, :]
        return nodes.ravel(), weights.ravel()


def hermite_interpolant(points, periodic=False, shift=None):
    """C^1 piecewise-quadratic interpolant of ``y_0..y_K`` with ``tau = 1/K``.

    On ``[t^{k-1/2}, t^{k+1/2}]``::

        eta(t) = (y_{k-1} + y_k)/2 + (y_k - y_{k-1}) s/tau + (y_{k+1} - 2 y_k + y_{k-1}) s^2/(2 tau^2)

    with ``s = t - t^{k-1/2}``.  Non-periodic curves are affine on
    ``[0, tau/2]`` and ``[1 - tau/2, 1]``.  Periodic curves (``y_K = y_0 +
    shift``) are built on ``[tau/2, 1 + tau/2]`` and extended with period 1.
    """
    if isinstance(points, DiscretePath):
        shift = points.shift if shift is None else shift
        periodic = points.periodic
        points = points.points
    Y = np.asarray(points, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    K = len(Y) - 1
    if K < 2:
        raise ValueError("the interpolant needs K >= 2")
    tau = 1.0 / K
    d = Y.shape[1]
    if periodic:
        sh = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
        Yx = np.vstack([Y, Y[1:2] + sh])
        ks = np.arange(1, K + 1)
    else:
        Yx = Y
        ks = np.arange(1, K)
    ym, y0, yp = Yx[ks - 1], Yx[ks], Yx[ks + 1]
    quad = np.stack([(yp - 2 * y0 + ym) / (2 * tau**2), (y0 - ym) / tau, 0.5 * (ym + y0)])
    left = (ks - 0.5) * tau
    if periodic:
        bp = np.concatenate([left, [left[-1] + tau]])
        pp = PPoly(quad, bp)
        return ContinuousCurve.from_ppoly(pp, "periodic_hermite_interpolant", period=1.0, shift=sh)
    zero = np.zeros(d)
    cap0 = np.stack([zero, (Y[1] - Y[0]) / tau, Y[0]])
    capK = np.stack([zero, (Y[K] - Y[K - 1]) / tau, 0.5 * (Y[K - 1] + Y[K])])
    coeffs = np.concatenate([cap0[:, None], quad, capK[:, None]], axis=1)
    bp = np.concatenate([[0.0], left, [1.0 - 0.5 * tau, 1.0]])
    return ContinuousCurve.from_ppoly(PPoly(coeffs, bp), "hermite_interpolant")


def euclidean_cubic_spline(times, values, bc="natural", v0=None, v1=None):
    """Classical cubic spline minimizing ``int |x''|^2`` through the data.

    ``bc`` is ``natural``, ``hermite`` (clamped with end velocities ``v0``,
    ``v1``) or ``periodic`` (closed with period 1; the data must not repeat
    the first point).
    """
    t = np.array([float(x) for x in times])
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(t) != len(x):
        raise ValueError("one value per time required")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing (duplicate or unordered times)")
    if bc == "natural":
        if len(t) == 2:
            pp = PPoly(np.stack([np.zeros_like(x[0]), (x[1] - x[0]) / (t[1] - t[0]), x[0]])[:, None], t)
            return ContinuousCurve.from_ppoly(pp, "reference_cubic_spline")
        cs = CubicSpline(t, x, bc_type="natural")
    elif bc == "hermite":
        if v0 is None or v1 is None:
            raise ValueError("hermite splines need v0 and v1")
        cs = CubicSpline(t, x, bc_type=((1, np.asarray(v0, float)), (1, np.asarray(v1, float))))
    elif bc == "periodic":
        tt = np.append(t, t[0] + 1.0)
        xx = np.vstack([x, x[:1]])
        cs = CubicSpline(tt, xx, bc_type="periodic")
        return ContinuousCurve.from_ppoly(PPoly(cs.c, cs.x), "reference_cubic_spline", period=1.0)
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    return ContinuousCurve.from_ppoly(PPoly(cs.c, cs.x), "reference_cubic_spline")


def _metric_norm2(model, y, v):
    if model is None:
        return np.sum(v * v, axis=-1)
    g = model.metric(y)
    return np.einsum("...i,...ij,...j->...", v, g, v)


def continuous_path_energy(model, curve, quad_order=DEFAULT_QUAD_ORDER):
    """``int g(y', y') dt``; ``model=None`` means Euclidean."""
    t, w = curve.quadrature(quad_order)
    return float(np.sum(w * _metric_norm2(model, curve(t, 0), curve(t, 1))))


def continuous_spline_energy(model, curve, sigma=0.0, quad_order=DEFAULT_QUAD_ORDER):
    """``int g(D_t y', D_t y') dt + sigma * int g(y', y') dt``; ``model=None`` means Euclidean."""
    t, w = curve.quadrature(quad_order)
    y = curve(t, 0)
    if model is None:
        acc = curve(t, 2)
    else:
        acc = covariant_accel(model, curve, t)
    F = float(np.sum(w * _metric_norm2(model, y, acc)))
    if sigma:
        F += sigma * continuous_path_energy(model, curve, quad_order)
    return F


def three_point_energy(times, values):
    """``int |x''|^2`` of the natural cubic spline through three points."""
    t1, t2, t3 = (float(t) for t in times)
    x = np.asarray(values, dtype=float)
    x1, x2, x3 = x[0], x[1], x[2]
    num = (x2 - x1) * (t3 - t1) - (x3 - x1) * (t2 - t1)
    return float(3.0 * np.sum(np.atleast_1d(num) ** 2) / ((t3 - t2) ** 2 * (t3 - t1) * (t2 - t1) ** 2))


def three_point_seminorm(y_minus, y_mid, y_plus, tau):
    """Minimal ``|z|^2_{W^{2,2}}`` over curves through three equispaced points: ``3 |y- - 2y + y+|^2 / (2 tau^3)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    d2 = np.asarray(y_minus, float) - 2.0 * np.asarray(y_mid, float) + np.asarray(y_plus, float)
    return float(1.5 * np.sum(d2 * d2) / tau**3)


def three_point_cubic(y_minus, y_mid, y_plus, tau):
    """Explicit natural cubic spline ``z`` on ``[0, 2 tau]`` through the three points at ``0, tau, 2 tau``."""
    ym = np.atleast_1d(np.asarray(y_minus, float))
    y0 = np.atleast_1d(np.asarray(y_mid, float))
    yp = np.atleast_1d(np.asarray(y_plus, float))
    D = yp - 2 * y0 + ym
    zero = np.zeros_like(D)
    # local power bases: piece 1 in t, piece 2 in (t - tau)
    c1 = np.stack([D / (4 * tau**3), zero, -(yp - 6 * y0 + 5 * ym) / (4 * tau), ym])

    def piece2(t):
        return (
            -(t**3 - 6 * t**2 * tau) * D / (4 * tau**3)
            - t * (7 * yp - 18 * y0 + 11 * ym) / (4 * tau)
            + (yp - 2 * y0 + 3 * ym) / 2
        )

    # re-expand piece 2 around tau exactly (cubic, 4 samples determine it)
    s = np.array([0.0, 1.0, 2.0, 3.0]) * tau / 3.0
    V = np.vander(s, 4)
    c2 = np.linalg.solve(V, np.stack([piece2(tau + si) for si in s]))
    pp = PPoly(np.stack([c1, c2], axis=1), np.array([0.0, tau, 2 * tau]))
    return ContinuousCurve.from_ppoly(pp, "three_point_cubic")


def path_step_size(model, points):
    """``d_K = max_k sqrt(W[y_{k-1}, y_k])``, the discrete step size."""
    Y = np.asarray(points, dtype=float)
    return float(np.sqrt(np.max(model.energy(Y[:-1], Y[1:]))))


def convergence_study(model, problem, K_list, quad_order=DEFAULT_QUAD_ORDER, exact_tol=1e-9):
    """Solve for each ``K`` and compare discrete with continuous energies of the interpolant.

    Returns
    -------
    dict
        ``rows`` (one dict per K with ``F_sigma_K``, ``F_sigma_eta``, ``diff``,
        ``E_K``, ``E_eta``, ``diff_E``, ``d_K``, ``status``), ``slope`` and
        ``slope_E`` (least-squares log-log fits, ``None`` if the differences
        are exact zeros), ``exact`` flag and ``decreasing`` flag.
    """
    K_list = [int(k) for k in K_list]
    if len(K_list) < 3:
        raise ValueError("rate fitting needs at least three values of K")
    rows = []
    for K in K_list:
        prob = problem.with_K(K)
        sol = solve_spline(model, prob)
        eta = hermite_interpolant(sol.path)
        Fc = continuous_spline_energy(model, eta, prob.sigma, quad_order)
        Ec = continuous_path_energy(model, eta, quad_order)
        rows.append({
            "K": K,
            "F_sigma_K": sol.regularized_energy,
            "F_sigma_eta": Fc,
            "diff": abs(sol.regularized_energy - Fc),
            "E_K": sol.path_energy,
            "E_eta": Ec,
            "diff_E": abs(sol.path_energy - Ec),
            "d_K": path_step_size(model, sol.points),
            "status": sol.status,
        })
        logger.info("K=%d F^K=%.12g F[eta]=%.12g", K, sol.regularized_energy, Fc)
    diffs = np.array([r["diff"] for r in rows])
    scale = max(1.0, max(abs(r["F_sigma_K"]) for r in rows))
    exact = bool(np.all(diffs <= exact_tol * scale))
    slope = None if exact else _fit_slope(K_list, diffs)
    slope_E = _fit_slope(K_list, np.array([r["diff_E"] for r in rows]))
    for r in rows:
        r["slope"] = slope
    decreasing = bool(np.all(np.diff(diffs) < 0))
    return {"rows": rows, "slope": slope, "slope_E": slope_E, "exact": exact,
            "decreasing": decreasing}


def _fit_slope(K_list, diffs):
    if np.any(diffs <= 0):
        return None
    return float(np.polyfit(np.log(K_list), np.log(diffs), 1)[0])


def rate_table_csv(study):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "F_sigma_K", "F_sigma_eta", "diff", "slope"])
    for r in study["rows"]:
        slope = "" if r["slope"] is None else fmt(r["slope"])
        w.writerow([r["K"], fmt(r["F_sigma_K"]), fmt(r["F_sigma_eta"]), fmt(r["diff"]), slope])
    return buf.getvalue()


def write_rate_csv(study, path):
    return atomic_write_text(path, rate_table_csv(study))


def analytic_curve(func, domain=(0.0, 1.0), pieces=16):
    """Wrap ``func(t, nu)`` as a :class:`ContinuousCurve` with uniform quadrature pieces."""
    return ContinuousCurve(func, domain, np.linspace(domain[0], domain[1], pieces + 1), "analytic")


def great_circle(theta0=math.pi / 2, speed=1.0, phi0=0.0):
    """Equatorial (``theta0 = pi/2``) constant-speed curve ``(theta0, phi0 + speed t)`` in sphere charts."""

    def func(t, nu):
        t = np.asarray(t, dtype=float)
        if nu == 0:
            return np.stack([np.full_like(t, theta0), phi0 + speed * t], axis=-1)
        if nu == 1:
            return np.stack([np.zeros_like(t), np.full_like(t, speed)], axis=-1)
        return np.zeros(t.shape + (2,))

    return analytic_curve(func)

"""Limited-memory BFGS with step-halving backtracking.

Written out rather than delegated to :func:`scipy.optimize.minimize` because
trial points may be infeasible (the objective raises) and the line search
must then halve the step, and because the objective carries warm-start state
that is only committed on accepted steps.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .manifold import ManifoldError

logger = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
NOISE_REL = 1e-12


class LineSearchError(ManifoldError):
    """Every trial step of a line search was infeasible."""


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    aux: object
    iterations: int
    converged: bool
    status: str
    message: str
    history: list = field(default_factory=list)
    n_evals: int = 0

    @property
    def grad_norm(self):
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def lbfgs(fun, x0, *, tol=1e-8, max_iters=2000, memory=10, max_halvings=60,
          on_accept=None, precond=None, precond_update=None, refresh=20):
    """Minimize ``fun`` from ``x0``.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (f, g, aux)``.  May raise :class:`ManifoldError` at
        infeasible points; the line search then halves the step.
    tol : float
        Stop when ``max|g| <= tol``.
    on_accept : callable, optional
        Called with ``aux`` of every accepted iterate (warm-start hook).
    precond : callable, optional
        Applies an SPD approximation of the inverse Hessian; used as the
        initial matrix of the two-loop recursion.
    precond_update : callable, optional
        ``precond_update(x) -> precond``; rebuilds the preconditioner at the
        current iterate every ``refresh`` accepted steps.

    Returns
    -------
    OptimizeResult
        ``status`` is ``"converged"`` or ``"non_converged"``.

    Raises
    ------
    LineSearchError
        If ``max_halvings`` consecutive trial points were all infeasible.
    """
    x = np.array(x0, dtype=float)
    f, g, aux = fun(x)
    n_evals = 1
    if on_accept:
        on_accept(aux)
    hist_s, hist_y = deque(maxlen=memory), deque(maxlen=memory)
    history = [f]
    status, message = "non_converged", f"reached max_iters={max_iters}"
    it = 0
    while True:
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= tol:
            status, message = "converged", f"|g|_inf={gnorm:.3e} <= {tol:.3e}"
            break
        if it >= max_iters:
            break
        d = -_two_loop(g, hist_s, hist_y, precond)
        slope = float(g @ d)
        if not slope < 0:
            hist_s.clear()
            hist_y.clear()
            d = -precond(g) if precond else -g
            slope = float(g @ d)
            if not slope < 0:
                d = -g
                slope = float(g @ d)
        alpha = 1.0 if (hist_s or precond) else min(1.0, 1.0 / max(gnorm, 1e-300))
        accepted = False
        infeasible_only = True
        for _ in range(max_halvings + 1):
            xt = x + alpha * d
            try:
                ft, gt, auxt = fun(xt)
                n_evals += 1
            except ManifoldError as exc:
                n_evals += 1
                logger.debug("trial step %.3e rejected: %s", alpha, exc)
                alpha *= 0.5
                continue
            infeasible_only = False
            noise = NOISE_REL * max(abs(f), 1.0)
            if ft <= f + ARMIJO_C1 * alpha * slope or (ft <= f + noise and np.max(np.abs(gt)) < gnorm):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if infeasible_only:
                raise LineSearchError(
                    f"line search: {max_halvings} halvings without a feasible trial point"
                )
            if hist_s:
                # stale curvature pairs: retry along steepest descent once
                hist_s.clear()
                hist_y.clear()
                continue
            status, message = "non_converged", f"line search stalled at |g|_inf={gnorm:.3e}"
            break
        s, yv = xt - x, gt - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (yv @ yv))):
            hist_s.append(s)
            hist_y.append(yv)
        x, f, g, aux = xt, ft, gt, auxt
        if on_accept:
            on_accept(aux)
        history.append(f)
        it += 1
        if precond_update is not None and it % refresh == 0:
            try:
                precond = precond_update(x)
            except (ManifoldError, RuntimeError) as exc:
                logger.debug("preconditioner refresh skipped: %s", exc)
    return OptimizeResult(x, f, g, aux, it, status == "converged", status, message, history, n_evals)


def _two_loop(g, hist_s, hist_y, precond=None):
    q = g.copy()
    alphas = []
    rhos = []
    for s, y in zip(reversed(hist_s), reversed(hist_y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
        rhos.append(rho)
    if precond is not None:
        q = precond(q)
        if hist_s:
            s, y = hist_s[-1], hist_y[-1]
            q *= float(s @ y) / float(y @ precond(y))
    elif hist_s:
        s, y = hist_s[-1], hist_y[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), a, rho in zip(zip(hist_s, hist_y), reversed(alphas), reversed(rhos)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q

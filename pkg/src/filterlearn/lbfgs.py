"""Limited-memory BFGS with two-loop recursion and Armijo backtracking."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """Objective became non-finite; ``x`` holds the last good iterate."""

    def __init__(self, message, x, f):
        super().__init__(message)
        self.x = x
        self.f = f


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    f0: float
    iterations: int
    evaluations: int
    message: str
    history: list


def _two_loop(g, s_hist, y_hist, rho_hist):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def lbfgs(fun, x0, max_iterations=400, tolerance=1e-7, memory=20, gtol=1e-10,
          c1=1e-4, shrink=0.5, max_backtracks=50) -> LbfgsResult:
    """Minimize ``fun(x) -> (f, grad)`` from ``x0``.

    Stops after ``max_iterations`` accepted steps, when the relative change in
    ``f`` drops below ``tolerance``, when ``max|grad| <= gtol``, or when the
    line search cannot make progress.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    f, g = fun(x)
    f = float(f)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise OptimizationError("objective is not finite at the starting point", x, f)
    f0 = f
    s_hist, y_hist, rho_hist = deque(maxlen=memory), deque(maxlen=memory), deque(maxlen=memory)
    history = [f]
    evals = 1
    message = "max_iterations reached"
    it = 0
    while it < max_iterations:
        if np.max(np.abs(g)) <= gtol:
            message = "gradient below gtol"
            break
        d = _two_loop(g, s_hist, y_hist, rho_hist)
        slope = g.dot(d)
        if slope >= 0:
            # Lost descent direction; restart from steepest descent.
            s_hist.clear(); y_hist.clear(); rho_hist.clear()
            d = -g
            slope = g.dot(d)
        step = 1.0 if s_hist else min(1.0, 1.0 / np.sum(np.abs(g)))
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            f_new = float(f_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= shrink
        else:
            if not np.isfinite(f_new):
                raise OptimizationError("objective became non-finite", x, f)
            message = "line search failed"
            break
        if not np.all(np.isfinite(g_new)):
            raise OptimizationError("gradient became non-finite", x, f)
        s = x_new - x
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-10 * np.sqrt(s.dot(s) * y.dot(y)):
            s_hist.append(s); y_hist.append(y); rho_hist.append(1.0 / sy)
        f_prev = f
        x, f, g = x_new, f_new, g_new
        it += 1
        history.append(f)
        if abs(f_prev - f) <= tolerance * max(abs(f_prev), abs(f), 1e-300):
            message = "relative change below tolerance"
            break
    log.debug("lbfgs: %s after %d iterations, f=%.6g", message, it, f)
    return LbfgsResult(x=x, f=f, f0=f0, iterations=it, evaluations=evals, message=message, history=history)

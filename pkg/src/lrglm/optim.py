"""Limited-memory BFGS with a strong-Wolfe line search.

The line search also accepts the approximate Wolfe conditions of Hager and
Zhang, which keeps the method making progress once function differences
fall to rounding level while the gradient is still above tolerance.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class Objective:
    """Wraps ``fun(theta) -> (value, gradient)``."""

    fun: Callable
    dim: int

    def eval(self, theta):
        f, g = self.fun(theta)
        return float(f), np.asarray(g, dtype=float)

    def __call__(self, theta):
        return self.eval(theta)


@dataclass
class OptimResult:
    argmin: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class LBFGSConfig:
    tol: float = 1e-8
    max_iter: int = 500
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 40


def _wrap(fn):
    def fg(theta):
        f, g = fn(theta)
        return float(f), np.asarray(g, dtype=float)
    return fg


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic through (a, fa, da), (b, fb, db), or None."""
    d1 = da + db - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    denom = db - da + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _line_search(fg, x, f0, g0, d, alpha0, cfg: LBFGSConfig):
    """Return (alpha, f, g) satisfying (approximate) strong Wolfe, or None."""
    dphi0 = float(g0 @ d)
    c1, c2 = cfg.c1, cfg.c2
    eps_f = 1e-12 * (1.0 + abs(f0))
    evals = 0

    def phi(a):
        f, g = fg(x + a * d)
        return f, g, float(g @ d)

    def good(a, f, dp):
        if f <= f0 + c1 * a * dphi0 and abs(dp) <= -c2 * dphi0:
            return True
        # approximate Wolfe, for when f has reached rounding level
        return f <= f0 + eps_f and c2 * dphi0 <= dp <= (2 * c1 - 1) * dphi0

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        nonlocal evals
        while evals < cfg.max_ls:
            width = hi - lo
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi) if np.isfinite(fhi) else None
            if a is None or not (min(lo, hi) + 0.1 * abs(width) <= a
                                 <= max(lo, hi) - 0.1 * abs(width)):
                a = lo + 0.5 * width
            f, g, dp = phi(a)
            evals += 1
            if not np.isfinite(f):
                hi, fhi, dhi = a, np.inf, np.nan
                continue
            if good(a, f, dp):
                return a, f, g
            if f > f0 + c1 * a * dphi0 or f >= flo:
                hi, fhi, dhi = a, f, dp
            else:
                if dp * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, dp
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    for i in range(cfg.max_ls):
        f, g, dp = phi(a)
        evals += 1
        if not np.isfinite(f):
            a = a_prev + 0.25 * (a - a_prev)
            continue
        if f > f0 + c1 * a * dphi0 or (i > 0 and f >= f_prev):
            if good(a, f, dp):
                return a, f, g
            return zoom(a_prev, f_prev, d_prev, a, f, dp)
        if good(a, f, dp):
            return a, f, g
        if dp >= 0:
            return zoom(a, f, dp, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = a, f, dp
        a = 2.0 * a
    return None


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (a, rho) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(obj, init, tol: float = 1e-8, max_iter: int = 500,
             config: LBFGSConfig | None = None) -> OptimResult:
    """Minimise a smooth (convex) function from ``init``.

    ``obj`` is an :class:`Objective` or a callable returning ``(f, grad)``.
    Convergence means ``||grad||_inf <= tol``.  Hitting ``max_iter`` or a
    failed line search returns ``converged=False`` with the last (best)
    iterate, since each accepted step decreases the objective.
    """
    cfg = config or LBFGSConfig(tol=tol, max_iter=max_iter)
    fg = obj.eval if isinstance(obj, Objective) else _wrap(obj)
    x = np.array(init, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("init contains non-finite entries")
    f, g = fg(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective is not finite at init")
    S, Y = deque(maxlen=cfg.memory), deque(maxlen=cfg.memory)
    history = [f]
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    it = 0
    while gnorm > cfg.tol and it < cfg.max_iter:
        d = _two_loop(g, S, Y)
        if not d @ g < 0:
            S.clear()
            Y.clear()
            d = -g
        alpha0 = min(1.0, 1.0 / np.linalg.norm(g)) if not S else 1.0
        res = _line_search(fg, x, f, g, d, alpha0, cfg)
        if res is None and S:
            # drop curvature memory and retry along steepest descent
            S.clear()
            Y.clear()
            d = -g
            res = _line_search(fg, x, f, g, d, min(1.0, 1.0 / np.linalg.norm(g)), cfg)
        if res is None:
            break
        a, f_new, g_new = res
        s = a * d
        y = g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x = x + s
        f, g = f_new, g_new
        history.append(f)
        gnorm = float(np.max(np.abs(g)))
        it += 1
    return OptimResult(x, float(f), gnorm, it, gnorm <= cfg.tol, history)


def check_gradient(obj, theta) -> float:
    """Largest relative discrepancy between the analytic gradient and
    central differences (step 1e-6 (1 + |theta_i|))."""
    fg = obj.eval if isinstance(obj, Objective) else _wrap(obj)
    theta = np.array(theta, dtype=float).ravel()
    _, g = fg(theta)
    err = 0.0
    for i in range(theta.size):
        h = 1e-6 * (1.0 + abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        fd = (fg(tp)[0] - fg(tm)[0]) / (2 * h)
        err = max(err, abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1.0))
    return float(err)

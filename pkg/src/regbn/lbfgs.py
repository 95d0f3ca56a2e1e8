"""Limited-memory BFGS with a backtracking Armijo line search.

Generic over the parameter dimension, though the package only drives it
with a scalar (the log of the regularization strength), where it behaves
like a safeguarded secant method. Deliberately dependency-free so the
solver semantics (initial step scale, iteration cap, first-order
tolerance) are exactly the configured ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 20
CURVATURE_EPS = 1e-10


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    n_evals: int
    history: list[float] = field(default_factory=list)


def minimize(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    step_size: float = 1.0,
    max_iterations: int = 25,
    tolerance: float = 1e-5,
    memory: int = 10,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> MinimizeResult:
    """Minimize ``fun_grad`` starting from ``x0``.

    fun_grad maps x to (value, gradient). ``step_size`` scales the trial
    step before backtracking; ``tolerance`` is on the gradient infinity
    norm. ``bounds``, when given, are (lower, upper) arrays and iterates
    are projected onto the box after each step.

    Always returns the best point evaluated, even when no line search
    step ever succeeds.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    if bounds is not None:
        lo, hi = bounds
        x = np.clip(x, lo, hi)

    f, g = fun_grad(x)
    n_evals = 1
    best_x, best_f, best_g = x.copy(), f, g.copy()
    history = [f]

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        if np.max(np.abs(g)) <= tolerance:
            converged = True
            break

        d = -_two_loop(g, s_hist, y_hist, rho_hist)
        if np.dot(d, g) >= 0.0:  # not a descent direction; reset to steepest
            d = -g
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
        if not s_hist:
            # No curvature information: normalize so the trial stride is
            # step_size regardless of gradient scale. A raw-gradient step is
            # useless at both extremes (a steep objective flings the iterate
            # onto a far plateau, a shallow one crawls); backtracking still
            # shrinks any overshoot.
            d = d / max(float(np.linalg.norm(d)), 1e-300)

        t = step_size
        slope = float(np.dot(g, d))
        accepted = False
        for _ in range(MAX_BACKTRACKS + 1):
            x_new = x + t * d
            if bounds is not None:
                x_new = np.clip(x_new, lo, hi)
            f_new, g_new = fun_grad(x_new)
            n_evals += 1
            if f_new < best_f:
                best_x, best_f, best_g = x_new.copy(), f_new, g_new.copy()
            # Armijo on the actual (possibly projected) displacement.
            actual = x_new - x
            if f_new <= f + ARMIJO_C1 * float(np.dot(g, actual)) and f_new < f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > CURVATURE_EPS * float(np.linalg.norm(s) * np.linalg.norm(y) + 1e-300):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        x, f, g = x_new, f_new, g_new
        history.append(f)
        if np.allclose(s, 0.0):
            break

    if np.max(np.abs(g)) <= tolerance:
        converged = True

    return MinimizeResult(
        x=best_x, fun=best_f, grad=best_g, iterations=it,
        converged=converged, n_evals=n_evals, history=history,
    )


def _two_loop(g: np.ndarray, s_hist, y_hist, rho_hist) -> np.ndarray:
    """Standard two-loop recursion for the implicit inverse Hessian."""
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        gamma = np.dot(s, y) / max(np.dot(y, y), 1e-300)
        q *= gamma
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q

"""Smooth unconstrained optimizers over flat parameter vectors.

Axis-angle parameters are treated as plain Euclidean coordinates; no
manifold retraction. Both optimizers are deterministic and track the
best-seen iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class OptimizationError(RuntimeError):
    pass


class Objective:
    """Scalar objective with gradient; finite differences when none given."""

    def __init__(self, fun: Callable[[np.ndarray], float], grad: Optional[Callable] = None,
                 dim: Optional[int] = None, fd_step: float = 1e-6):
        self._fun = fun
        self._grad = grad
        self.dim = dim
        self.fd_step = fd_step

    def evaluate(self, x: np.ndarray) -> float:
        return float(self._fun(np.asarray(x, dtype=float)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(x), dtype=float)
        g = np.empty_like(x)
        h = self.fd_step
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            g[i] = (self._fun(x + e) - self._fun(x - e)) / (2.0 * h)
        return g

    def value_and_gradient(self, x: np.ndarray):
        return self.evaluate(x), self.gradient(x)


@dataclass
class LbfgsConfig:
    learning_rate: float = 1.0
    history_size: int = 10
    line_search_max_iters: int = 20
    steps: int = 5
    c1: float = 1e-4
    c2: float = 0.9
    grad_tol: float = 1e-12

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValueError("require 0 < c1 < c2 < 1")


@dataclass
class AdamConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations: int = 100

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")


def _strong_wolfe(obj: Objective, x, f0, g0, d, cfg: LbfgsConfig):
    """Strong-Wolfe line search (bracket + zoom), bounded trial evaluations.

    Returns (alpha, f_new, g_new, n_evals, ok). alpha=0 with ok=False means
    no acceptable step was found within the budget.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:
        return 0.0, f0, g0, 0, False

    max_evals = cfg.line_search_max_iters
    evals = 0

    def phi(a):
        nonlocal evals
        evals += 1
        fx = obj.evaluate(x + a * d)
        gx = obj.gradient(x + a * d)
        return fx, gx, float(gx @ d)

    best = (0.0, f0, g0)

    def zoom(a_lo, f_lo, dphi_lo, a_hi, f_hi):
        nonlocal best
        for _ in range(max_evals):
            if evals >= max_evals:
                return None
            # quadratic interpolation, safeguarded by bisection
            denom = 2.0 * (f_hi - f_lo - dphi_lo * (a_hi - a_lo))
            if abs(denom) > 1e-300:
                a = a_lo - dphi_lo * (a_hi - a_lo) ** 2 / denom
            else:
                a = 0.5 * (a_lo + a_hi)
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            if not (lo + 0.1 * (hi - lo) <= a <= hi - 0.1 * (hi - lo)):
                a = 0.5 * (a_lo + a_hi)
            fa, ga, dphia = phi(a)
            if np.isnan(fa):
                raise OptimizationError("NaN objective during line search")
            if fa < best[1]:
                best = (a, fa, ga)
            if fa > f0 + cfg.c1 * a * dphi0 or fa >= f_lo:
                a_hi, f_hi = a, fa
            else:
                if abs(dphia) <= -cfg.c2 * dphi0:
                    return a, fa, ga
                if dphia * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, dphi_lo = a, fa, dphia
        return None

    a_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    a = cfg.learning_rate
    for it in range(max_evals):
        if evals >= max_evals:
            break
        fa, ga, dphia = phi(a)
        if np.isnan(fa):
            raise OptimizationError("NaN objective during line search")
        if fa < best[1]:
            best = (a, fa, ga)
        if fa > f0 + cfg.c1 * a * dphi0 or (it > 0 and fa >= f_prev):
            z = zoom(a_prev, f_prev, dphi_prev, a, fa)
            if z is None:
                break
            return (*z, evals, True)
        if abs(dphia) <= -cfg.c2 * dphi0:
            return a, fa, ga, evals, True
        if dphia >= 0.0:
            z = zoom(a, fa, dphia, a_prev, f_prev)
            if z is None:
                break
            return (*z, evals, True)
        a_prev, f_prev, dphi_prev = a, fa, dphia
        a *= 2.0

    a_best, f_best, g_best = best
    return a_best, f_best, g_best, evals, False


def lbfgs_minimize(obj: Objective, x0: np.ndarray, cfg: LbfgsConfig = None):
    """L-BFGS with strong-Wolfe line search.

    Returns (x, f, trace); trace records accepted objective values and any
    line-search warnings. Accepted values are non-increasing.
    """
    cfg = cfg or LbfgsConfig()
    x = np.asarray(x0, dtype=float).copy()
    f = obj.evaluate(x)
    if np.isnan(f):
        raise OptimizationError("NaN objective at initial point")
    g = obj.gradient(x)
    trace = {"values": [f], "warnings": [], "n_evals": 1}

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    best_x, best_f = x.copy(), f

    for step in range(cfg.steps):
        gnorm = np.linalg.norm(g)
        if gnorm <= cfg.grad_tol:
            trace["warnings"].append(f"step {step}: zero gradient, converged")
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            q += s * (a - rho * (y @ q))
        d = -q

        if float(g @ d) >= 0.0:
            d = -g  # fall back to steepest descent if curvature went bad

        alpha, f_new, g_new, n_evals, ok = _strong_wolfe(obj, x, f, g, d, cfg)
        trace["n_evals"] += n_evals
        if not ok:
            trace["warnings"].append(f"step {step}: line search failed after {n_evals} evals")
            if alpha == 0.0:
                break
        if f_new > f:
            trace["warnings"].append(f"step {step}: no decrease, stopping")
            break

        x_new = x + alpha * d
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * max(1.0, float(np.linalg.norm(s)) * float(np.linalg.norm(y))):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.history_size:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        x, f, g = x_new, f_new, g_new
        trace["values"].append(f)
        if f < best_f:
            best_f, best_x = f, x.copy()
        if not ok:
            break

    return best_x, best_f, trace


def adam_minimize(obj: Objective, x0: np.ndarray, cfg: AdamConfig = None):
    """Adam for exactly cfg.iterations steps; returns the best iterate seen.

    The objective is evaluated together with each gradient (one call per
    iteration) plus once at the final iterate.
    """
    cfg = cfg or AdamConfig()
    x = np.asarray(x0, dtype=float).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    f = obj.evaluate(x)
    if np.isnan(f):
        raise OptimizationError("NaN objective at initial point")
    best_x, best_f = x.copy(), f
    trace = {"values": [f], "warnings": []}

    for it in range(1, cfg.iterations + 1):
        if it > 1:
            f = obj.evaluate(x)
            if np.isnan(f):
                raise OptimizationError(f"NaN objective at iteration {it}")
            trace["values"].append(f)
            if f < best_f:
                best_f, best_x = f, x.copy()
        g = obj.gradient(x)
        if np.any(np.isnan(g)):
            raise OptimizationError(f"NaN gradient at iteration {it}")
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**it)
        v_hat = v / (1.0 - cfg.beta2**it)
        x = x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)

    f = obj.evaluate(x)
    if np.isnan(f):
        raise OptimizationError("NaN objective at final iterate")
    trace["values"].append(f)
    if f < best_f:
        best_f, best_x = f, x.copy()
    return best_x, best_f, trace


def check_gradient(obj: Objective, x: np.ndarray, step: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error denominator is max(1, |analytic component|).
    """
    if not step > 0.0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g = obj.gradient(x)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fd = (obj.evaluate(x + e) - obj.evaluate(x - e)) / (2.0 * step)
        err = abs(fd - g[i]) / max(1.0, abs(g[i]))
        worst = max(worst, err)
    return worst

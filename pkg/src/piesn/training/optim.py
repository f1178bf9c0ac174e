"""Small deterministic optimizers over flat parameter vectors.

``fun`` returns ``(value, gradient)`` in both.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)


class Adam:
    """First-order adaptive-moment optimizer."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def reset(self):
        self.m = self.v = None
        self.t = 0

    def step(self, x, g, scale=1.0):
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        if not np.any(g):
            return x.copy()
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return x - scale * self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def minimize(self, fun, x0, max_iter=100, gtol=1e-10, scale=1.0, callback=None):
        x = np.array(x0, dtype=float)
        f, g = fun(x)
        hist = [f]
        for k in range(max_iter):
            if np.max(np.abs(g)) <= gtol:
                return OptimResult(x, f, k, True, hist)
            x = self.step(x, g, scale)
            f, g = fun(x)
            hist.append(f)
            if callback is not None:
                callback(x, f)
        return OptimResult(x, f, max_iter, False, hist)


class Lbfgs:
    """Limited-memory BFGS: two-loop recursion plus a strong-Wolfe line search.

    When the line search fails the step falls back to steepest descent with
    Armijo backtracking and the curvature memory is cleared.
    """

    def __init__(self, memory=10, c1=1e-4, c2=0.9, max_step=None):
        self.memory = memory
        self.c1 = c1
        self.c2 = c2
        self.max_step = max_step
        self.reset()

    def reset(self):
        self.S = []
        self.Y = []

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(self.S), reversed(self.Y)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((rho, a))
            q -= a * y
        if self.S:
            s, y = self.S[-1], self.Y[-1]
            q *= (s @ y) / (y @ y)
        for (s, y), (rho, a) in zip(zip(self.S, self.Y), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q

    def _armijo(self, fun, x, f, g, d, t0):
        t = t0
        slope = g @ d
        for _ in range(60):
            xn = x + t * d
            fn, gn = fun(xn)
            if np.isfinite(fn) and fn <= f + self.c1 * t * slope:
                return t, fn, gn
            t *= 0.5
        return 0.0, f, g

    def minimize(self, fun, x0, max_iter=100, gtol=1e-10, scale=1.0, callback=None):
        x = np.array(x0, dtype=float)
        f, g = fun(x)
        hist = [f]
        cache = {}

        def f_only(z):
            key = z.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = fun(z)
            return cache[key][0]

        def g_only(z):
            key = z.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = fun(z)
            return cache[key][1]

        for k in range(max_iter):
            if np.max(np.abs(g)) <= gtol:
                return OptimResult(x, f, k, True, hist)
            d = self.direction(g)
            if g @ d >= 0:
                self.reset()
                d = -g
            if self.max_step is not None:
                nd = np.linalg.norm(d)
                cap = scale * self.max_step
                if nd > cap:
                    d = d * (cap / nd)
            elif scale != 1.0:
                d = d * scale
            if not self.S:
                d = d * min(1.0, 1.0 / max(np.linalg.norm(d), 1e-300))
            t, fn = _safe_line_search(f_only, g_only, x, d, g, f, self.c1, self.c2)
            if t is not None:
                gn = g_only(x + t * d)
            if t is None:
                t, fn, gn = self._armijo(fun, x, f, g, -g, 1.0 / max(np.linalg.norm(g), 1e-300))
                if t == 0.0:
                    return OptimResult(x, f, k, False, hist)
                s = -t * g
                self.reset()
            else:
                s = t * d
            x_new = x + s
            y = gn - g
            if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                self.S.append(s)
                self.Y.append(y)
                if len(self.S) > self.memory:
                    self.S.pop(0)
                    self.Y.pop(0)
            x, f, g = x_new, fn, np.asarray(gn)
            hist.append(f)
            if callback is not None:
                callback(x, f)
        return OptimResult(x, f, max_iter, np.max(np.abs(g)) <= gtol, hist)


def _safe_line_search(f, fprime, x, d, g, fval, c1, c2):
    """Strong-Wolfe step length, or ``(None, None)`` on failure."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            t, _, _, fn, _, _ = line_search(f, fprime, x, d, gfk=g, old_fval=fval, c1=c1, c2=c2, amax=50.0)
        except (FloatingPointError, ValueError, OverflowError):
            return None, None
    if t is None:
        return None, None
    if fn is None:
        fn = f(x + t * d)
    if not np.isfinite(fn):
        return None, None
    return t, fn


OPTIMIZERS = {"lbfgs": Lbfgs, "adam": Adam}


def optimizer_minimize(fun, x0, method="lbfgs", max_iter=100, gtol=1e-10, **kwargs) -> OptimResult:
    if method not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {method!r}; choose from {sorted(OPTIMIZERS)}")
    opt = OPTIMIZERS[method](**kwargs)
    return opt.minimize(fun, x0, max_iter=max_iter, gtol=gtol)

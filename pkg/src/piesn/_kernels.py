"""Hot inner loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``PIESN_NO_NUMBA`` is
unset (or ``"0"``). Both paths implement the same recurrences; they agree to
rounding, not bit-for-bit, because the numba loops sum in a different order
than BLAS.
"""
from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("PIESN_NO_NUMBA", "0") in ("", "0")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# reservoir recurrences
# ---------------------------------------------------------------------------


def teacher_forced_numpy(w_in, w, w_fb, w_b, alpha, inputs, feedback, x0):
    """States driven by known feedback. Returns ``(n_x, T)``."""
    T = inputs.shape[0]
    n_x = w.shape[0]
    drive = inputs @ w_in.T + feedback @ w_fb.T + w_b
    X = np.empty((n_x, T))
    x = x0.copy()
    for n in range(T):
        x = (1.0 - alpha) * x + alpha * np.tanh(drive[n] + w @ x)
        X[:, n] = x
    return X


def free_run_numpy(w_in, w, w_fb, w_b, alpha, w_out, inputs, x0, y0, bound):
    """Closed-loop rollout. Returns ``(X, Y, bad_step)``; ``bad_step`` is -1 if none."""
    T = inputs.shape[0]
    n_x = w.shape[0]
    n_y = w_out.shape[0]
    drive = inputs @ w_in.T + w_b
    X = np.zeros((n_x, T))
    Y = np.zeros((n_y, T))
    x = x0.copy()
    y = y0.copy()
    for n in range(T):
        x = (1.0 - alpha) * x + alpha * np.tanh(drive[n] + w @ x + w_fb @ y)
        y = w_out @ x
        X[:, n] = x
        Y[:, n] = y
        if not np.all(np.abs(y) <= bound):
            return X, Y, n
    return X, Y, -1


def hildreth_numpy(P, d, lam0, max_sweeps, tol):
    """Dual coordinate ascent on ``min ½λᵀPλ + dᵀλ, λ ≥ 0``.

    Returns ``(lam, sweeps, converged)``.
    """
    m = P.shape[0]
    lam = lam0.copy()
    for sweep in range(max_sweeps):
        delta = 0.0
        for i in range(m):
            if P[i, i] <= 0.0:
                continue
            g = d[i] + P[i] @ lam
            new = lam[i] - g / P[i, i]
            if new < 0.0:
                new = 0.0
            step = abs(new - lam[i])
            if step > delta:
                delta = step
            lam[i] = new
        if delta < tol * (1.0 + np.max(lam)):
            return lam, sweep + 1, True
    return lam, max_sweeps, False


if _HAVE_NUMBA:

    @njit(cache=True)
    def teacher_forced_numba(w_in, w, w_fb, w_b, alpha, inputs, feedback, x0):
        T = inputs.shape[0]
        n_x = w.shape[0]
        n_u = w_in.shape[1]
        n_y = w_fb.shape[1]
        X = np.empty((n_x, T))
        x = x0.copy()
        pre = np.empty(n_x)
        for n in range(T):
            wx = np.dot(w, x)
            for i in range(n_x):
                acc = w_b[i] + wx[i]
                for j in range(n_u):
                    acc += w_in[i, j] * inputs[n, j]
                for j in range(n_y):
                    acc += w_fb[i, j] * feedback[n, j]
                pre[i] = acc
            for i in range(n_x):
                x[i] = (1.0 - alpha) * x[i] + alpha * np.tanh(pre[i])
                X[i, n] = x[i]
        return X

    @njit(cache=True)
    def free_run_numba(w_in, w, w_fb, w_b, alpha, w_out, inputs, x0, y0, bound):
        T = inputs.shape[0]
        n_x = w.shape[0]
        n_u = w_in.shape[1]
        n_y = w_out.shape[0]
        X = np.zeros((n_x, T))
        Y = np.zeros((n_y, T))
        x = x0.copy()
        y = y0.copy()
        pre = np.empty(n_x)
        for n in range(T):
            wx = np.dot(w, x)
            for i in range(n_x):
                acc = w_b[i] + wx[i]
                for j in range(n_u):
                    acc += w_in[i, j] * inputs[n, j]
                for j in range(n_y):
                    acc += w_fb[i, j] * y[j]
                pre[i] = acc
            for i in range(n_x):
                x[i] = (1.0 - alpha) * x[i] + alpha * np.tanh(pre[i])
                X[i, n] = x[i]
            bad = False
            for k in range(n_y):
                acc = 0.0
                for i in range(n_x):
                    acc += w_out[k, i] * x[i]
                y[k] = acc
                Y[k, n] = acc
                if not abs(acc) <= bound:
                    bad = True
            if bad:
                return X, Y, n
        return X, Y, -1

    @njit(cache=True)
    def hildreth_numba(P, d, lam0, max_sweeps, tol):
        m = P.shape[0]
        lam = lam0.copy()
        for sweep in range(max_sweeps):
            delta = 0.0
            lam_max = 0.0
            for i in range(m):
                if P[i, i] <= 0.0:
                    continue
                g = d[i]
                for j in range(m):
                    g += P[i, j] * lam[j]
                new = lam[i] - g / P[i, i]
                if new < 0.0:
                    new = 0.0
                step = abs(new - lam[i])
                if step > delta:
                    delta = step
                lam[i] = new
            for i in range(m):
                if lam[i] > lam_max:
                    lam_max = lam[i]
            if delta < tol * (1.0 + lam_max):
                return lam, sweep + 1, True
        return lam, max_sweeps, False


def teacher_forced(w_in, w, w_fb, w_b, alpha, inputs, feedback, x0):
    args = (
        np.ascontiguousarray(w_in, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(w_fb, dtype=np.float64),
        np.ascontiguousarray(w_b, dtype=np.float64),
        float(alpha),
        np.ascontiguousarray(inputs, dtype=np.float64),
        np.ascontiguousarray(feedback, dtype=np.float64),
        np.ascontiguousarray(x0, dtype=np.float64),
    )
    if USE_NUMBA:
        return teacher_forced_numba(*args)
    return teacher_forced_numpy(*args)


def free_run(w_in, w, w_fb, w_b, alpha, w_out, inputs, x0, y0, bound):
    args = (
        np.ascontiguousarray(w_in, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(w_fb, dtype=np.float64),
        np.ascontiguousarray(w_b, dtype=np.float64),
        float(alpha),
        np.ascontiguousarray(w_out, dtype=np.float64),
        np.ascontiguousarray(inputs, dtype=np.float64),
        np.ascontiguousarray(x0, dtype=np.float64),
        np.ascontiguousarray(y0, dtype=np.float64),
        float(bound),
    )
    if USE_NUMBA:
        X, Y, bad = free_run_numba(*args)
    else:
        X, Y, bad = free_run_numpy(*args)
    return X, Y, int(bad)


def hildreth(P, d, lam0, max_sweeps=200_000, tol=1e-13):
    args = (
        np.ascontiguousarray(P, dtype=np.float64),
        np.ascontiguousarray(d, dtype=np.float64),
        np.ascontiguousarray(lam0, dtype=np.float64),
        int(max_sweeps),
        float(tol),
    )
    if USE_NUMBA:
        lam, sweeps, ok = hildreth_numba(*args)
    else:
        lam, sweeps, ok = hildreth_numpy(*args)
    return lam, int(sweeps), bool(ok)

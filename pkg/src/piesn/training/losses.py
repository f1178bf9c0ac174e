"""Readout losses and their analytic gradients.

Shapes: state matrices ``(n_x, T)``, predictions / targets / residuals
``(n_y, T)``, plant input series ``(T, n_u)``.

Physics residuals use the explicit-Euler step of the plant, with the plant's
state projection applied exactly as in :func:`simulate_euler`::

    F[:, n] = y[n+1] - project(y[n] + N(y[n], u[n]) dt)

With a :class:`MinMaxScaler` the outputs are de-normalised before the plant is
evaluated and the residual is divided by the channel span, i.e. it is
reported in normalised units.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import SolverError


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    lo: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, y):
        y = np.asarray(y, dtype=float)
        lo = y.min(axis=0)
        span = y.max(axis=0) - lo
        span = np.where(span > 0, span, 1.0)
        return cls(lo, span)

    def transform(self, y):
        """Time-major ``(T, n)`` or column ``(n, T)`` arrays are both accepted via ``axis``."""
        return (np.asarray(y) - self.lo) / self.span

    def inverse(self, y):
        return np.asarray(y) * self.span + self.lo

    # column-matrix helpers
    def inverse_cols(self, Y):
        return Y * self.span[:, None] + self.lo[:, None]

    def to_dict(self):
        return {"lo": self.lo.tolist(), "span": self.span.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["lo"], float), np.asarray(d["span"], float))


@dataclass
class AdaptiveLossState:
    """Log-variances ``s = log(eps^2)`` of the data and physics terms."""

    s_d: float = 1.0
    s_f: float = 1.0

    def as_array(self):
        return np.array([self.s_d, self.s_f])


# ---------------------------------------------------------------------------
# ridge pretraining
# ---------------------------------------------------------------------------


def ridge_fit(X, Yhat, gamma: float):
    """``W_out = Yhat X^T (X X^T + gamma I)^-1`` via a symmetric positive-definite solve."""
    from ..reservoir import Readout

    X = np.atleast_2d(np.asarray(X, dtype=float))
    Yhat = np.atleast_2d(np.asarray(Yhat, dtype=float))
    if X.shape[1] != Yhat.shape[1] or X.shape[1] < 1:
        raise ValueError(f"X has {X.shape[1]} columns, Yhat has {Yhat.shape[1]}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not np.all(np.isfinite(X)):
        raise ValueError("state matrix contains non-finite values")
    A = X @ X.T
    A[np.diag_indices_from(A)] += gamma
    if gamma == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise SolverError("X X^T is singular; use gamma > 0")
    try:
        w_t = scipy.linalg.solve(A, X @ Yhat.T, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"ridge system not positive definite ({exc}); use gamma > 0") from exc
    return Readout(np.ascontiguousarray(w_t.T))


def ridge_objective_grad(W, X, Yhat, gamma):
    """Gradient of ``J_data + gamma ||W||^2 / (n_y T)``; zero at the ridge solution."""
    n_y, T = Yhat.shape
    return 2.0 / (n_y * T) * ((W @ X - Yhat) @ X.T + gamma * W)


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------


def data_loss(Y, Yhat) -> float:
    """Mean over outputs of the mean-over-time squared error."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Yhat = np.atleast_2d(np.asarray(Yhat, dtype=float))
    if Y.shape != Yhat.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {Yhat.shape}")
    return float(np.mean(np.mean((Yhat - Y) ** 2, axis=1)))


def physics_residual(sys, Y, U, dt, scaler: MinMaxScaler | None = None):
    """Euler residual for consecutive prediction columns; shape ``(n_y, T-1)``.

    ``U`` holds the plant input at each column's time step (``(T, n_u)``);
    its last row is unused.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] < 2:
        raise ValueError("need at least two prediction columns")
    U = np.asarray(U, dtype=float).reshape(Y.shape[1], -1).T
    Yp = Y if scaler is None else scaler.inverse_cols(Y)
    try:
        step = sys.euler_step(Yp[:, :-1], U[:, :-1], dt)
    except Exception as exc:
        raise type(exc)(f"rhs evaluation failed on collocation columns: {exc}") from exc
    F = Yp[:, 1:] - step
    if scaler is not None:
        F = F / scaler.span[:, None]
    return F


def physics_loss(F) -> float:
    """Mean over outputs of the mean over residual columns of ``F^2``.

    The inner mean divides by the number of residual columns actually formed.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.size == 0:
        raise ValueError("empty residual matrix")
    return float(np.mean(np.mean(F * F, axis=1)))


def total_loss_fixed(j_data, j_phy, lambda_data=1.0, lambda_phy=1.0) -> float:
    return lambda_data * j_data + lambda_phy * j_phy


def adaptive_total_loss(j_data, j_phy, s: AdaptiveLossState) -> float:
    return 0.5 * np.exp(-s.s_d) * j_data + 0.5 * np.exp(-s.s_f) * j_phy + s.s_d + s.s_f


# ---------------------------------------------------------------------------
# gradients w.r.t. W_out (states frozen)
# ---------------------------------------------------------------------------


@dataclass
class FrozenProblem:
    """Everything the loss needs with the reservoir states held fixed.

    ``X_t`` / ``Yhat``: teacher-forced states and labels. ``X_f``: free-run
    states at the collocation steps, ``U_f`` the plant inputs there.
    """

    X_t: np.ndarray
    Yhat: np.ndarray
    X_f: np.ndarray
    U_f: np.ndarray
    sys: object
    dt: float
    scaler: MinMaxScaler | None = None


def data_term(W, prob: FrozenProblem):
    n_y, T = prob.Yhat.shape
    E = W @ prob.X_t - prob.Yhat
    j = float(np.mean(np.mean(E * E, axis=1)))
    return j, 2.0 / (n_y * T) * (E @ prob.X_t.T)


def physics_term(W, prob: FrozenProblem):
    """``J_physics`` and its gradient, treating ``X_f`` as constant."""
    sc = prob.scaler
    X = prob.X_f
    Y = W @ X
    Yp = Y if sc is None else sc.inverse_cols(Y)
    U = np.asarray(prob.U_f, dtype=float).reshape(X.shape[1], -1).T
    y_cur, u_cur = Yp[:, :-1], U[:, :-1]
    z = y_cur + prob.sys.rhs(y_cur, u_cur) * prob.dt
    F = Yp[:, 1:] - prob.sys.project(z)
    span = np.ones(Y.shape[0]) if sc is None else sc.span
    Fn = F / span[:, None]
    n_y, M = Fn.shape
    j = float(np.mean(np.mean(Fn * Fn, axis=1)))

    # d/dy[n] of project(y + N dt) = diag(mask) (I + dt J)
    R = prob.sys.project_mask(z) * Fn / span[:, None]
    Jac = prob.sys.jacobian_y(y_cur, u_cur)  # (n_y, n_y, M)
    back = R + prob.dt * np.einsum("ijn,in->jn", Jac, R)
    grad = 2.0 / (n_y * M) * (Fn @ X[:, 1:].T - (span[:, None] * back) @ X[:, :-1].T)
    return j, grad


def loss_and_grad(params, prob: FrozenProblem, mode: str, lambdas=(1.0, 1.0)):
    """Total loss and gradient over the flat parameter vector.

    ``params`` is ``W_out.ravel()`` for ``mode="fixed"`` and
    ``[W_out.ravel(), s_d, s_f]`` for ``mode="adaptive"``. Returns
    ``(loss, grad, (j_data, j_phy))``.
    """
    n_y = prob.Yhat.shape[0]
    n_x = prob.X_t.shape[0]
    W = params[: n_y * n_x].reshape(n_y, n_x)
    jd, gd = data_term(W, prob)
    jp, gp = physics_term(W, prob)
    if mode == "fixed":
        ld, lp = lambdas
        loss = ld * jd + lp * jp
        return loss, (ld * gd + lp * gp).ravel(), (jd, jp)
    if mode == "adaptive":
        s_d, s_f = params[-2], params[-1]
        ed, ef = 0.5 * np.exp(-s_d), 0.5 * np.exp(-s_f)
        loss = ed * jd + ef * jp + s_d + s_f
        grad = np.concatenate([(ed * gd + ef * gp).ravel(), [1.0 - ed * jd, 1.0 - ef * jp]])
        return loss, grad, (jd, jp)
    raise ValueError(f"unknown mode {mode!r}")


def loss_gradient(res, ro, s, X_t, Yhat, X_f, U_f, sys, dt, mode="adaptive", lambdas=(1.0, 1.0), scaler=None):
    """Gradient of the total loss w.r.t. ``W_out`` and (adaptive mode) ``s_d``, ``s_f``.

    Returns ``(dW, ds_d, ds_f)``; the ``s`` components are ``0.0`` in fixed mode.
    """
    prob = FrozenProblem(np.asarray(X_t), np.atleast_2d(Yhat), np.asarray(X_f), np.asarray(U_f), sys, dt, scaler)
    W = ro.w_out
    if mode == "adaptive":
        params = np.concatenate([W.ravel(), [s.s_d, s.s_f]])
        _, g, _ = loss_and_grad(params, prob, "adaptive")
        return g[:-2].reshape(W.shape), float(g[-2]), float(g[-1])
    _, g, _ = loss_and_grad(W.ravel(), prob, "fixed", lambdas)
    return g.reshape(W.shape), 0.0, 0.0

"""Dense convex QP ``min zᵀHz + cᵀz  s.t.  A z <= b`` for small MPC problems.

Hildreth's dual coordinate ascent finds the active set; an equality-constrained
KKT solve on that set then polishes the solution to machine precision. When
the active set is degenerate (dependent or too many rows) a primal active-set
method started from a feasible point takes over. Rows
flagged ``soft`` are relaxed with one shared nonnegative slack variable that
carries a large quadratic penalty.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .. import _kernels
from ..errors import SolverError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QpProblem:
    H: np.ndarray
    c: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None
    soft: np.ndarray = None  # bool per row of A

    def __post_init__(self):
        n = self.c.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        if self.A is None:
            object.__setattr__(self, "A", np.zeros((0, n)))
            object.__setattr__(self, "b", np.zeros(0))
        if self.soft is None:
            object.__setattr__(self, "soft", np.zeros(self.A.shape[0], dtype=bool))

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass
class QpSolution:
    x: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    slack: float
    relaxed: bool
    kkt: dict = field(default_factory=dict)
    sweeps: int = 0

    @property
    def kkt_max(self) -> float:
        return max(self.kkt.values()) if self.kkt else 0.0


def kkt_residuals(H, c, A, b, x, lam) -> dict:
    """Max-norm stationarity, primal feasibility, dual feasibility and complementarity.

    Complementarity is the natural residual ``max |min(λ, b - A x)|``, which
    stays on the scale of the primal residual however large the multipliers.
    """
    out = {"stationarity": float(np.max(np.abs(2 * H @ x + c + A.T @ lam), initial=0.0))}
    viol = A @ x - b
    out["primal"] = float(np.max(viol, initial=0.0)) if viol.size else 0.0
    out["primal"] = max(out["primal"], 0.0)
    out["dual"] = float(max(0.0, -np.min(lam, initial=0.0)))
    out["complementarity"] = float(np.max(np.abs(np.minimum(lam, -viol)), initial=0.0))
    return out


def _augment(qp: QpProblem, penalty: float):
    """Append the shared slack ``s >= 0`` to soft rows."""
    n = qp.n
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = qp.H
    H[n, n] = penalty
    c = np.append(qp.c, 0.0)
    A = np.hstack([qp.A, -qp.soft[:, None].astype(float)])
    row = np.zeros((1, n + 1))
    row[0, n] = -1.0
    return H, c, np.vstack([A, row]), np.append(qp.b, 0.0)


def _equality_kkt(H2, c, A, b, act):
    n = H2.shape[0]
    Aa = A[act]
    m = Aa.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H2
    K[:n, n:] = Aa.T
    K[n:, :n] = Aa
    rhs = np.concatenate([-c, b[act]])
    sol, *_ = scipy.linalg.lstsq(K, rhs, lapack_driver="gelsy")
    lam = np.zeros(A.shape[0])
    lam[act] = sol[n:]
    return sol[:n], lam


def _refined_kkt(H2, c, Aw, bw, sweeps=3):
    """Equality-constrained KKT solve with a few rounds of iterative refinement."""
    n, m = H2.shape[0], Aw.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H2
    K[:n, n:] = Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-c, bw])
    lu = scipy.linalg.lu_factor(K)
    sol = scipy.linalg.lu_solve(lu, rhs)
    for _ in range(sweeps):
        sol += scipy.linalg.lu_solve(lu, rhs - K @ sol)
    return sol[:n], sol[n:]


def _polish(H2, c, A, b, lam0, max_iter=100):
    """Primal-dual active-set refinement starting from an approximate multiplier."""
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    act = lam0 > 1e-10 * max(1.0, float(np.max(lam0, initial=0.0)))
    for _ in range(max_iter):
        x, lam = _equality_kkt(H2, c, A, b, np.flatnonzero(act))
        viol = A @ x - b
        if np.any(np.abs(viol[act]) > 1e-9 * scale):
            raise SolverError("degenerate active set")
        neg = np.flatnonzero(act & (lam < -1e-12))
        bad = np.flatnonzero(~act & (viol > 1e-12 * scale))
        if neg.size == 0 and bad.size == 0:
            lam[~act] = 0.0
            return x, np.maximum(lam, 0.0), act
        if neg.size:
            act[neg[np.argmin(lam[neg])]] = False
        if bad.size:
            act[bad[np.argmax(viol[bad])]] = True
    raise SolverError("active-set polish did not converge")


def _primal_active_set(H2, c, A, b, x0, max_iter=1000):
    """Primal active-set method from a feasible ``x0``.

    A blocking constraint satisfies ``a_i p > 0`` while ``A_W p = 0``, so it is
    never in the span of the working set; the working set stays linearly
    independent and each equality solve is nonsingular.
    """
    x = x0.copy()
    work = []
    n = len(x)
    at_min = False  # x already minimises over the current working set
    for _ in range(max_iter):
        g = H2 @ x + c
        m = len(work)
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H2
        if m:
            Aw = A[work]
            K[:n, n:] = Aw.T
            K[n:, :n] = Aw
        sol = np.linalg.solve(K, np.concatenate([-g, np.zeros(m)]))
        p, lam_w = sol[:n], sol[n:]
        if at_min or m == n or np.max(np.abs(p)) <= 1e-14 * (1.0 + np.max(np.abs(x))):
            if m == 0 or lam_w.min() >= -1e-12 * max(1.0, np.max(np.abs(lam_w))):
                lam = np.zeros(A.shape[0])
                lam[work] = np.maximum(lam_w, 0.0)
                return x, lam
            del work[int(np.argmin(lam_w))]
            at_min = False
            continue
        Ap = A @ p
        slack = b - A @ x
        alpha, block = 1.0, -1
        for i in np.flatnonzero(Ap > 0):
            if i in work:
                continue
            t = max(slack[i], 0.0) / Ap[i]
            if t < alpha:
                alpha, block = t, i
        x = x + alpha * p
        if block >= 0:
            work.append(int(block))
        at_min = block < 0
    raise SolverError("primal active-set method did not converge")


def _feasible_start(qp: QpProblem, n_aug: int):
    """A point satisfying every row: ``x = 0`` when the hard rows allow it
    (always true for increment QPs), otherwise a phase-one LP point. The slack,
    if any, is the smallest that satisfies the soft rows."""
    hard = ~qp.soft
    x0 = np.zeros(n_aug)
    if np.any(qp.b[hard] < -1e-12):
        lp = scipy.optimize.linprog(np.zeros(qp.n), A_ub=qp.A[hard], b_ub=qp.b[hard], bounds=(None, None),
                                    method="highs")
        if lp.status != 0:
            raise SolverError("hard constraints are infeasible")
        x0[:qp.n] = lp.x
    if n_aug > qp.n:
        x0[-1] = max(0.0, float(np.max(qp.A[qp.soft] @ x0[:qp.n] - qp.b[qp.soft], initial=0.0)))
    return x0


def solve_qp(qp: QpProblem, penalty: float = 1e6, tol: float = 1e-13, max_sweeps: int = 5000) -> QpSolution:
    """Minimise ``xᵀHx + cᵀx`` subject to ``A x <= b`` (soft rows relaxed)."""
    H = 0.5 * (qp.H + qp.H.T)
    try:
        chol = scipy.linalg.cho_factor(2 * H)
    except np.linalg.LinAlgError as exc:
        raise SolverError("QP Hessian is not positive definite") from exc
    x_unc = scipy.linalg.cho_solve(chol, -qp.c)
    m = qp.A.shape[0]
    if m == 0 or np.all(qp.A @ x_unc <= qp.b):
        sol = QpSolution(x_unc, np.zeros(m), np.zeros(m, bool), 0.0, False)
        sol.kkt = kkt_residuals(H, qp.c, qp.A, qp.b, x_unc, sol.lam)
        return sol

    has_soft = bool(np.any(qp.soft))
    if has_soft:
        Hs, cs, As, bs = _augment(qp, penalty)
    else:
        Hs, cs, As, bs = H, qp.c, qp.A, qp.b
    H2 = 2 * Hs
    cf = scipy.linalg.cho_factor(H2)
    HiAt = scipy.linalg.cho_solve(cf, As.T)
    P = As @ HiAt
    d = bs + As @ scipy.linalg.cho_solve(cf, cs)
    lam, sweeps, _ = _kernels.hildreth(P, d, np.zeros(len(bs)), max_sweeps=max_sweeps, tol=tol)
    try:
        x, lam, _ = _polish(H2, cs, As, bs, lam)
        kkt = kkt_residuals(Hs, cs, As, bs, x, lam)
    except SolverError:
        kkt = None
    if kkt is None or max(kkt.values()) > 1e-10:
        b_safe = np.where((bs < 0.0) & (bs > -1e-12), 0.0, bs)  # rounding at an input bound
        x, lam = _primal_active_set(H2, cs, As, b_safe, _feasible_start(qp, len(cs)))
        act = np.flatnonzero(lam > 0)
        x_r, lam_r = _refined_kkt(H2, cs, As[act], b_safe[act])
        if np.all(lam_r >= 0):
            x = x_r
            lam = np.zeros_like(lam)
            lam[act] = lam_r
        kkt = kkt_residuals(Hs, cs, As, bs, x, lam)
    slack = float(x[-1]) if has_soft else 0.0
    n = qp.n
    lam_rows = lam[:m]
    sol = QpSolution(x[:n].copy(), lam_rows, lam_rows > 0, slack, slack > 1e-12, kkt, sweeps)
    if sol.relaxed:
        log.debug("soft output constraints relaxed (slack %.3g)", slack)
    return sol

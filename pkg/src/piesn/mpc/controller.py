"""Practical nonlinear MPC with an ESN prediction model.

Predictions split into a nonlinear free response (inputs held at the last
applied value) and a forced response ``G ΔU`` linearised around it. Timing
convention: the plant input ``u[k]`` chosen at step ``k`` first affects the
measurement ``y[k+1]``, so block ``(i, j)`` of ``G`` is the response of
``y[k+1+i]`` to the increment applied at ``k+j``.

Two ways of keeping the model state in step with the plant are offered:
``sync="parallel"`` runs the reservoir on its own predictions, so at steady
state the free response is flat and the integrating correction removes any
offset; ``sync="teacher"`` feeds each measurement back instead.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DivergenceError, SolverError
from ..reservoir import Readout, Reservoir
from .qp import QpProblem, QpSolution, solve_qp

log = logging.getLogger(__name__)


def _vec(v, n, name):
    a = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} must be finite")
    return a


@dataclass(frozen=True)
class MpcConfig:
    n_y_horizon: int = 10
    n_u_horizon: int = 3
    q_weight: float = 5.0
    r_weight: float = 1.0
    b_filter: float = 0.6
    u_min: tuple = (0.0, 0.0)
    u_max: tuple = (5.0, 5.0)
    y_min: tuple = (0.0, 0.0)
    y_max: tuple = (3.0, 3.0)
    outputs: tuple = (0, 1)
    slack_penalty: float = 1e6
    blowup: float = 1e6
    sync: str = "parallel"

    def __post_init__(self):
        if not 1 <= self.n_u_horizon <= self.n_y_horizon:
            raise ConfigError("need 1 <= n_u_horizon <= n_y_horizon")
        if self.q_weight < 0 or not self.r_weight > 0:
            raise ConfigError("need q_weight >= 0 and r_weight > 0")
        if not 0.0 <= self.b_filter < 1.0:
            raise ConfigError("b_filter must lie in [0, 1)")
        if len(self.u_min) != len(self.u_max) or len(self.y_min) != len(self.y_max):
            raise ConfigError("bound vectors must pair up")
        if any(lo > hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ConfigError("u_min must not exceed u_max")
        if len(self.y_min) != len(self.outputs):
            raise ConfigError("one output bound per controlled output")
        if self.sync not in ("parallel", "teacher"):
            raise ConfigError("sync must be 'parallel' or 'teacher'")


@dataclass
class MpcState:
    x: np.ndarray            # reservoir state whose readout predicts y[k]
    u_prev: np.ndarray       # input applied over the previous interval
    n: np.ndarray            # filtered prediction correction n[k-1]
    dn: np.ndarray           # filter increment Δn[k-1]
    y_pred: np.ndarray       # uncorrected model prediction of the next measurement


@dataclass
class StepInfo:
    du: np.ndarray
    F: np.ndarray
    G: np.ndarray
    qp: QpSolution | None
    fault: bool = False
    message: str = ""


@dataclass
class EsnModel:
    """Reservoir plus readout used as the controller's prediction model."""

    res: Reservoir
    ro: Readout

    @property
    def n_u(self):
        return self.res.n_u

    @property
    def n_y(self):
        return self.ro.w_out.shape[0]

    def zero_state(self):
        return np.zeros(self.res.n_x)

    def step(self, x, u, y_fb):
        """Returns the next state and the pre-activation (needed for sensitivities)."""
        r = self.res
        a = r.w_in @ u + r.w @ x + r.w_fb @ y_fb + r.w_b
        return (1.0 - r.alpha) * x + r.alpha * np.tanh(a), a

    def out(self, x):
        return self.ro.w_out @ x

    def sensitivities(self, xs, aux, u, outputs, n_u_horizon):
        """Per-increment output sensitivities along a held-input rollout.

        ``S[i+1] = (1-α)S[i] + α diag(tanh'(a[i])) (W S[i] + W_fb W_out S[i] + W_in 𝟙[j<=i])``
        with the first step's feedback term dropped.
        """
        r = self.res
        W_out = self.ro.w_out
        n_x = r.n_x
        Ny = len(aux)
        A_fb = r.w + r.w_fb @ W_out
        blocks = np.zeros((Ny, n_u_horizon, len(outputs), r.n_u))
        for j in range(n_u_horizon):
            S = np.zeros((n_x, r.n_u))
            for i in range(j, Ny):
                d = 1.0 - np.tanh(aux[i]) ** 2
                drive = (r.w @ S if i == 0 else A_fb @ S) + r.w_in
                S = (1.0 - r.alpha) * S + r.alpha * d[:, None] * drive
                blocks[i, j] = (W_out @ S)[list(outputs)]
        return blocks


@dataclass
class PlantModel:
    """The plant's own Euler map as a prediction model (exact when it is the plant).

    The model state is the plant state; feedback replaces it, so teacher
    forcing and parallel running coincide when predictions are exact.
    """

    sys: object
    dt: float

    @property
    def n_u(self):
        return self.sys.dim_u

    @property
    def n_y(self):
        return self.sys.dim_y

    def zero_state(self):
        return np.zeros(self.sys.dim_y)

    def step(self, x, u, y_fb):
        y = np.asarray(y_fb, float)
        z = y + self.dt * self.sys.rhs(y, u)
        return self.sys.project(z), np.concatenate([y, z])

    def out(self, x):
        return np.asarray(x, float)

    def sensitivities(self, xs, aux, u, outputs, n_u_horizon):
        n = self.sys.dim_y
        Ny = len(aux)
        eye = np.eye(n)
        blocks = np.zeros((Ny, n_u_horizon, len(outputs), self.n_u))
        for j in range(n_u_horizon):
            S = np.zeros((n, self.n_u))
            for i in range(j, Ny):
                y, z = aux[i][:n], aux[i][n:]
                A = eye + self.dt * self.sys.jacobian_y(y, u)
                if i == 0:
                    A = np.zeros_like(A)
                S = self.sys.project_mask(z)[:, None] * (A @ S + self.dt * self.sys.jacobian_u(y, u))
                blocks[i, j] = S[list(outputs)]
        return blocks


def free_rollout(model, x, y_fb, u, steps: int, blowup: float = 1e6):
    """Hold ``u`` for ``steps`` steps. Returns states ``(steps+1, ·)``, per-step aux data and outputs."""
    xs = [np.asarray(x, float)]
    aux = []
    ys = np.empty((steps, model.n_y))
    fb = y_fb
    for i in range(steps):
        x_new, a = model.step(xs[i], u, fb)
        xs.append(x_new)
        aux.append(a)
        ys[i] = model.out(x_new)
        if not np.all(np.abs(ys[i]) <= blowup):
            raise DivergenceError(f"model prediction diverged at horizon step {i}", step=i)
        fb = ys[i]
    return np.array(xs), np.array(aux), ys


def update_filter(state: MpcState, y_meas, b: float):
    """Advance the disturbance filter with the newest measurement.

    ``Δn[k] = (1-b)(y_m[k] - ŷ[k|k-1]) + b Δn[k-1]`` and ``n[k] = n[k-1] + Δn[k]``,
    with ``ŷ[k|k-1]`` the corrected one-step prediction.
    """
    y_hat = state.y_pred + state.n
    dn = (1.0 - b) * (np.asarray(y_meas, float) - y_hat) + b * state.dn
    return state.n + dn, dn


def free_response(model, state: MpcState, cfg: MpcConfig, y_meas):
    """Stacked free response over the prediction horizon, corrected by the filter.

    Also returns the rollout (for the sensitivity recursion) and the updated
    filter accumulators. ``state`` itself is not modified.
    """
    n, dn = update_filter(state, y_meas, cfg.b_filter)
    y_fb = _feedback(state, y_meas, cfg)
    xs, aux, ys = free_rollout(model, state.x, y_fb, state.u_prev, cfg.n_y_horizon, cfg.blowup)
    idx = list(cfg.outputs)
    F = (ys[:, idx] + n[idx]).ravel()
    return F, (xs, aux, ys), n, dn


def _feedback(state: MpcState, y_meas, cfg: MpcConfig):
    if cfg.sync == "teacher":
        return np.asarray(y_meas, float)
    return state.y_pred


def sensitivity_matrix(model, xs, aux, cfg: MpcConfig, u=None):
    """``G[(i, :), (j, :)] = ∂y[k+1+i] / ∂Δu[k+j]`` along a held-input rollout.

    An increment at ``k+j`` persists for all later steps, so it enters every
    step ``i >= j``. The first step's feedback is already known and so
    carries no sensitivity. ``u`` is the held input (needed by plant models).
    """
    blocks = model.sensitivities(xs, aux, u, tuple(cfg.outputs), cfg.n_u_horizon)
    Ny, Nu, n_yc, n_u = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(Ny * n_yc, Nu * n_u)


def build_qp(G, F, y_ref, u_prev, cfg: MpcConfig) -> QpProblem:
    """Tracking QP in the increments ``ΔU``.

    Cost ``‖Y_ref - G ΔU - F‖²_Q + ‖ΔU‖²_R`` gives ``H = GᵀQG + R`` and
    ``c = -2 GᵀQ (Y_ref - F)``. Input rows are hard, output rows soft.
    """
    Ny, Nu = cfg.n_y_horizon, cfg.n_u_horizon
    n_u = len(u_prev)
    n_yc = len(cfg.outputs)
    y_ref = np.asarray(y_ref, float)
    if y_ref.ndim == 1 and y_ref.size == n_yc:
        y_ref = np.tile(y_ref, Ny)
    y_ref = y_ref.ravel()
    if y_ref.size != Ny * n_yc:
        raise ValueError(f"reference must have {Ny * n_yc} entries, got {y_ref.size}")
    Q = cfg.q_weight * np.eye(Ny * n_yc)
    R = cfg.r_weight * np.eye(Nu * n_u)
    H = G.T @ Q @ G + R
    H = 0.5 * (H + H.T)
    c = -2.0 * G.T @ Q @ (y_ref - F)
    T = np.kron(np.tril(np.ones((Nu, Nu))), np.eye(n_u))
    u_max = np.tile(_vec(cfg.u_max, n_u, "u_max") - u_prev, Nu)
    u_min = np.tile(_vec(cfg.u_min, n_u, "u_min") - u_prev, Nu)
    y_max = np.tile(_vec(cfg.y_max, n_yc, "y_max"), Ny) - F
    y_min = np.tile(_vec(cfg.y_min, n_yc, "y_min"), Ny) - F
    A = np.vstack([T, -T, G, -G])
    b = np.concatenate([u_max, -u_min, y_max, -y_min])
    soft = np.concatenate([np.zeros(2 * T.shape[0], bool), np.ones(2 * G.shape[0], bool)])
    return QpProblem(H, c, A, b, soft)


class Controller:
    """Receding-horizon controller around an :class:`EsnModel` or :class:`PlantModel`."""

    def __init__(self, model, cfg: MpcConfig = MpcConfig()):
        if len(cfg.u_min) != model.n_u:
            raise ConfigError(f"input bounds for {len(cfg.u_min)} channels, model has {model.n_u}")
        if max(cfg.outputs) >= model.n_y:
            raise ConfigError("controlled output index out of range")
        self.model = model
        self.cfg = cfg

    def initial_state(self, u0, x0=None) -> MpcState:
        m = self.model
        x = m.zero_state() if x0 is None else np.asarray(x0, float)
        return MpcState(x=x, u_prev=_vec(u0, m.n_u, "u0"), n=np.zeros(m.n_y), dn=np.zeros(m.n_y),
                        y_pred=self.model.out(x))

    def sync(self, state: MpcState, y_meas, u_applied) -> MpcState:
        """Advance the model by one open-loop step (warm-up, no control).

        Warm-up always teacher-forces the measurement so the reservoir state
        starts consistent with the plant.
        """
        y_meas = np.asarray(y_meas, float)
        x, _ = self.model.step(state.x, np.asarray(u_applied, float), y_meas)
        return MpcState(x, np.asarray(u_applied, float), state.n, state.dn, self.model.out(x))

    def step(self, state: MpcState, y_meas, y_ref):
        """One control move: returns ``(u, new_state, info)``."""
        cfg = self.cfg
        y_meas = np.asarray(y_meas, float)
        u_prev = state.u_prev
        try:
            F, (xs, aux, _), n, dn = free_response(self.model, state, cfg, y_meas)
            G = sensitivity_matrix(self.model, xs, aux, cfg, u_prev)
            qp = build_qp(G, F, y_ref, u_prev, cfg)
            sol = solve_qp(qp, penalty=cfg.slack_penalty)
            du = sol.x[: len(u_prev)]
            u = np.clip(u_prev + du, cfg.u_min, cfg.u_max)
            info = StepInfo(sol.x, F, G, sol)
        except (SolverError, DivergenceError, np.linalg.LinAlgError) as exc:
            log.warning("controller fault, holding input: %s", exc)
            n, dn = update_filter(state, y_meas, cfg.b_filter)
            u = u_prev.copy()
            info = StepInfo(np.zeros(len(u_prev) * cfg.n_u_horizon), np.array([]), np.array([]), None, True, str(exc))
        x_next, _ = self.model.step(state.x, u, _feedback(state, y_meas, cfg))
        new = MpcState(x_next, u, n, dn, self.model.out(x_next))
        return u, new, info


def mpc_step(controller: Controller, state: MpcState, y_measured, y_ref_window):
    """Functional form of :meth:`Controller.step`."""
    return controller.step(state, y_measured, y_ref_window)

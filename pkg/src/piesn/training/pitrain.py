"""Two-stage readout training: ridge pretraining, then physics-informed refinement.

The refinement alternates between regenerating the free-run collocation
states with the current readout (outer loop) and ``k_inner`` optimizer
iterations with every state matrix frozen (inner loop). Gradients never flow
through the reservoir recurrence.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DivergenceError, LabelAccessError, TrainingInstability
from ..reservoir import Readout, Reservoir, run_free, run_teacher_forced
from .losses import AdaptiveLossState, FrozenProblem, MinMaxScaler, loss_and_grad, ridge_fit
from .optim import Adam, Lbfgs

log = logging.getLogger(__name__)

MODES = ("none", "fixed", "adaptive")


@dataclass(frozen=True)
class PiTrainConfig:
    m_outer: int = 50
    k_inner: int = 20
    mode: str = "adaptive"
    lambda_data: float = 1.0
    lambda_phy: float = 1.0
    s_init: tuple = (1.0, 1.0)
    gamma: float = 1e-6
    washout: int = 0
    optimizer: str = "lbfgs"
    lr: float = 1e-3
    memory: int = 10
    gtol: float = 1e-12
    blowup: float = 1e6
    max_retries: int = 3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.m_outer < 1 or self.k_inner < 1:
            raise ConfigError("m_outer and k_inner must be >= 1")
        if self.mode == "fixed" and not (self.lambda_data > 0 and self.lambda_phy > 0):
            raise ConfigError("fixed mode needs positive lambdas")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")


_FORBIDDEN = frozenset({"y_col", "y_test", "y_collocation", "labels", "series", "test"})


@dataclass(frozen=True, eq=False)
class TrainingData:
    """What the trainer is allowed to see.

    ``u_lab``/``y_lab``: ESN inputs and targets of the labelled steps (targets in
    model units), ``y_init``: feedback for the first labelled step.
    ``u_col``: ESN inputs over the collocation steps, ``u_col_plant``: the same
    steps' plant inputs in physical units (for the rhs).
    """

    u_lab: np.ndarray
    y_lab: np.ndarray
    y_init: np.ndarray
    u_col: np.ndarray
    u_col_plant: np.ndarray
    dt: float
    scaler: MinMaxScaler | None = None

    def __getattr__(self, name):
        if name in _FORBIDDEN:
            raise LabelAccessError(f"training code may not read {name!r}")
        raise AttributeError(name)

    @property
    def n_t(self):
        return len(self.y_lab)

    @property
    def n_f(self):
        return len(self.u_col)


@dataclass
class TrainReport:
    outer: list = field(default_factory=list)
    inner: list = field(default_factory=list)
    j_data: list = field(default_factory=list)
    j_physics: list = field(default_factory=list)
    total: list = field(default_factory=list)
    s_d: list = field(default_factory=list)
    s_f: list = field(default_factory=list)
    colloc_mse: list = field(default_factory=list)
    test_mse: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    best_total: list = field(default_factory=list)
    pretrain_j_data: float = float("nan")
    retries: int = 0
    x_f_generations: int = 0

    COLUMNS = ("outer", "inner", "j_data", "j_physics", "total", "s_d", "s_f", "colloc_mse", "test_mse",
               "best_total", "wall_time")

    def __len__(self):
        return len(self.total)

    def _truncate(self, n):
        for c in self.COLUMNS:
            del getattr(self, c)[n:]

    def write_csv(self, path, include_time=False) -> None:
        cols = [c for c in self.COLUMNS if include_time or c != "wall_time"]
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(*(getattr(self, c) for c in cols)):
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])


@dataclass
class TrainResult:
    readout: Readout
    pretrained: Readout
    s: AdaptiveLossState
    report: TrainReport
    x_last: np.ndarray
    y_last: np.ndarray


def teacher_forced_states(res: Reservoir, data: TrainingData):
    return run_teacher_forced(res, data.u_lab, data.y_lab, y0=data.y_init)


def pretrain(res: Reservoir, data: TrainingData, gamma: float, washout: int = 0):
    """Ridge readout on the labelled steps. Returns ``(readout, X_t, Yhat, x_last)``."""
    X_full = teacher_forced_states(res, data)
    X_t = X_full[:, washout:]
    Yhat = np.asarray(data.y_lab, float).T[:, washout:]
    return ridge_fit(X_t, Yhat, gamma), X_t, Yhat, X_full[:, -1].copy()


def _make_optimizer(cfg: PiTrainConfig):
    if cfg.optimizer == "adam":
        return Adam(lr=cfg.lr)
    return Lbfgs(memory=cfg.memory)


def train_pi_esn(res: Reservoir, data: TrainingData, sys, cfg: PiTrainConfig, monitor=None, pretrained=None):
    """Pretrain by ridge regression, then refine the readout against the plant physics.

    ``monitor(readout) -> (colloc_mse, test_mse)`` is optional and is called
    once per outer iteration; it is how a caller that owns held-out labels
    records them without exposing them to the trainer.
    ``pretrained`` skips the ridge solve (used when resuming).
    """
    t0 = time.perf_counter()
    ro0, X_t, Yhat, x_last = pretrain(res, data, cfg.gamma, cfg.washout)
    if pretrained is not None:
        ro0 = pretrained
    y_last = np.asarray(data.y_lab, float)[-1].copy()
    report = TrainReport(pretrain_j_data=float(np.mean(np.mean((ro0.w_out @ X_t - Yhat) ** 2, axis=1))))
    s = AdaptiveLossState(*cfg.s_init)
    if cfg.mode == "none":
        return TrainResult(ro0, ro0, s, report, x_last, y_last)

    n_y, n_x = ro0.w_out.shape
    adaptive = cfg.mode == "adaptive"
    lambdas = (cfg.lambda_data, cfg.lambda_phy)
    params = ro0.w_out.ravel().copy()
    if adaptive:
        params = np.concatenate([params, [s.s_d, s.s_f]])

    def unpack(p):
        return p[: n_y * n_x].reshape(n_y, n_x)

    best = (np.inf, params.copy())
    step_cap = None
    prev = None  # (params at start of previous inner phase, its frozen problem, report length)
    m = 0
    retries = 0
    while m < cfg.m_outer:
        try:
            X_f, _ = run_free(res, Readout(unpack(params)), data.u_col, x0=x_last, y0=y_last, blowup=cfg.blowup)
            report.x_f_generations += 1
        except DivergenceError as exc:
            if prev is None or retries >= cfg.max_retries:
                raise TrainingInstability(
                    f"collocation free run diverged at outer iteration {m} (step {exc.step}) "
                    f"after {retries} retries"
                ) from exc
            retries += 1
            report.retries += 1
            p_start, prob_prev, n_rows = prev
            disp = np.linalg.norm(params - p_start)
            step_cap = 0.5 * disp if step_cap is None else min(0.5 * disp, 0.5 * step_cap)
            log.warning("free run diverged at outer %d; retry %d with step cap %.3g", m, retries, step_cap)
            report._truncate(n_rows)
            m -= 1
            params = _inner_phase(p_start, prob_prev, cfg, adaptive, lambdas, report, m, step_cap, monitor,
                                  unpack, t0, best_ref := [best])
            best = best_ref[0]
            m += 1
            continue
        retries = 0
        prob = FrozenProblem(X_t, Yhat, X_f, data.u_col_plant, sys, data.dt, data.scaler)
        mode = "adaptive" if adaptive else "fixed"
        f0, _, _ = loss_and_grad(params, prob, mode, lambdas)
        if f0 < best[0]:
            best = (f0, params.copy())
        prev = (params.copy(), prob, len(report))
        best_ref = [best]
        params = _inner_phase(params, prob, cfg, adaptive, lambdas, report, m, step_cap, monitor, unpack, t0, best_ref)
        best = best_ref[0]
        m += 1

    p_best = best[1]
    w_best = unpack(p_best).copy()
    if adaptive:
        s = AdaptiveLossState(float(p_best[-2]), float(p_best[-1]))
    return TrainResult(Readout(w_best), ro0, s, report, x_last, y_last)


def _inner_phase(params, prob, cfg, adaptive, lambdas, report, m, step_cap, monitor, unpack, t0, best_ref):
    mode = "adaptive" if adaptive else "fixed"
    p_start = params.copy()
    rows = []

    def fun(p):
        f, g, _ = loss_and_grad(p, prob, mode, lambdas)
        return f, g

    def record(p, f):
        rows.append(p.copy())

    opt = _make_optimizer(cfg)
    res = opt.minimize(fun, params, max_iter=cfg.k_inner, gtol=cfg.gtol, callback=record)
    p_end = res.x
    if step_cap is not None:
        disp = p_end - p_start
        nd = np.linalg.norm(disp)
        if nd > step_cap:
            p_end = p_start + disp * (step_cap / nd)
            rows = [p_end]
    if not rows:  # converged immediately: still account for one iteration
        rows = [p_end]
    rows = rows[: cfg.k_inner]
    mon = (float("nan"), float("nan"))
    for k, p in enumerate(rows):
        f, _, (jd, jp) = loss_and_grad(p, prob, mode, lambdas)
        if f < best_ref[0][0]:
            best_ref[0] = (f, p.copy())
        if monitor is not None and k == len(rows) - 1:
            mon = monitor(Readout(unpack(p)))
        report.outer.append(m)
        report.inner.append(k)
        report.j_data.append(float(jd))
        report.j_physics.append(float(jp))
        report.total.append(float(f))
        report.s_d.append(float(p[-2]) if adaptive else float("nan"))
        report.s_f.append(float(p[-1]) if adaptive else float("nan"))
        report.colloc_mse.append(float(mon[0]) if k == len(rows) - 1 else float("nan"))
        report.test_mse.append(float(mon[1]) if k == len(rows) - 1 else float("nan"))
        report.best_total.append(float(best_ref[0][0]))
        report.wall_time.append(time.perf_counter() - t0)
    return p_end

"""Closed-loop simulation of a plant under the ESN predictive controller."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DivergenceError
from .controller import Controller


@dataclass(frozen=True)
class DisturbanceSpec:
    """From ``step`` on, ``input_offset`` is added to every applied plant input
    and, once at ``step``, ``state_offset`` is added to the plant state."""

    step: int = 300
    input_offset: tuple = ()
    state_offset: tuple = ()


@dataclass
class ClosedLoopResult:
    dt: float
    ref: np.ndarray
    y: np.ndarray        # full plant state at each control step
    u: np.ndarray
    du: np.ndarray
    iae: float
    iae_running: np.ndarray
    kkt: np.ndarray
    faults: int
    relaxed: int
    outputs: tuple
    input_names: tuple = ()
    state_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        n_u = self.u.shape[1]
        names = list(self.state_names) or [f"y{i}" for i in range(self.y.shape[1])]
        unames = list(self.input_names) or [f"u{i}" for i in range(n_u)]
        header = (["time"] + [f"ref_{names[i]}" for i in self.outputs] + [f"meas_{names[i]}" for i in self.outputs]
                  + unames + [f"d{n}" for n in unames] + ["iae"])
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self.u)):
                row = [k * self.dt, *self.ref[k], *self.y[k, list(self.outputs)], *self.u[k], *self.du[k],
                       self.iae_running[k]]
                w.writerow([repr(float(v)) for v in row])


def step_reference(levels, hold: int, steps: int):
    """Piecewise-constant reference cycling through ``levels`` every ``hold`` steps."""
    levels = np.atleast_2d(np.asarray(levels, float))
    k = np.arange(steps) // hold
    return levels[np.minimum(k, len(levels) - 1)]


def closed_loop(plant, controller: Controller, reference, disturbance: DisturbanceSpec | None, steps: int,
                dt: float, y0, u0, n_warm: int = 100) -> ClosedLoopResult:
    """Run ``steps`` control moves after ``n_warm`` open-loop steps at ``u0``.

    ``reference`` has one row per control step (extra rows feed the horizon
    window; missing rows repeat the last one). IAE is
    ``Σ_k Σ_i |ref_i[k] - y_i[k]| dt`` over the control steps.
    """
    cfg = controller.cfg
    idx = list(cfg.outputs)
    reference = np.atleast_2d(np.asarray(reference, float))
    if reference.shape[1] != len(idx):
        reference = reference.T
    pad = steps + cfg.n_y_horizon + 1 - len(reference)
    if pad > 0:
        reference = np.vstack([reference, np.repeat(reference[-1:], pad, axis=0)])
    y = np.asarray(y0, float).copy()
    u0 = np.asarray(u0, float)
    state = controller.initial_state(u0)
    for _ in range(n_warm):
        state = controller.sync(state, y, u0)
        y = plant.euler_step(y, u0, dt)
    n_u = len(u0)
    Y = np.empty((steps, len(y)))
    U = np.empty((steps, n_u))
    DU = np.empty((steps, n_u))
    kkt = np.full(steps, np.nan)
    faults = relaxed = 0
    dist = disturbance or DisturbanceSpec(step=steps + 1)
    u_off = np.asarray(dist.input_offset, float) if len(dist.input_offset) else np.zeros(n_u)
    for k in range(steps):
        if k == dist.step and len(dist.state_offset):
            y = plant.project(y + np.asarray(dist.state_offset, float))
        Y[k] = y
        window = reference[k + 1:k + 1 + cfg.n_y_horizon]
        u, state, info = controller.step(state, y, window)
        U[k] = u
        DU[k] = info.du[:n_u]
        faults += info.fault
        if info.qp is not None:
            kkt[k] = info.qp.kkt_max
            relaxed += info.qp.relaxed
        u_plant = u + (u_off if k >= dist.step else 0.0)
        y = plant.euler_step(y, u_plant, dt)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"plant diverged at control step {k}", step=k)
    err = np.abs(reference[:steps] - Y[:, idx]).sum(axis=1) * dt
    return ClosedLoopResult(dt, reference[:steps], Y, U, DU, float(err.sum()), np.cumsum(err), kkt, faults, relaxed,
                            tuple(idx), tuple(getattr(plant, "input_names", ())),
                            tuple(getattr(plant, "state_names", ())))

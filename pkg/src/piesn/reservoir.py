"""Leaky-integrator echo state networks with output feedback.

State update::

    x[n+1] = (1 - alpha) x[n] + alpha tanh(W_in u[n+1] + W x[n] + W_fb y[n] + w_b)
    y[n+1] = W_out x[n+1]

State matrices are stored column-per-timestep, shape ``(n_x, T)``. Input and
target series passed to the runners are time-major, shape ``(T, n_u)`` /
``(T, n_y)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import eigs

from . import _kernels
from .errors import ConfigError, ConstructionError, DivergenceError

DENSE_EIG_MAX = 512
DEFAULT_BLOWUP = 1e6


@dataclass(frozen=True)
class ReservoirConfig:
    n_x: int
    n_u: int
    n_y: int
    alpha: float = 1.0
    rho_star: float = 0.8
    delta_in: float = 0.1
    delta_fb: float = 0.1
    delta_b: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 0 or self.n_y < 1:
            raise ConfigError(f"bad reservoir dimensions n_x={self.n_x} n_u={self.n_u} n_y={self.n_y}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.rho_star < 1.0:
            raise ConfigError(f"rho_star must lie in (0, 1), got {self.rho_star}")
        for name in ("delta_in", "delta_fb", "delta_b"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def replace(self, **changes) -> "ReservoirConfig":
        d = asdict(self)
        d.update(changes)
        return ReservoirConfig(**d)


@dataclass(frozen=True, eq=False)
class Reservoir:
    w_in: np.ndarray
    w: np.ndarray
    w_fb: np.ndarray
    w_b: np.ndarray
    alpha: float
    config: ReservoirConfig | None = None

    @property
    def n_x(self) -> int:
        return self.w.shape[0]

    @property
    def n_u(self) -> int:
        return self.w_in.shape[1]

    @property
    def n_y(self) -> int:
        return self.w_fb.shape[1]


@dataclass(frozen=True, eq=False)
class Readout:
    w_out: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.w_out)):
            raise ConfigError("readout weights must be finite")

    def __call__(self, x):
        return self.w_out @ x


def spectral_radius(w: np.ndarray) -> float:
    n = w.shape[0]
    if n <= DENSE_EIG_MAX:
        return float(np.max(np.abs(np.linalg.eigvals(w))))
    # Arnoldi with a fixed start vector keeps this deterministic.
    v0 = np.ones(n) / np.sqrt(n)
    vals = eigs(w, k=1, which="LM", tol=1e-12, v0=v0, return_eigenvectors=False, maxiter=20 * n)
    return float(np.abs(vals[0]))


def init_reservoir(cfg: ReservoirConfig) -> Reservoir:
    """Draw fixed random weights for ``cfg``.

    The random streams are drawn unscaled and multiplied by the scalings
    afterwards, so two configs that differ only in ``delta_*`` share the same
    sign/shape pattern for a given seed (grid search relies on this).
    """
    rng = np.random.default_rng(cfg.seed)
    pattern = rng.choice(np.array([0.0, 1.0, -1.0]), size=(cfg.n_x, cfg.n_u), p=[0.5, 0.25, 0.25])
    w_star = rng.uniform(-1.0, 1.0, size=(cfg.n_x, cfg.n_x))
    fb = rng.uniform(-1.0, 1.0, size=(cfg.n_x, cfg.n_y))
    bias = rng.uniform(-1.0, 1.0, size=cfg.n_x)

    rho = spectral_radius(w_star)
    if not rho > 1e-12:
        raise ConstructionError(f"raw recurrent matrix has spectral radius {rho:g}")
    w = w_star * (cfg.rho_star / rho)

    return Reservoir(
        w_in=cfg.delta_in * pattern,
        w=w,
        w_fb=cfg.delta_fb * fb,
        w_b=cfg.delta_b * bias,
        alpha=cfg.alpha,
        config=cfg,
    )


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise DivergenceError(f"non-finite values in {name}")


def update_state(res: Reservoir, x, u, y_fb):
    """One leaky-integrator step. Pure: returns a new state vector."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    y_fb = np.atleast_1d(np.asarray(y_fb, dtype=float))
    for name, a in (("state", x), ("input", u), ("feedback", y_fb)):
        _check_finite(name, a)
    pre = res.w_in @ u + res.w @ x + res.w_fb @ y_fb + res.w_b
    return (1.0 - res.alpha) * x + res.alpha * np.tanh(pre)


def readout(ro: Readout, x):
    return ro.w_out @ np.asarray(x, dtype=float)


def _as_series(a, width, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None] if width == 1 else a[None, :]
    if a.ndim != 2 or a.shape[1] != width:
        raise ValueError(f"{name} must have shape (T, {width}), got {np.shape(a)}")
    return a


def run_teacher_forced(res: Reservoir, inputs, targets, x0=None, y0=None):
    """Drive the reservoir with known outputs as feedback.

    Column ``n`` of the result is the state after consuming ``inputs[n]``
    with feedback ``targets[n-1]``; the first step uses ``y0`` (zeros when
    omitted) as its feedback.
    """
    inputs = _as_series(inputs, res.n_u, "inputs")
    targets = _as_series(targets, res.n_y, "targets")
    if inputs.shape[0] != targets.shape[0] or inputs.shape[0] < 1:
        raise ValueError("inputs and targets must have equal, nonzero length")
    _check_finite("targets", targets)
    _check_finite("inputs", inputs)
    x0 = np.zeros(res.n_x) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(res.n_y) if y0 is None else np.atleast_1d(np.asarray(y0, dtype=float))
    feedback = np.vstack([y0[None, :], targets[:-1]])
    return _kernels.teacher_forced(res.w_in, res.w, res.w_fb, res.w_b, res.alpha, inputs, feedback, x0)


def run_free(res: Reservoir, ro: Readout, inputs, x0=None, y0=None, blowup=DEFAULT_BLOWUP):
    """Closed-loop rollout feeding predictions back.

    Returns ``(X, Y)`` with shapes ``(n_x, T)`` and ``(n_y, T)``. Raises
    :class:`DivergenceError` (with ``step``) once any output exceeds ``blowup``.
    """
    inputs = _as_series(inputs, res.n_u, "inputs")
    _check_finite("inputs", inputs)
    x0 = np.zeros(res.n_x) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(res.n_y) if y0 is None else np.atleast_1d(np.asarray(y0, dtype=float))
    X, Y, bad = _kernels.free_run(res.w_in, res.w, res.w_fb, res.w_b, res.alpha, ro.w_out, inputs, x0, y0, blowup)
    if bad >= 0:
        raise DivergenceError(f"free-run output exceeded {blowup:g} at step {bad}", step=bad)
    return X, Y


def warmup(res: Reservoir, ro: Readout | None, inputs, targets, n_warm: int, y0=None):
    """Teacher-forced state after ``n_warm`` steps from the zero state."""
    if n_warm == 0:
        return np.zeros(res.n_x)
    targets = _as_series(targets, res.n_y, "targets")
    if n_warm > targets.shape[0]:
        raise ValueError(f"n_warm={n_warm} exceeds {targets.shape[0]} available targets")
    X = run_teacher_forced(res, np.asarray(inputs)[:n_warm], targets[:n_warm], y0=y0)
    return X[:, -1].copy()


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

MODEL_FORMAT = "piesn-model/1"


def save_model(path, res: Reservoir, ro: Readout | None = None, extra: dict | None = None) -> None:
    """Write a JSON model file. Matrices are row-major nested lists."""
    doc = {
        "format": MODEL_FORMAT,
        "config": asdict(res.config) if res.config is not None else None,
        "alpha": res.alpha,
        "w_in": res.w_in.tolist(),
        "w": res.w.tolist(),
        "w_fb": res.w_fb.tolist(),
        "w_b": res.w_b.tolist(),
        "w_out": None if ro is None else ro.w_out.tolist(),
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path):
    """Inverse of :func:`save_model`. Returns ``(reservoir, readout, extra)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ConfigError(f"{path}: not a {MODEL_FORMAT} file")
    cfg = ReservoirConfig(**doc["config"]) if doc.get("config") else None
    n_y = len(doc["w_fb"][0]) if doc["w_fb"] and doc["w_fb"][0] else (cfg.n_y if cfg else 1)
    n_u = len(doc["w_in"][0]) if doc["w_in"] and doc["w_in"][0] else (cfg.n_u if cfg else 0)
    n_x = len(doc["w"])
    res = Reservoir(
        w_in=np.array(doc["w_in"], dtype=float).reshape(n_x, n_u),
        w=np.array(doc["w"], dtype=float),
        w_fb=np.array(doc["w_fb"], dtype=float).reshape(n_x, n_y),
        w_b=np.array(doc["w_b"], dtype=float),
        alpha=float(doc["alpha"]),
        config=cfg,
    )
    ro = None if doc["w_out"] is None else Readout(np.array(doc["w_out"], dtype=float))
    return res, ro, doc.get("extra", {})

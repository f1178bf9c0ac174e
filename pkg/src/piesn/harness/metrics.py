"""Free-run prediction error over the unlabelled regions of a dataset."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError
from ..reservoir import Readout, Reservoir, run_free, run_teacher_forced
from .dataset import Dataset


def mse(pred, labels) -> float:
    """Mean over outputs of the per-output mean squared error (time-major arrays)."""
    pred = np.asarray(pred, float)
    labels = np.asarray(labels, float)
    if pred.shape != labels.shape:
        raise ValueError(f"prediction shape {pred.shape} != label shape {labels.shape}")
    if pred.shape[0] == 0:
        return float("nan")
    return float(np.mean(np.mean((pred - labels) ** 2, axis=0)))


@dataclass(frozen=True)
class MseResult:
    collocation: float
    test: float
    unstable: bool = False
    diverged_at: int | None = None  # row offset from the end of the labelled region


def labelled_end_state(res: Reservoir, dataset: Dataset):
    """Teacher-forced state and output at the last labelled row."""
    view = dataset.training_view()
    X = run_teacher_forced(res, view.u_lab, view.y_lab, y0=view.y_init)
    return X[:, -1].copy(), np.asarray(view.y_lab[-1], float).copy()


def predict_unlabelled(res: Reservoir, ro: Readout, dataset: Dataset):
    """Free-run outputs (time-major, model units) over collocation followed by test rows."""
    x0, y0 = labelled_end_state(res, dataset)
    start = dataset.split.rows("collocation").start
    u = dataset.esn_inputs()[start:]
    if len(u) == 0:
        return np.zeros((0, res.n_y))
    _, Y = run_free(res, ro, u, x0=x0, y0=y0)
    return Y.T


def evaluate_mse(res: Reservoir, ro: Readout, dataset: Dataset, region: str = "both"):
    """Free-run MSE from the end of the labelled data.

    ``region`` is ``"collocation"``, ``"test"`` or ``"both"``; the first two
    return a float, ``"both"`` an :class:`MseResult`. The rollout always
    starts right after the labelled rows, so the test error includes the
    drift accumulated over the collocation rows. A divergent rollout scores
    ``inf`` on every region it reaches and is flagged unstable.
    """
    if region not in ("collocation", "test", "both"):
        raise ValueError(f"unknown region {region!r}")
    split = dataset.split
    try:
        Y = predict_unlabelled(res, ro, dataset)
        col = mse(Y[: split.n_f], dataset.labels("collocation"))
        tst = mse(Y[split.n_f:], dataset.labels("test"))
        out = MseResult(col, tst)
    except DivergenceError as exc:
        step = exc.step if exc.step is not None else 0
        col = math.inf if step < split.n_f or split.n_f == 0 else _partial(res, ro, dataset)
        out = MseResult(col, math.inf, True, step)
    if region == "both":
        return out
    return out.collocation if region == "collocation" else out.test


def _partial(res, ro, dataset):
    """Collocation error when the rollout only diverges inside the test rows."""
    x0, y0 = labelled_end_state(res, dataset)
    rows = dataset.split.rows("collocation")
    _, Y = run_free(res, ro, dataset.esn_inputs()[rows], x0=x0, y0=y0)
    return mse(Y.T, dataset.labels("collocation"))

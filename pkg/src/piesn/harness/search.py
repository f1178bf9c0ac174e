"""Grid search over reservoir scalings and the ridge penalty.

Each cell fits a ridge readout on the training rows and scores the free run
over the validation rows. The winner is the lowest validation MSE; exact ties
go to the lowest ``gamma``, then the lowest ``delta_in``, then ``delta_fb``.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DivergenceError, PiesnError, SolverError
from ..reservoir import ReservoirConfig, init_reservoir, run_free, run_teacher_forced
from ..training.losses import ridge_fit
from .dataset import Dataset
from .metrics import mse

log = logging.getLogger(__name__)


class GridSearchError(PiesnError):
    pass


@dataclass(frozen=True)
class GridSpec:
    delta_in: tuple
    delta_fb: tuple
    gamma: tuple
    alpha: tuple | None = None
    rho: tuple | None = None

    def __post_init__(self):
        for name in ("delta_in", "delta_fb", "gamma"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"grid axis {name} is empty")
        for name in ("alpha", "rho"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ValueError(f"grid axis {name} is empty")

    def cells(self, template: ReservoirConfig):
        alphas = self.alpha or (template.alpha,)
        rhos = self.rho or (template.rho_star,)
        return itertools.product(alphas, rhos, self.delta_in, self.delta_fb)

    @property
    def size(self) -> int:
        return (len(self.delta_in) * len(self.delta_fb) * len(self.gamma)
                * len(self.alpha or (0,)) * len(self.rho or (0,)))


@dataclass
class SearchResult:
    config: ReservoirConfig
    gamma: float
    val_mse: float
    table: list = field(default_factory=list)  # (alpha, rho, delta_in, delta_fb, gamma, val_mse)

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "rho", "delta_in", "delta_fb", "gamma", "val_mse"])
            for row in self.table:
                w.writerow([repr(float(v)) for v in row])


def _tie_key(row):
    alpha, rho, d_in, d_fb, gamma, val = row
    return (val, gamma, d_in, d_fb, alpha, rho)


def grid_search(template: ReservoirConfig, dataset: Dataset, grid: GridSpec, washout: int = 0) -> SearchResult:
    """Pick reservoir scalings and ``gamma`` by validation free-run MSE.

    The caller retrains on all labelled rows with the returned settings.
    """
    if dataset.split.n_ve == 0:
        raise GridSearchError("grid search needs validation rows (n_ve > 0)")
    view = dataset.training_view("train")
    y_val = dataset.labels("validation")
    table = []
    for alpha, rho, d_in, d_fb in grid.cells(template):
        cfg = template.replace(alpha=alpha, rho_star=rho, delta_in=d_in, delta_fb=d_fb)
        res = init_reservoir(cfg)
        X = run_teacher_forced(res, view.u_lab, view.y_lab, y0=view.y_init)
        Xw = X[:, washout:]
        Yw = np.asarray(view.y_lab, float).T[:, washout:]
        for gamma in grid.gamma:
            try:
                ro = ridge_fit(Xw, Yw, gamma)
                _, Y = run_free(res, ro, view.u_col, x0=X[:, -1], y0=view.y_lab[-1])
                val = mse(Y.T, y_val)
                if not math.isfinite(val):
                    val = math.inf
            except (DivergenceError, SolverError) as exc:
                log.debug("grid cell diverged: %s", exc)
                val = math.inf
            table.append((alpha, rho, d_in, d_fb, gamma, val))
    best = min(table, key=_tie_key)
    if not math.isfinite(best[5]):
        raise GridSearchError(f"every grid cell diverged ({grid})")
    alpha, rho, d_in, d_fb, gamma, val = best
    cfg = template.replace(alpha=alpha, rho_star=rho, delta_in=d_in, delta_fb=d_fb)
    return SearchResult(cfg, gamma, val, table)

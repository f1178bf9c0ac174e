"""Contiguous train/validation/collocation/test datasets.

Row ``r`` of the underlying series holds the plant input ``u[r]`` (held from
``t_r`` to ``t_{r+1}``) and the state ``y[r]``. The ESN output at row ``r`` is
driven by the input that produced it, ``u[r-1]``, so :meth:`Dataset.esn_inputs`
is the model-unit input series shifted down by one row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..systems import SignalSpec, TimeSeries, simulate_euler
from ..systems.signals import generate
from ..training.losses import MinMaxScaler
from ..training.pitrain import TrainingData

REGIONS = ("train", "validation", "labeled", "collocation", "test")


@dataclass(frozen=True)
class SplitSpec:
    n_te: int
    n_ve: int
    n_f: int
    n_test: int

    def __post_init__(self):
        if min(self.n_te, self.n_ve, self.n_f, self.n_test) < 0:
            raise ValueError("split sizes must be >= 0")
        if self.n_te < 2:
            raise ValueError("need at least two training rows")

    @property
    def n_t(self) -> int:
        return self.n_te + self.n_ve

    @property
    def total(self) -> int:
        return self.n_te + self.n_ve + self.n_f + self.n_test

    def rows(self, region: str) -> slice:
        a = self.n_te
        b = a + self.n_ve
        c = b + self.n_f
        d = c + self.n_test
        table = {"train": (0, a), "validation": (a, b), "labeled": (0, b), "collocation": (b, c), "test": (c, d)}
        if region not in table:
            raise ValueError(f"unknown region {region!r}; expected one of {REGIONS}")
        return slice(*table[region])


class Dataset:
    """One continuous simulation split by index.

    Outputs and (optionally) inputs are mapped to model units by min-max
    scalers fitted on the labelled rows only.
    """

    def __init__(self, series: TimeSeries, split: SplitSpec, sys, scale_outputs=False, scale_inputs=False):
        if len(series) != split.total:
            raise ValueError(f"series has {len(series)} rows, split needs {split.total}")
        self.series = series
        self.split = split
        self.sys = sys
        lab = split.rows("labeled")
        self.scaler = MinMaxScaler.fit(series.y[lab]) if scale_outputs else None
        self.u_scaler = MinMaxScaler.fit(series.u[lab]) if scale_inputs else None

    @property
    def dt(self) -> float:
        return self.series.dt

    @property
    def y_model(self):
        y = self.series.y
        return y if self.scaler is None else self.scaler.transform(y)

    @property
    def u_model(self):
        u = self.series.u
        return u if self.u_scaler is None else self.u_scaler.transform(u)

    def esn_inputs(self):
        u = self.u_model
        return np.vstack([u[:1], u[:-1]])

    def labels(self, region: str):
        """Model-unit labels for evaluation; training code goes through :meth:`training_view`."""
        return self.y_model[self.split.rows(region)]

    def training_view(self, labeled: str = "labeled", n_f: int | None = None) -> TrainingData:
        """Labelled rows of ``labeled`` plus the inputs of the rows that follow them.

        With ``labeled="train"`` the validation rows play the collocation role,
        which is what hyperparameter search uses.
        """
        lab = self.split.rows(labeled)
        stop = lab.stop
        if n_f is None:
            n_f = self.split.n_f if labeled == "labeled" else self.split.n_ve
        y = self.y_model
        u_esn = self.esn_inputs()
        return TrainingData(
            u_lab=u_esn[lab.start + 1:stop].copy(),
            y_lab=y[lab.start + 1:stop].copy(),
            y_init=y[lab.start].copy(),
            u_col=u_esn[stop:stop + n_f].copy(),
            u_col_plant=self.series.u[stop:stop + n_f].copy(),
            dt=self.dt,
            scaler=self.scaler,
        )

    def meta(self) -> dict:
        m = dict(self.series.meta)
        m["split"] = {"n_te": self.split.n_te, "n_ve": self.split.n_ve, "n_f": self.split.n_f,
                      "n_test": self.split.n_test}
        if self.scaler is not None:
            m["output_scaler"] = self.scaler.to_dict()
        if self.u_scaler is not None:
            m["input_scaler"] = self.u_scaler.to_dict()
        return m


def make_dataset(sys, signal: SignalSpec, split: SplitSpec, dt: float, y0, seed: int | None = None,
                 scale_outputs=False, scale_inputs=False) -> Dataset:
    """Simulate ``split.total`` rows under ``signal`` and split them contiguously.

    ``seed`` overrides the signal's own seed when given.
    """
    if seed is not None:
        signal = SignalSpec(signal.kind, signal.low, signal.high, signal.hold_min, signal.hold_max, seed)
    u = generate(signal, split.total)
    ts = simulate_euler(sys, y0, u, dt)
    ts.meta.update({"system": sys.name, "seed": signal.seed, "signal": {
        "kind": signal.kind, "low": list(signal.low), "high": list(signal.high),
        "hold_min": signal.hold_min, "hold_max": signal.hold_max}, "y0": list(np.atleast_1d(y0).astype(float))})
    return Dataset(ts, split, sys, scale_outputs=scale_outputs, scale_inputs=scale_inputs)

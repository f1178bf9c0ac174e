from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class TimeSeries:
    """Uniformly sampled inputs and states.

    Row ``n`` holds the input applied from ``t_n`` to ``t_{n+1}`` and the
    state at ``t_n``.
    """

    dt: float
    u: np.ndarray
    y: np.ndarray
    input_names: tuple = ()
    state_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(len(self.u), -1)
        self.y = np.asarray(self.y, dtype=float).reshape(len(self.y), -1)
        if len(self.u) != len(self.y):
            raise ValueError(f"input/state length mismatch: {len(self.u)} vs {len(self.y)}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.input_names:
            self.input_names = tuple(f"u{i}" for i in range(self.u.shape[1]))
        if not self.state_names:
            self.state_names = tuple(f"y{i}" for i in range(self.y.shape[1]))

    def __len__(self):
        return len(self.u)

    @property
    def time(self):
        return np.arange(len(self)) * self.dt

    def slice(self, start, stop):
        return TimeSeries(self.dt, self.u[start:stop], self.y[start:stop], self.input_names, self.state_names,
                          dict(self.meta))

    def write_csv(self, path) -> None:
        """CSV with a ``time,<inputs>,<states>`` header plus ``<path>.meta.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", *self.input_names, *self.state_names])
            for t, u, y in zip(self.time, self.u, self.y):
                w.writerow([repr(float(t)), *map(repr, u.tolist()), *map(repr, y.tolist())])
        meta = {
            "dt": self.dt,
            "inputs": list(self.input_names),
            "states": list(self.state_names),
            **self.meta,
        }
        meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable))

    @classmethod
    def read_csv(cls, path) -> "TimeSeries":
        path = Path(path)
        meta = json.loads(meta_path(path).read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n_u = len(meta["inputs"])
        dt = float(meta.pop("dt"))
        inputs = tuple(meta.pop("inputs"))
        states = tuple(meta.pop("states"))
        return cls(dt, data[:, 1:1 + n_u], data[:, 1 + n_u:], inputs, states, meta)


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")

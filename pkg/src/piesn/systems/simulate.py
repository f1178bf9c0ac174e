from __future__ import annotations

import numpy as np

from ..errors import DivergenceError
from .base import OdeSystem
from .timeseries import TimeSeries


def simulate_euler(sys: OdeSystem, y0, inputs, dt: float) -> TimeSeries:
    """Explicit Euler: ``y[n+1] = project(y[n] + N(y[n], u[n]) dt)``.

    ``inputs`` is a ``(T, dim_u)`` array or a :class:`TimeSeries` whose ``u``
    is used. The returned series has ``T`` rows with ``y[0] = y0``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(inputs, TimeSeries):
        u = inputs.u
    else:
        u = np.asarray(inputs, dtype=float).reshape(len(inputs), -1)
    if u.shape[1] != sys.dim_u:
        raise ValueError(f"{sys.name} expects {sys.dim_u} inputs, got {u.shape[1]}")
    T = u.shape[0]
    y = np.empty((T, sys.dim_y))
    y[0] = np.asarray(y0, dtype=float)
    for n in range(T - 1):
        nxt = sys.euler_step(y[n], u[n], dt)
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"{sys.name} simulation became non-finite at step {n + 1}", step=n + 1)
        y[n + 1] = nxt
    return TimeSeries(dt, u, y, sys.input_names, sys.state_names)

"""Piecewise-constant excitation signals (APRBS / PRBS)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SignalSpec:
    kind: str  # "aprbs" | "prbs"
    low: tuple
    high: tuple
    hold_min: int
    hold_max: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("aprbs", "prbs"):
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if len(self.low) != len(self.high):
            raise ValueError("low/high must have one entry per channel")
        if any(lo > hi for lo, hi in zip(self.low, self.high)):
            raise ValueError("amplitude bounds must satisfy low <= high")
        if not 1 <= self.hold_min <= self.hold_max:
            raise ValueError("need 1 <= hold_min <= hold_max")

    @property
    def n_channels(self) -> int:
        return len(self.low)


def plateau_lengths(rng, length, hold_min, hold_max):
    out = []
    total = 0
    while total < length:
        h = int(rng.integers(hold_min, hold_max + 1))
        out.append(h)
        total += h
    return out


def _generate(spec: SignalSpec, length: int, binary: bool) -> np.ndarray:
    sig = np.empty((length, spec.n_channels))
    streams = np.random.default_rng(spec.seed).spawn(spec.n_channels)
    for c, rng in enumerate(streams):
        lo, hi = float(spec.low[c]), float(spec.high[c])
        pos = 0
        level = bool(rng.integers(2))
        for h in plateau_lengths(rng, length, spec.hold_min, spec.hold_max):
            if binary:
                value = hi if level else lo
                level = not level
            else:
                value = rng.uniform(lo, hi)
            sig[pos:pos + h, c] = value
            pos += h
    return sig


def gen_aprbs(spec: SignalSpec, length: int) -> np.ndarray:
    """Each plateau takes a uniform amplitude in ``[low, high]``. Shape ``(length, n_channels)``."""
    return _generate(spec, length, binary=False)


def gen_prbs(spec: SignalSpec, length: int) -> np.ndarray:
    """Plateaus alternate between ``low`` and ``high``."""
    return _generate(spec, length, binary=True)


def generate(spec: SignalSpec, length: int) -> np.ndarray:
    return gen_prbs(spec, length) if spec.kind == "prbs" else gen_aprbs(spec, length)

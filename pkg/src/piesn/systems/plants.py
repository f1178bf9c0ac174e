"""Benchmark plants: forced Van der Pol, four-tank, electric submersible pump.

Every rhs is built from +, *, and sqrt only, so a batched evaluation and a
per-step evaluation round identically. The Euler residual identity relies on
that.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from ..errors import DivergenceError
from .base import OdeSystem

SQRT_FLOOR_CM = 1e-9


# ---------------------------------------------------------------------------
# Van der Pol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VdpParams:
    mu: float = 1.0


class VanDerPol(OdeSystem):
    name = "vdp"
    dim_y = 2
    dim_u = 1
    state_names = ("h1", "h2")
    input_names = ("u",)

    def __init__(self, params: VdpParams | None = None):
        super().__init__(params or VdpParams())

    def rhs(self, y, u):
        mu = self.params.mu
        h1, h2 = y[0], y[1]
        return np.stack([h2, mu * (1.0 - h1 * h1) * h2 - h1 + u[0]])

    def jacobian_y(self, y, u):
        mu = self.params.mu
        h1, h2 = y[0], y[1]
        zero = np.zeros_like(h1)
        return np.array(
            [
                [zero, zero + 1.0],
                [-2.0 * mu * h1 * h2 - 1.0, mu * (1.0 - h1 * h1)],
            ]
        )


def vdp_rhs(h, u, p: VdpParams = VdpParams()):
    return VanDerPol(p).rhs(np.asarray(h, float), np.atleast_1d(np.asarray(u, float)))


# ---------------------------------------------------------------------------
# four-tank
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourTankParams:
    A1: float = 28.0
    A2: float = 32.0
    A3: float = 28.0
    A4: float = 32.0
    a1: float = 0.071
    a2: float = 0.071
    a3: float = 0.071
    a4: float = 0.071
    g: float = 981.0
    k1: float = 1.0
    k2: float = 1.0
    gamma1: float = 0.7
    gamma2: float = 0.6

    def __post_init__(self):
        areas = (self.A1, self.A2, self.A3, self.A4, self.a1, self.a2, self.a3, self.a4)
        if min(areas) <= 0:
            raise ValueError("tank and orifice areas must be positive")
        if not (0 < self.gamma1 < 1 and 0 < self.gamma2 < 1):
            raise ValueError("valve splits must lie in (0, 1)")


class FourTank(OdeSystem):
    """Quadruple-tank levels in cm, pump voltages in V, time in s.

    Levels are clamped at zero: the rhs sees ``max(h, 0)`` and every Euler step
    is projected back onto ``h >= 0``.
    """

    name = "fourtank"
    dim_y = 4
    dim_u = 2
    state_names = ("h1", "h2", "h3", "h4")
    input_names = ("v1", "v2")

    def __init__(self, params: FourTankParams | None = None):
        super().__init__(params or FourTankParams())

    def rhs(self, y, u):
        if np.any(np.isnan(y)) or np.any(np.isnan(u)):
            raise DivergenceError("NaN passed to four-tank rhs")
        p = self.params
        hp = np.maximum(y, 0.0)
        s = np.sqrt(2.0 * p.g * hp)
        v1, v2 = u[0], u[1]
        return np.stack(
            [
                -p.a1 / p.A1 * s[0] + p.a3 / p.A1 * s[2] + p.gamma1 * p.k1 / p.A1 * v1,
                -p.a2 / p.A2 * s[1] + p.a4 / p.A2 * s[3] + p.gamma2 * p.k2 / p.A2 * v2,
                -p.a3 / p.A3 * s[2] + (1.0 - p.gamma2) * p.k2 / p.A3 * v2,
                -p.a4 / p.A4 * s[3] + (1.0 - p.gamma1) * p.k1 / p.A4 * v1,
            ]
        )

    def _dsqrt(self, y):
        # d/dh sqrt(2 g h) = g / sqrt(2 g h); zero where the clamp is active
        g = self.params.g
        y = np.asarray(y, dtype=float)
        if np.any(y == 0.0):
            warnings.warn("four-tank Jacobian evaluated at an empty tank; using floored level", RuntimeWarning)
        d = g / np.sqrt(2.0 * g * np.maximum(y, SQRT_FLOOR_CM))
        return np.where(y >= 0.0, d, 0.0)

    def jacobian_y(self, y, u):
        p = self.params
        d = self._dsqrt(y)
        J = np.zeros((4, 4) + np.shape(y)[1:])
        J[0, 0] = -p.a1 / p.A1 * d[0]
        J[0, 2] = p.a3 / p.A1 * d[2]
        J[1, 1] = -p.a2 / p.A2 * d[1]
        J[1, 3] = p.a4 / p.A2 * d[3]
        J[2, 2] = -p.a3 / p.A3 * d[2]
        J[3, 3] = -p.a4 / p.A4 * d[3]
        return J

    def jacobian_u(self, y, u):
        p = self.params
        return np.array([
            [p.gamma1 * p.k1 / p.A1, 0.0],
            [0.0, p.gamma2 * p.k2 / p.A2],
            [0.0, (1.0 - p.gamma2) * p.k2 / p.A3],
            [(1.0 - p.gamma1) * p.k1 / p.A4, 0.0],
        ])

    def project(self, y):
        return np.maximum(y, 0.0)

    def project_mask(self, z):
        return (z >= 0.0).astype(float)


def four_tank_rhs(h, v, p: FourTankParams = FourTankParams()):
    return FourTank(p).rhs(np.asarray(h, float), np.asarray(v, float))


# ---------------------------------------------------------------------------
# electric submersible pump
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EspParams:
    beta1: float = 1.5e9
    beta2: float = 1.5e9
    V1: float = 4.054
    V2: float = 9.729
    M: float = 1.992e8
    rho: float = 950.0
    g: float = 9.81
    h_w: float = 1000.0
    PI: float = 2.32e-9
    p_r: float = 1.26e7
    p_m: float = 20.0
    C_c: float = 2e-5
    L1: float = 500.0
    L2: float = 1200.0
    D1: float = 0.1016
    D2: float = 0.1016
    A1: float = 0.008107
    A2: float = 0.008107
    mu_visc: float = 0.025
    f0: float = 60.0
    c0: float = 9.5970e2
    c1: float = 7.4959e3
    c2: float = 1.2454e6
    # viscosity corrections C_H(mu), C_Q(mu): ascending polynomial coefficients
    ch_coeffs: tuple = field(default=(1.0,))
    cq_coeffs: tuple = field(default=(1.0,))

    def __post_init__(self):
        positive = ("beta1", "beta2", "V1", "V2", "M", "rho", "g", "h_w", "PI", "p_r", "p_m", "C_c",
                    "L1", "L2", "D1", "D2", "A1", "A2", "mu_visc", "f0")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"ESP parameter {name} must be positive")
        if len(self.ch_coeffs) > 5 or len(self.cq_coeffs) > 5:
            raise ValueError("viscosity corrections are at most 4th order")

    @property
    def c_h(self) -> float:
        return float(P.polyval(self.mu_visc, self.ch_coeffs))

    @property
    def c_q(self) -> float:
        return float(P.polyval(self.mu_visc, self.cq_coeffs))

    def friction_coeff(self, L, D, A) -> float:
        # F = 0.158 rho L q^2 / (D A^2) * (mu / (rho D q))^(1/4) = k |q|^(7/4)
        return 0.158 * self.rho * L / (D * A * A) * (self.mu_visc / (self.rho * D)) ** 0.25


def _pow34(a):
    r = np.sqrt(a)
    return r * np.sqrt(r)


class Esp(OdeSystem):
    """ESP well: states (p_bh Pa, p_wh Pa, q m^3/s), inputs (f Hz, z in [0, 1])."""

    name = "esp"
    dim_y = 3
    dim_u = 2
    state_names = ("p_bh", "p_wh", "q")
    input_names = ("f", "z")

    def __init__(self, params: EspParams | None = None):
        super().__init__(params or EspParams())
        p = self.params
        self._kf = p.friction_coeff(p.L1, p.D1, p.A1) + p.friction_coeff(p.L2, p.D2, p.A2)
        self._ch = p.c_h
        self._cq = p.c_q

    # algebraic relations, exposed for tests and inspection
    def inflow(self, p_bh):
        p = self.params
        return p.PI * (p.p_r - p_bh)

    def choke_flow(self, p_wh, z):
        p = self.params
        return p.C_c * z * np.sqrt(np.maximum(p_wh - p.p_m, 0.0))

    def friction(self, q):
        aq = np.abs(q)
        return np.sign(q) * self._kf * aq * _pow34(aq)

    def head(self, q, f):
        p = self.params
        ratio = f / p.f0
        r = q / (self._cq * ratio)
        return self._ch * ratio * ratio * (p.c0 + p.c1 * r - p.c2 * r * r)

    def pump_gain(self, q, f):
        p = self.params
        return p.rho * p.g * self.head(q, f)

    def rhs(self, y, u):
        p = self.params
        p_bh, p_wh, q = y[0], y[1], y[2]
        f, z = u[0], u[1]
        q_r = self.inflow(p_bh)
        q_c = self.choke_flow(p_wh, z)
        return np.stack(
            [
                p.beta1 / p.V1 * (q_r - q),
                p.beta2 / p.V2 * (q - q_c),
                (p_bh - p_wh - p.rho * p.g * p.h_w - self.friction(q) + self.pump_gain(q, f)) / p.M,
            ]
        )

    def jacobian_y(self, y, u):
        p = self.params
        p_bh, p_wh, q = y[0], y[1], y[2]
        f, z = u[0], u[1]
        shape = np.shape(p_bh)
        J = np.zeros((3, 3) + shape)
        dp = p_wh - p.p_m
        dqc = np.where(dp > 0.0, p.C_c * z / (2.0 * np.sqrt(np.maximum(dp, 1e-9))), 0.0)
        dfric = 1.75 * self._kf * _pow34(np.abs(q))
        ratio = f / p.f0
        dhead = self._ch * ratio * ratio * (p.c1 - 2.0 * p.c2 * q / (self._cq * ratio)) / (self._cq * ratio)
        J[0, 0] = -p.beta1 / p.V1 * p.PI
        J[0, 2] = -p.beta1 / p.V1
        J[1, 1] = -p.beta2 / p.V2 * dqc
        J[1, 2] = p.beta2 / p.V2
        J[2, 0] = 1.0 / p.M
        J[2, 1] = -1.0 / p.M
        J[2, 2] = (-dfric + p.rho * p.g * dhead) / p.M
        return J


def esp_rhs(s, u, p: EspParams = EspParams()):
    return Esp(p).rhs(np.asarray(s, float), np.asarray(u, float))


SYSTEMS = {"vdp": VanDerPol, "fourtank": FourTank, "esp": Esp}
PARAMS = {"vdp": VdpParams, "fourtank": FourTankParams, "esp": EspParams}


def make_system(name: str, **params) -> OdeSystem:
    try:
        cls = SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None
    return cls(PARAMS[name](**params))

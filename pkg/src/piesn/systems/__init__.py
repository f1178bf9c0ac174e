from .base import OdeSystem, fd_jacobian, system_jacobian
from .plants import (
    Esp,
    EspParams,
    FourTank,
    FourTankParams,
    VanDerPol,
    VdpParams,
    esp_rhs,
    four_tank_rhs,
    make_system,
    vdp_rhs,
)
from .signals import SignalSpec, gen_aprbs, gen_prbs
from .simulate import simulate_euler
from .timeseries import TimeSeries

__all__ = [
    "OdeSystem", "fd_jacobian", "system_jacobian",
    "Esp", "EspParams", "FourTank", "FourTankParams", "VanDerPol", "VdpParams",
    "esp_rhs", "four_tank_rhs", "vdp_rhs", "make_system",
    "SignalSpec", "gen_aprbs", "gen_prbs", "simulate_euler", "TimeSeries",
]

"""Physics-informed echo state networks for system identification and MPC."""
__version__ = "0.1.0"

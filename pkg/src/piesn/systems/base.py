from __future__ import annotations

import numpy as np


class OdeSystem:
    """Controlled ODE ``dy/dt = N(y, u)``.

    ``rhs`` and ``jacobian_y`` broadcast over trailing axes: ``y`` may be
    ``(dim_y,)`` or ``(dim_y, M)`` with ``u`` shaped alike, and the Jacobian
    comes back as ``(dim_y, dim_y)`` or ``(dim_y, dim_y, M)``.

    ``project`` is applied after every explicit-Euler step (identity unless a
    plant has hard state limits); ``project_mask`` is its derivative.
    """

    name = "ode"
    dim_y = 0
    dim_u = 0
    state_names: tuple[str, ...] = ()
    input_names: tuple[str, ...] = ()

    def __init__(self, params=None):
        self.params = params

    def rhs(self, y, u):
        raise NotImplementedError

    def jacobian_y(self, y, u):
        raise NotImplementedError

    def jacobian_u(self, y, u):
        """``∂N/∂u`` at a single point; central differences unless overridden."""
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        J = np.empty((y.shape[0], u.shape[0]))
        for j in range(u.shape[0]):
            h = 1e-6 * (1.0 + abs(u[j]))
            up = u.copy()
            um = u.copy()
            up[j] += h
            um[j] -= h
            J[:, j] = (self.rhs(y, up) - self.rhs(y, um)) / (2 * h)
        return J

    def project(self, y):
        return y

    def project_mask(self, z):
        return np.ones_like(z)

    def euler_step(self, y, u, dt):
        return self.project(y + self.rhs(y, u) * dt)

    def __repr__(self):
        return f"{type(self).__name__}({self.params!r})"


def system_jacobian(sys: OdeSystem, y, u):
    return sys.jacobian_y(np.asarray(y, dtype=float), np.asarray(u, dtype=float))


def fd_jacobian(sys: OdeSystem, y, u, rel_step=1e-6):
    """Central-difference ∂N/∂y at a single point (test oracle)."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    n = y.shape[0]
    J = np.empty((n, n))
    for j in range(n):
        h = rel_step * (1.0 + abs(y[j]))
        yp = y.copy()
        ym = y.copy()
        yp[j] += h
        ym[j] -= h
        J[:, j] = (sys.rhs(yp, u) - sys.rhs(ym, u)) / (2 * h)
    return J

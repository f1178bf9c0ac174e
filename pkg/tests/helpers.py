"""Small problem builders shared by several test modules."""

from piesn.harness.dataset import SplitSpec, make_dataset
from piesn.reservoir import ReservoirConfig, init_reservoir, run_free, run_teacher_forced
from piesn.systems import SignalSpec, make_system
from piesn.training.losses import ridge_fit

SETUPS = {
    "vdp": dict(sig=SignalSpec("aprbs", (-1.0,), (1.0,), 20, 40), dt=0.03, y0=(2.0, 2.0), scale=False),
    "fourtank": dict(sig=SignalSpec("aprbs", (0.0, 0.0), (5.0, 5.0), 20, 40), dt=1.0, y0=(2.0, 2.0, 2.0, 2.0),
                     scale=False),
    "esp": dict(sig=SignalSpec("aprbs", (35.0, 0.1), (65.0, 1.0), 20, 40), dt=0.01, y0=(7e6, 2e6, 0.01),
                scale=True),
}


def small_dataset(name, n_te=150, n_ve=0, n_f=50, n_test=50, seed=0):
    s = SETUPS[name]
    sys = make_system(name)
    return make_dataset(sys, s["sig"], SplitSpec(n_te, n_ve, n_f, n_test), s["dt"], s["y0"], seed=seed,
                        scale_outputs=s["scale"], scale_inputs=s["scale"])


def frozen_problem(name, n_x=10, n_f=50, seed=0, gamma=1e-6):
    """Reservoir, ridge readout and the (X_t, Yhat, X_f, U_f) tuple of a small problem."""
    ds = small_dataset(name, n_f=n_f, seed=seed)
    view = ds.training_view()
    sys = ds.sys
    res = init_reservoir(ReservoirConfig(n_x, sys.dim_u, sys.dim_y, delta_in=0.2, delta_fb=0.2, seed=seed))
    X = run_teacher_forced(res, view.u_lab, view.y_lab, y0=view.y_init)
    Yhat = view.y_lab.T
    ro = ridge_fit(X, Yhat, gamma)
    X_f, _ = run_free(res, ro, view.u_col, x0=X[:, -1], y0=view.y_lab[-1])
    return ds, res, ro, X, Yhat, X_f, view.u_col_plant

ACCEPTANCE = []  # (criterion, passed, detail), printed by the terminal summary hook

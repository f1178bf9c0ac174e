import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from piesn.errors import ConfigError
from piesn.mpc import (
    Controller, DisturbanceSpec, EsnModel, MpcConfig, MpcState, PlantModel, closed_loop, free_rollout,
    sensitivity_matrix, step_reference, update_filter,
)
from piesn.reservoir import Readout, ReservoirConfig, init_reservoir
from piesn.systems import FourTank


def esn_model(n_x=20, alpha=1.0, seed=0):
    res = init_reservoir(ReservoirConfig(n_x, 2, 4, alpha=alpha, delta_in=0.3, delta_fb=0.2, delta_b=0.1,
                                         seed=seed))
    ro = Readout(np.random.default_rng(seed).normal(0, 0.4, size=(4, n_x)))
    return EsnModel(res, ro)


def rollout_with_moves(model, x, y_fb, u_prev, dU, steps, outputs):
    """Outputs when increment ``dU[j]`` is applied at step ``j`` and then held."""
    u = np.array(u_prev, float)
    fb = y_fb
    ys = []
    for i in range(steps):
        if i < len(dU):
            u = u + dU[i]
        x, _ = model.step(x, u, fb)
        fb = model.out(x)
        ys.append(fb[list(outputs)])
    return np.concatenate(ys)


@pytest.mark.parametrize("alpha", [1.0, 0.4])
def test_sensitivity_matrix_matches_finite_differences(alpha):
    cfg = MpcConfig()
    model = esn_model(alpha=alpha)
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, 20)
    y_fb = rng.normal(size=4)
    u_prev = np.array([2.0, 3.0])
    xs, aux, _ = free_rollout(model, x, y_fb, u_prev, cfg.n_y_horizon)
    G = sensitivity_matrix(model, xs, aux, cfg, u_prev)
    n_u = 2
    Gfd = np.zeros_like(G)
    h = 1e-6
    for col in range(G.shape[1]):
        j, c = divmod(col, n_u)
        dU = np.zeros((cfg.n_u_horizon, n_u))
        dU[j, c] = h
        plus = rollout_with_moves(model, x, y_fb, u_prev, dU, cfg.n_y_horizon, cfg.outputs)
        minus = rollout_with_moves(model, x, y_fb, u_prev, -dU, cfg.n_y_horizon, cfg.outputs)
        Gfd[:, col] = (plus - minus) / (2 * h)
    assert np.max(np.abs(G - Gfd)) < 1e-4


def test_two_step_sensitivity_closed_form():
    # first step: S1 = a D0 W_in ; second: S2 = (1-a) S1 + a D1 ((W + W_fb W_out) S1 + W_in)
    cfg = MpcConfig(n_y_horizon=2, n_u_horizon=1)
    model = esn_model(n_x=8, alpha=0.3, seed=4)
    r, W_out = model.res, model.ro.w_out
    x = np.random.default_rng(2).uniform(-0.3, 0.3, 8)
    u = np.array([1.0, 2.0])
    xs, aux, _ = free_rollout(model, x, np.zeros(4), u, 2)
    D0, D1 = (np.diag(1 - np.tanh(a) ** 2) for a in aux)
    S1 = r.alpha * D0 @ r.w_in
    S2 = (1 - r.alpha) * S1 + r.alpha * D1 @ ((r.w + r.w_fb @ W_out) @ S1 + r.w_in)
    expected = np.vstack([(W_out @ S1)[:2], (W_out @ S2)[:2]])
    np.testing.assert_allclose(sensitivity_matrix(model, xs, aux, cfg, u), expected, atol=1e-14)


def test_later_moves_do_not_affect_earlier_outputs():
    cfg = MpcConfig()
    model = esn_model()
    xs, aux, _ = free_rollout(model, np.zeros(20), np.zeros(4), np.array([1.0, 1.0]), cfg.n_y_horizon)
    G = sensitivity_matrix(model, xs, aux, cfg).reshape(cfg.n_y_horizon, 2, cfg.n_u_horizon, 2)
    for i in range(cfg.n_y_horizon):
        for j in range(i + 1, cfg.n_u_horizon):
            assert not G[i, :, j, :].any()


def test_plant_model_sensitivity_matches_finite_differences():
    cfg = MpcConfig()
    model = PlantModel(FourTank(), 1.0)
    y = np.array([1.5, 1.2, 0.8, 0.9])
    u = np.array([2.5, 2.0])
    xs, aux, _ = free_rollout(model, y, y, u, cfg.n_y_horizon)
    G = sensitivity_matrix(model, xs, aux, cfg, u)
    Gfd = np.zeros_like(G)
    for col in range(G.shape[1]):
        j, c = divmod(col, 2)
        dU = np.zeros((cfg.n_u_horizon, 2))
        dU[j, c] = 1e-6
        Gfd[:, col] = (rollout_with_moves(model, y, y, u, dU, cfg.n_y_horizon, cfg.outputs)
                       - rollout_with_moves(model, y, y, u, -dU, cfg.n_y_horizon, cfg.outputs)) / 2e-6
    assert np.max(np.abs(G - Gfd)) < 1e-6


# ---------------------------------------------------------------------------
# disturbance filter
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("b", [0.0, 0.3, 0.6, 0.9])
def test_filter_error_follows_damped_cosine(b):
    # constant model error e: residual e_k = e b^(k/2) cos(k theta), cos(theta) = sqrt(b)
    e = np.array([0.7, -0.2])
    state = MpcState(np.zeros(1), np.zeros(1), np.zeros(2), np.zeros(2), np.zeros(2))
    theta = np.arccos(np.sqrt(b))
    for k in range(1, 30):
        n, dn = update_filter(state, e, b)
        state = MpcState(state.x, state.u_prev, n, dn, state.y_pred)
        np.testing.assert_allclose(e - n, e * b ** (k / 2) * np.cos(k * theta), atol=1e-13)


def test_filter_without_memory_absorbs_error_in_one_step():
    state = MpcState(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), np.array([1.0]))
    n, dn = update_filter(state, np.array([1.5]), 0.0)
    np.testing.assert_allclose(n, [0.5])


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------


def test_perfect_model_tracks_references_to_steady_state():
    plant = FourTank()
    ctrl = Controller(PlantModel(plant, 1.0), MpcConfig())
    ref = step_reference([[1.5, 1.0], [2.0, 1.5]], 300, 600)
    r = closed_loop(plant, ctrl, ref, None, 600, 1.0, [2.0, 2.0, 2.0, 2.0], [2.5, 2.5], n_warm=50)
    for k in (280, 599):  # before the horizon sees the next step
        assert np.max(np.abs(r.y[k, :2] - ref[k])) < 1e-3
    assert np.nanmax(r.kkt) < 1e-8 and r.faults == 0


def test_filter_removes_offset_from_an_input_disturbance():
    plant = FourTank()
    ctrl = Controller(PlantModel(plant, 1.0), MpcConfig())
    ref = step_reference([[1.5, 1.0]], 600, 600)
    dist = DisturbanceSpec(100, (-0.5, 0.0))
    r = closed_loop(plant, ctrl, ref, dist, 600, 1.0, [2.0, 2.0, 2.0, 2.0], [2.5, 2.5], n_warm=50)
    assert np.max(np.abs(r.y[-1, :2] - ref[-1])) < 1e-3


@given(st.integers(0, 1000))
def test_applied_inputs_respect_bounds(seed):
    rng = np.random.default_rng(seed)
    cfg = MpcConfig()
    ctrl = Controller(esn_model(seed=seed % 5), cfg)
    state = ctrl.initial_state([2.5, 2.5])
    for _ in range(5):
        u, state, info = ctrl.step(state, rng.uniform(0, 3, 4), rng.uniform(0, 3, (cfg.n_y_horizon, 2)))
        assert np.all(u >= 0.0) and np.all(u <= 5.0)


@pytest.mark.filterwarnings("ignore:four-tank Jacobian:RuntimeWarning")
def test_closed_loop_log_has_running_iae(tmp_path):
    plant = FourTank()
    ctrl = Controller(PlantModel(plant, 1.0), MpcConfig())
    r = closed_loop(plant, ctrl, step_reference([[1.5, 1.0]], 50, 50), None, 50, 1.0, [2, 2, 2, 2], [2.5, 2.5],
                    n_warm=5)
    r.write_csv(tmp_path / "cl.csv")
    lines = (tmp_path / "cl.csv").read_text().splitlines()
    assert lines[0].split(",")[0] == "time" and lines[0].endswith("iae") and len(lines) == 51
    assert float(lines[-1].split(",")[-1]) == pytest.approx(r.iae)


@pytest.mark.parametrize("kw", [dict(n_u_horizon=0), dict(n_u_horizon=11), dict(r_weight=0.0),
                                dict(b_filter=1.0), dict(u_min=(6.0, 0.0)), dict(y_min=(0.0,)),
                                dict(sync="other")])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        MpcConfig(**kw)


def test_controller_checks_model_dimensions():
    with pytest.raises(ConfigError):
        Controller(esn_model(), MpcConfig(u_min=(0.0,), u_max=(5.0,)))

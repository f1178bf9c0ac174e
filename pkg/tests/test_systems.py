import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from piesn.errors import DivergenceError
from piesn.systems import (
    FourTank, FourTankParams, SignalSpec, TimeSeries, VanDerPol, VdpParams, fd_jacobian, gen_aprbs, gen_prbs,
    make_system, simulate_euler,
)
from piesn.systems.signals import generate
from piesn.training.losses import physics_residual

SYSTEMS = {
    "vdp": (np.array([2.0, 0.5]), np.array([[0.3]])),
    "fourtank": (np.array([2.0, 1.5, 1.0, 0.8]), np.array([[2.5, 3.0]])),
    "esp": (np.array([7.0e6, 2.0e6, 0.01]), np.array([[50.0, 0.5]])),
}


def test_vdp_rhs_hand_value():
    # dh1 = h2, dh2 = mu (1 - h1^2) h2 - h1 + u
    sys = VanDerPol(VdpParams(mu=1.0))
    np.testing.assert_allclose(sys.rhs(np.array([2.0, 0.0]), np.array([0.5])), [0.0, -1.5])
    np.testing.assert_allclose(sys.rhs(np.array([0.5, 1.0]), np.array([0.0])), [1.0, 0.25])


def test_four_tank_rhs_empty_tanks_is_pump_inflow():
    p = FourTankParams()
    d = FourTank(p).rhs(np.zeros(4), np.array([1.0, 1.0]))
    expected = [p.gamma1 * p.k1 / p.A1, p.gamma2 * p.k2 / p.A2, (1 - p.gamma2) * p.k2 / p.A3,
                (1 - p.gamma1) * p.k1 / p.A4]
    np.testing.assert_allclose(d, expected, rtol=1e-14)


def test_four_tank_input_jacobian_matches_differences():
    sys = FourTank()
    y, u = np.array([1.2, 0.7, 0.4, 2.0]), np.array([1.0, 4.0])
    J = sys.jacobian_u(y, u)
    Jfd = np.empty_like(J)
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1e-6
        Jfd[:, j] = (sys.rhs(y, u + e) - sys.rhs(y, u - e)) / 2e-6
    np.testing.assert_allclose(J, Jfd, atol=1e-9)


@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_state_jacobian_matches_differences(name):
    sys = make_system(name)
    y, U = SYSTEMS[name]
    J = sys.jacobian_y(y, U[0])
    Jfd = fd_jacobian(sys, y, U[0])
    scale = np.maximum(np.abs(Jfd), 1e-8 * np.max(np.abs(Jfd)))
    assert np.max(np.abs(J - Jfd) / scale) < 1e-4


@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_euler_trajectory_has_zero_physics_residual(name):
    sys = make_system(name)
    y0, U = SYSTEMS[name]
    u = np.repeat(U, 200, axis=0)
    ts = simulate_euler(sys, y0, u, 0.01 if name == "esp" else 0.1)
    F = physics_residual(sys, ts.y.T, ts.u, ts.dt)
    assert np.max(np.abs(F)) == 0.0


@given(st.lists(st.floats(0.0, 5.0), min_size=4, max_size=4), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_four_tank_levels_stay_nonnegative(h, v1, v2):
    sys = FourTank()
    y = np.array(h)
    for _ in range(50):
        y = sys.euler_step(y, np.array([v1, v2]), 5.0)
        assert np.all(y >= 0.0)


def test_batched_rhs_matches_pointwise():
    sys = make_system("fourtank")
    Y = np.abs(np.random.default_rng(0).normal(2, 1, size=(4, 7)))
    U = np.random.default_rng(1).uniform(0, 5, size=(2, 7))
    batched = sys.rhs(Y, U)
    for k in range(7):
        np.testing.assert_allclose(batched[:, k], sys.rhs(Y[:, k], U[:, k]), rtol=1e-14)


def test_simulation_reports_divergence_step():
    sys = VanDerPol(VdpParams(mu=50.0))
    with pytest.raises(DivergenceError) as exc, np.errstate(over="ignore", invalid="ignore"):
        simulate_euler(sys, [5.0, 5.0], np.zeros((500, 1)), 0.5)
    assert exc.value.step is not None and exc.value.step > 0


def test_simulate_rejects_wrong_input_width():
    with pytest.raises(ValueError):
        simulate_euler(make_system("vdp"), [0, 0], np.zeros((10, 2)), 0.1)


# ---------------------------------------------------------------------------
# excitation signals
# ---------------------------------------------------------------------------


def _plateaus(col):
    edges = np.flatnonzero(np.diff(col) != 0) + 1
    bounds = np.concatenate([[0], edges, [len(col)]])
    return np.diff(bounds), col[bounds[:-1]]


@given(st.integers(0, 10_000), st.integers(1, 30), st.integers(0, 30))
def test_aprbs_levels_and_holds_respect_spec(seed, hold_min, extra):
    spec = SignalSpec("aprbs", (-1.0, 35.0), (1.0, 65.0), hold_min, hold_min + extra, seed)
    sig = gen_aprbs(spec, 400)
    assert sig.shape == (400, 2)
    assert np.all(sig[:, 0] >= -1) and np.all(sig[:, 0] <= 1)
    assert np.all(sig[:, 1] >= 35) and np.all(sig[:, 1] <= 65)
    for c in range(2):
        lengths, _ = _plateaus(sig[:, c])
        # adjacent plateaus with equal amplitude merge only with probability zero
        assert np.all(lengths[:-1] >= hold_min)


@given(st.integers(0, 10_000))
def test_prbs_alternates_between_endpoints(seed):
    spec = SignalSpec("prbs", (0.0,), (5.0,), 3, 9, seed)
    sig = gen_prbs(spec, 300)[:, 0]
    assert set(np.unique(sig)) <= {0.0, 5.0}
    lengths, levels = _plateaus(sig)
    assert np.all(levels[1:] != levels[:-1])
    assert np.all(lengths[:-1] >= 3) and np.all(lengths[:-1] <= 9)


def test_signal_is_deterministic_per_seed():
    spec = SignalSpec("aprbs", (0.0,), (1.0,), 5, 10, 7)
    np.testing.assert_array_equal(generate(spec, 100), generate(spec, 100))
    other = SignalSpec("aprbs", (0.0,), (1.0,), 5, 10, 8)
    assert not np.array_equal(generate(spec, 100), generate(other, 100))


@pytest.mark.parametrize("kwargs", [dict(kind="chirp"), dict(low=(1.0,), high=(0.0,)), dict(hold_min=0),
                                    dict(hold_min=5, hold_max=4)])
def test_signal_spec_validation(kwargs):
    base = dict(kind="aprbs", low=(0.0,), high=(1.0,), hold_min=1, hold_max=2)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SignalSpec(**base)


def test_timeseries_csv_round_trip(tmp_path):
    ts = simulate_euler(make_system("vdp"), [2.0, 2.0], gen_aprbs(SignalSpec("aprbs", (-1,), (1,), 5, 9), 50), 0.03)
    ts.meta["seed"] = 3
    ts.write_csv(tmp_path / "s.csv")
    back = TimeSeries.read_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.u, ts.u)
    np.testing.assert_array_equal(back.y, ts.y)
    assert back.dt == ts.dt and back.meta["seed"] == 3 and back.state_names == ts.state_names


def test_unknown_system_name():
    with pytest.raises(ValueError):
        make_system("pendulum")

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import small_dataset
from piesn.config import parse_config
from piesn.errors import ConfigError, LabelAccessError, TrainingInstability
from piesn.harness import experiments as ex
from piesn.harness.dataset import SplitSpec
from piesn.harness.metrics import evaluate_mse, mse, predict_unlabelled
from piesn.harness.search import GridSearchError, GridSpec, _tie_key, grid_search
from piesn.reservoir import ReservoirConfig, init_reservoir

TINY = {
    "seed": 0,
    "data": {"system": {"name": "vdp"}, "signal": {"low": [-1.0], "high": [1.0], "hold_min": 10, "hold_max": 30},
             "split": {"n_te": 120, "n_ve": 40, "n_f": 60, "n_test": 60}, "dt": 0.03, "y0": [2.0, 2.0]},
    "reservoir": {"n_x": 15},
    "training": {"m_outer": 2, "k_inner": 3},
    "experiment": {"kind": "comparison", "seeds": [0, 1], "models": ["esn", "pi-adaptive"], "workers": 1},
}


def tiny(**updates):
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY.items()}
    for key, val in updates.items():
        doc[key] = dict(doc.get(key, {}), **val) if isinstance(val, dict) else val
    return parse_config(doc)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------


def test_regions_are_contiguous_and_cover_the_series():
    sp = SplitSpec(500, 300, 2000, 3000)
    assert sp.total == 5800 and sp.n_t == 800
    bounds = [sp.rows(r) for r in ("train", "validation", "collocation", "test")]
    assert bounds[0].start == 0 and bounds[-1].stop == 5800
    assert all(a.stop == b.start for a, b in zip(bounds, bounds[1:]))
    assert sp.rows("labeled") == slice(0, 800)
    with pytest.raises(ValueError):
        sp.rows("holdout")


def test_esn_inputs_lag_plant_inputs_by_one_row():
    ds = small_dataset("fourtank")
    u = ds.esn_inputs()
    np.testing.assert_array_equal(u[1:], ds.series.u[:-1])
    view = ds.training_view()
    np.testing.assert_array_equal(view.u_lab[0], ds.series.u[0])
    np.testing.assert_array_equal(view.y_init, ds.series.y[0])
    assert view.n_t == ds.split.n_t - 1 and view.n_f == ds.split.n_f
    # the rhs input of collocation row r is the plant input held from row r
    np.testing.assert_array_equal(view.u_col_plant, ds.series.u[ds.split.rows("collocation")])


def test_scaler_sees_only_labelled_rows():
    ds = small_dataset("esp", n_te=100, n_f=100, n_test=100)
    lab = ds.y_model[: ds.split.n_t]
    np.testing.assert_allclose(lab.min(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(lab.max(axis=0), 1.0, atol=1e-12)
    full = ds.scaler.__class__.fit(ds.series.y)
    assert not np.allclose(full.transform(ds.series.y), ds.y_model)


def test_training_view_hides_labels():
    view = small_dataset("vdp").training_view()
    for name in ("y_col", "y_test", "labels", "series"):
        with pytest.raises(LabelAccessError):
            getattr(view, name)


def test_same_seed_same_series():
    a, b = small_dataset("vdp", seed=3), small_dataset("vdp", seed=3)
    np.testing.assert_array_equal(a.series.y, b.series.y)
    assert not np.array_equal(a.series.u, small_dataset("vdp", seed=4).series.u)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def test_mse_averages_per_output_errors():
    pred = np.array([[1.0, 0.0], [1.0, 0.0]])
    labels = np.array([[0.0, 0.0], [0.0, 2.0]])
    # output 0: mean 1, output 1: mean 2
    assert mse(pred, labels) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        mse(pred, labels[:1])
    assert math.isnan(mse(np.zeros((0, 2)), np.zeros((0, 2))))


@given(st.integers(1, 20), st.integers(1, 4), st.integers(0, 10**6))
def test_mse_is_nonnegative_and_zero_on_identity(n, k, seed):
    a = np.random.default_rng(seed).normal(size=(n, k))
    assert mse(a, a) == 0.0 and mse(a, -a) >= 0.0


def test_data_generated_by_the_model_scores_zero():
    # replace the labels by the model's own free run: every unlabelled error vanishes
    ds = small_dataset("vdp")
    res = init_reservoir(ReservoirConfig(12, 1, 2, delta_in=0.2, delta_fb=0.1, seed=0))
    from piesn.training.losses import ridge_fit
    from piesn.reservoir import run_teacher_forced
    view = ds.training_view()
    ro = ridge_fit(run_teacher_forced(res, view.u_lab, view.y_lab, y0=view.y_init), view.y_lab.T, 1e-6)
    Y = predict_unlabelled(res, ro, ds)
    ds.series.y[ds.split.n_t:] = Y
    ev = evaluate_mse(res, ro, ds, "both")
    assert ev.collocation == 0.0 and ev.test == 0.0 and not ev.unstable


def test_divergent_rollout_scores_inf():
    from piesn.reservoir import Readout
    ds = small_dataset("vdp")
    res = init_reservoir(ReservoirConfig(12, 1, 2, delta_fb=1.0, seed=0))
    ro = Readout(np.full((2, 12), 1e6))
    with np.errstate(all="ignore"):
        ev = evaluate_mse(res, ro, ds, "both")
    assert ev.unstable and ev.test == math.inf and ev.collocation == math.inf


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------


def test_tie_break_prefers_small_gamma_then_small_scalings():
    rows = [(1.0, 0.8, 0.2, 0.1, 1e-4, 0.5), (1.0, 0.8, 0.1, 0.2, 1e-4, 0.5), (1.0, 0.8, 0.2, 0.1, 1e-6, 0.5),
            (1.0, 0.8, 0.1, 0.1, 1e-2, 0.7)]
    assert min(rows, key=_tie_key) == rows[2]
    assert min(rows[:2], key=_tie_key) == rows[1]


def test_grid_search_needs_validation_rows():
    ds = small_dataset("vdp", n_ve=0)
    with pytest.raises(GridSearchError):
        grid_search(ReservoirConfig(10, 1, 2), ds, GridSpec((0.1,), (0.1,), (1e-6,)))


def test_grid_search_table_covers_grid_and_picks_minimum():
    ds = small_dataset("vdp", n_te=100, n_ve=40)
    grid = GridSpec((0.1, 0.4), (0.1, 0.3), (1e-3, 1e-6))
    out = grid_search(ReservoirConfig(10, 1, 2, seed=1), ds, grid)
    assert len(out.table) == grid.size == 8
    assert out.val_mse == min(r[5] for r in out.table)
    assert (out.config.delta_in, out.config.delta_fb, out.gamma) in {(r[2], r[3], r[4]) for r in out.table
                                                                   if r[5] == out.val_mse}


# ---------------------------------------------------------------------------
# experiment planning and accounting
# ---------------------------------------------------------------------------


def test_zip_and_product_pairing():
    cfg = tiny(experiment={"seeds": [0, 1, 2], "data_seeds": [7]})
    assert [(j.seed, j.data_seed) for j in ex.plan_jobs(cfg)] == [(0, 7), (1, 7), (2, 7)]
    cfg = tiny(experiment={"seeds": [0, 1], "data_seeds": [5, 6], "pairing": "product"})
    assert len(ex.plan_jobs(cfg)) == 4
    with pytest.raises(ConfigError):
        ex.plan_jobs(tiny(experiment={"seeds": [0, 1, 2], "data_seeds": [5, 6]}))


def test_sweeps_rewrite_the_right_field():
    jobs = ex.plan_jobs(tiny(experiment={"kind": "reservoir_sweep", "sweep": [20, 30], "seeds": [0]}))
    assert [j.reservoir.n_x for j in jobs] == [20, 30] and [j.setting for j in jobs] == ["20", "30"]
    jobs = ex.plan_jobs(tiny(experiment={"kind": "datasize_sweep", "sweep": [100], "seeds": [0]}))
    assert jobs[0].data.split.n_te + jobs[0].data.split.n_ve == 100
    jobs = ex.plan_jobs(tiny(experiment={"kind": "robustness", "sweep": [0.95], "seeds": [0]}))
    assert jobs[0].training.physics_params == {"mu": 0.95} and jobs[0].setting == "0.95"
    with pytest.raises(ConfigError):
        ex.plan_jobs(tiny(experiment={"kind": "robustness", "sweep": []}))


def test_runner_rejects_wrong_kind():
    with pytest.raises(ConfigError):
        ex.run_esp(tiny())


def test_empty_seed_list_gives_empty_result(tmp_path):
    result = ex.run_comparison(tiny(experiment={"seeds": []}))
    assert result.scheduled == 0 and result.records == []
    assert ex.check_thresholds(result, tiny().thresholds) == []
    result.write_csv(tmp_path)
    assert (tmp_path / "comparison_summary.csv").read_text().count("\n") == 1


def test_unstable_runs_are_excluded_whole(monkeypatch):
    real = ex.fit_models

    def flaky(data, reservoir, training, search, models, seed, data_seed, monitor=False):
        if seed == 1:
            raise TrainingInstability("collocation free run diverged")
        return real(data, reservoir, training, search, models, seed, data_seed, monitor)

    monkeypatch.setattr(ex, "fit_models", flaky)
    result = ex.run_comparison(tiny(experiment={"seeds": [0, 1, 2]}))
    assert result.scheduled == 3 and result.n_aggregated == 2 and result.n_excluded == 1
    dropped = [r for r in result.records if r.seed == 1]
    assert len(dropped) == 2 and all(r.excluded and "instability" in r.reason for r in dropped)
    for row in result.aggregate():
        assert row.n_runs == 2 and row.n_excluded == 1


def _result(rows):
    recs = [ex.RunRecord(s, seed, seed, m, test_mse=t, colloc_mse=t) for s, seed, m, t in rows]
    return ex.ExperimentResult("t", recs, scheduled=len({(r[0], r[1]) for r in rows}))


def test_win_fraction_and_thresholds():
    r = _result([("", 0, "esn", 1.0), ("", 0, "pi-adaptive", 0.2), ("", 1, "esn", 1.0),
                 ("", 1, "pi-adaptive", 1.0), ("", 2, "esn", 1.0), ("", 2, "pi-adaptive", 0.4)])
    assert ex.win_fraction(r, "") == pytest.approx(2 / 3)
    assert r.reduction("test") == pytest.approx(1 - 1.6 / 3 / 1.0)
    th = tiny(thresholds={"min_test_reduction": 0.4, "min_win_fraction": 0.5,
                          "ordering": ["pi-adaptive", "esn"]}).thresholds
    assert ex.check_thresholds(r, th) == []
    th = tiny(thresholds={"min_test_reduction": 0.5, "min_win_fraction": 0.7}).thresholds
    fails = ex.check_thresholds(r, th)
    assert len(fails) == 2 and "reduction" in fails[0] and "wins" in fails[1]


def test_ordering_is_strict():
    r = _result([("", 0, "esn", 1.0), ("", 0, "pi-adaptive", 1.0)])
    th = tiny(thresholds={"ordering": ["pi-adaptive", "esn"]}).thresholds
    assert ex.check_thresholds(r, th)


def test_experiment_csvs_are_reproducible(tmp_path):
    cfg = tiny()
    a, b = ex.run_comparison(cfg), ex.run_comparison(cfg)
    a.write_csv(tmp_path / "a")
    b.write_csv(tmp_path / "b")
    for f in ("comparison_runs.csv", "comparison_summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert a.n_aggregated + a.n_excluded == a.scheduled == 2


def test_parallel_workers_match_serial(tmp_path):
    ex.run_comparison(tiny()).write_csv(tmp_path / "serial")
    ex.run_comparison(tiny(experiment={"workers": 2})).write_csv(tmp_path / "pool")
    assert (tmp_path / "serial" / "comparison_runs.csv").read_bytes() == (tmp_path / "pool" / "comparison_runs.csv").read_bytes()


def test_closed_loop_refuses_scaled_models():
    ds = small_dataset("esp")
    with pytest.raises(ConfigError):
        ex.run_closed_loop(tiny(mpc={}).mpc, ds, None, None)

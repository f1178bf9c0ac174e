"""Experiment runners: seeds × settings × model variants, with aggregation.

A *run* is one (setting, reservoir seed, data seed) triple. Every model
variant in a run shares the dataset and the reservoir. If any variant in a run
is numerically unstable (training blow-up or divergent evaluation) the whole
run is excluded, with the reason recorded, so that the aggregates always
compare models over the same runs.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import DataSection, ExperimentSection, GridSection, MpcSection, ReservoirSection, RunConfig, \
    TrainingSection, require
from ..errors import ConfigError, DivergenceError, TrainingInstability
from ..mpc import Controller, DisturbanceSpec, EsnModel, MpcConfig, closed_loop, step_reference
from ..reservoir import ReservoirConfig, init_reservoir
from ..systems import SignalSpec, make_system
from ..training import PiTrainConfig, train_pi_esn
from .dataset import Dataset, SplitSpec, make_dataset
from .metrics import evaluate_mse
from .search import GridSearchError, GridSpec, grid_search

log = logging.getLogger(__name__)

MODEL_MODES = {"esn": "none", "pi-fixed": "fixed", "pi-adaptive": "adaptive"}
MODEL_LABELS = {"esn": "ESN", "pi-fixed": "PI-ESN-i", "pi-adaptive": "PI-ESN-a"}


@dataclass(frozen=True)
class RunRecord:
    setting: str
    seed: int
    data_seed: int
    model: str
    colloc_mse: float = math.nan
    test_mse: float = math.nan
    iae: float = math.nan
    kkt_max: float = math.nan
    excluded: bool = False
    reason: str = ""

    COLUMNS = ("setting", "seed", "data_seed", "model", "colloc_mse", "test_mse", "iae", "kkt_max", "excluded",
               "reason")


@dataclass(frozen=True)
class AggregateRow:
    setting: str
    model: str
    n_runs: int
    n_excluded: int
    colloc_mean: float
    colloc_std: float
    test_mean: float
    test_std: float
    iae_mean: float
    iae_std: float

    COLUMNS = ("setting", "model", "n_runs", "n_excluded", "colloc_mean", "colloc_std", "test_mean", "test_std",
               "iae_mean", "iae_std")


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return v


def _mean_std(values):
    if not values:
        return math.nan, math.nan
    a = np.asarray(values, float)
    return float(a.mean()), float(a.std())


@dataclass
class ExperimentResult:
    name: str
    records: list = field(default_factory=list)
    scheduled: int = 0  # number of runs scheduled (each run holds one record per model)
    artifacts: dict = field(default_factory=dict)  # name -> object with write_csv(path)

    def run_keys(self, excluded: bool | None = None):
        keys = []
        for r in self.records:
            k = (r.setting, r.seed, r.data_seed)
            if k not in keys and (excluded is None or r.excluded == excluded):
                keys.append(k)
        return keys

    @property
    def n_aggregated(self) -> int:
        return len(self.run_keys(excluded=False))

    @property
    def n_excluded(self) -> int:
        return len(self.run_keys(excluded=True))

    def settings(self):
        out = []
        for r in self.records:
            if r.setting not in out:
                out.append(r.setting)
        return out

    def models(self):
        out = []
        for r in self.records:
            if r.model not in out:
                out.append(r.model)
        return out

    def aggregate(self):
        rows = []
        for s in self.settings():
            for m in self.models():
                recs = [r for r in self.records if r.setting == s and r.model == m]
                kept = [r for r in recs if not r.excluded]
                c = _mean_std([r.colloc_mse for r in kept])
                t = _mean_std([r.test_mse for r in kept])
                i = _mean_std([r.iae for r in kept])
                rows.append(AggregateRow(s, m, len(kept), len(recs) - len(kept), *c, *t, *i))
        return rows

    def mean(self, model: str, metric: str = "test", setting: str | None = None) -> float:
        for row in self.aggregate():
            if row.model == model and (setting is None or row.setting == setting):
                return getattr(row, f"{metric}_mean")
        raise KeyError((model, setting))

    def reduction(self, metric: str = "test", setting: str | None = None, model: str = "pi-adaptive",
                  base: str = "esn") -> float:
        """Relative reduction ``1 - mean(model) / mean(base)`` of an aggregate metric."""
        return 1.0 - self.mean(model, metric, setting) / self.mean(base, metric, setting)

    def write_csv(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{self.name}_runs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RunRecord.COLUMNS)
            for r in self.records:
                w.writerow([_fmt(getattr(r, c)) for c in RunRecord.COLUMNS])
        with open(out / f"{self.name}_summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(AggregateRow.COLUMNS)
            for row in self.aggregate():
                w.writerow([_fmt(getattr(row, c)) for c in AggregateRow.COLUMNS])
        for name, art in self.artifacts.items():
            art.write_csv(out / f"{name}.csv")


# ---------------------------------------------------------------------------
# section -> runtime conversions
# ---------------------------------------------------------------------------


def build_dataset(data: DataSection, seed: int) -> Dataset:
    sys = make_system(data.system.name, **data.system.params)
    sig = SignalSpec(data.signal.kind, tuple(data.signal.low), tuple(data.signal.high), data.signal.hold_min,
                     data.signal.hold_max, seed)
    sp = data.split
    split = SplitSpec(sp.n_te, sp.n_ve, sp.n_f, sp.n_test)
    return make_dataset(sys, sig, split, data.dt, tuple(data.y0), scale_outputs=data.scale_outputs,
                        scale_inputs=data.scale_inputs)


def reservoir_config(sec: ReservoirSection, n_u: int, n_y: int, seed: int) -> ReservoirConfig:
    return ReservoirConfig(sec.n_x, n_u, n_y, alpha=sec.alpha, rho_star=sec.rho, delta_in=sec.delta_in,
                           delta_fb=sec.delta_fb, delta_b=sec.delta_b, seed=seed)


def train_config(sec: TrainingSection, model: str, gamma: float | None = None) -> PiTrainConfig:
    return PiTrainConfig(m_outer=sec.m_outer, k_inner=sec.k_inner, mode=MODEL_MODES[model],
                         lambda_data=sec.lambda_data, lambda_phy=sec.lambda_phy,
                         gamma=sec.gamma if gamma is None else gamma, washout=sec.washout,
                         optimizer=sec.optimizer, lr=sec.lr, memory=sec.memory)


def grid_spec(sec: GridSection) -> GridSpec:
    return GridSpec(tuple(sec.delta_in), tuple(sec.delta_fb), tuple(sec.gamma),
                    None if sec.alpha is None else tuple(sec.alpha), None if sec.rho is None else tuple(sec.rho))


def mpc_config(sec: MpcSection) -> MpcConfig:
    return MpcConfig(sec.n_y_horizon, sec.n_u_horizon, sec.q_weight, sec.r_weight, sec.b_filter,
                     tuple(sec.u_min), tuple(sec.u_max), tuple(sec.y_min), tuple(sec.y_max), tuple(sec.outputs),
                     sec.slack_penalty, sync=sec.sync)


def physics_system(data: DataSection, training: TrainingSection):
    params = dict(data.system.params)
    params.update(training.physics_params)
    return make_system(data.system.name, **params)


def mse_monitor(res, ds: Dataset):
    """Per-outer-iteration callback recording held-out errors outside the trainer."""
    def monitor(ro):
        ev = evaluate_mse(res, ro, ds, "both")
        return ev.collocation, ev.test
    return monitor


def fit_models(data: DataSection, reservoir: ReservoirSection, training: TrainingSection,
               search: GridSection | None, models, seed: int, data_seed: int, monitor: bool = False):
    """Dataset, reservoir and one trained readout per model variant.

    Returns ``(dataset, res, {model: TrainResult})``. Raises
    :class:`TrainingInstability` when a PI stage blows up.
    """
    ds = build_dataset(data, data_seed)
    sys = ds.sys
    template = reservoir_config(reservoir, sys.dim_u, sys.dim_y, seed)
    gamma = training.gamma
    if search is not None:
        found = grid_search(template, ds, grid_spec(search), washout=training.washout)
        template, gamma = found.config, found.gamma
    res = init_reservoir(template)
    view = ds.training_view()
    phys = physics_system(data, training)
    fits = {}
    base = None
    for m in models:
        mon = mse_monitor(res, ds) if monitor else None
        r = train_pi_esn(res, view, phys, train_config(training, m, gamma), monitor=mon, pretrained=base)
        base = r.pretrained
        fits[m] = r
    return ds, res, fits


# ---------------------------------------------------------------------------
# jobs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Job:
    kind: str
    setting: str
    seed: int
    data_seed: int
    data: DataSection
    reservoir: ReservoirSection
    training: TrainingSection
    search: GridSection | None
    models: tuple
    mpc: MpcSection | None = None


def _excluded(job: Job, reason: str):
    log.warning("run setting=%s seed=%d data_seed=%d excluded: %s", job.setting, job.seed, job.data_seed, reason)
    return [RunRecord(job.setting, job.seed, job.data_seed, m, excluded=True, reason=reason) for m in job.models], {}


def run_job(job: Job):
    """Returns ``(records, artifacts)`` for one run."""
    try:
        ds, res, fits = fit_models(job.data, job.reservoir, job.training, job.search, job.models, job.seed,
                                   job.data_seed)
    except TrainingInstability as exc:
        return _excluded(job, f"training instability: {exc}")
    except GridSearchError as exc:
        return _excluded(job, f"grid search failed: {exc}")
    except DivergenceError as exc:
        return _excluded(job, f"simulation diverged: {exc}")
    records, artifacts = [], {}
    for m in job.models:
        ev = evaluate_mse(res, fits[m].readout, ds, "both")
        if ev.unstable:
            return _excluded(job, f"{MODEL_LABELS[m]} free run diverged at row {ev.diverged_at}")
        rec = dict(colloc_mse=ev.collocation, test_mse=ev.test)
        if job.mpc is not None:
            try:
                cl = run_closed_loop(job.mpc, ds, res, fits[m].readout)
            except DivergenceError as exc:
                return _excluded(job, f"{MODEL_LABELS[m]} closed loop diverged: {exc}")
            rec.update(iae=cl.iae, kkt_max=float(np.nanmax(cl.kkt)) if np.any(np.isfinite(cl.kkt)) else math.nan)
            tag = f"_{job.setting}" if job.setting else ""
            artifacts[f"closed_loop{tag}_seed{job.seed}_{m}"] = cl
        records.append(RunRecord(job.setting, job.seed, job.data_seed, m, **rec))
    return records, artifacts


def run_closed_loop(sec: MpcSection, ds: Dataset, res, ro):
    """Closed-loop scenario of ``sec`` on the plant that generated ``ds``."""
    if ds.scaler is not None or ds.u_scaler is not None:
        raise ConfigError("closed-loop runs need models trained on unscaled signals")
    plant = ds.sys
    ref = step_reference(sec.references, sec.hold, sec.steps)
    dist = None
    if sec.disturbance is not None:
        dist = DisturbanceSpec(sec.disturbance.step, tuple(sec.disturbance.input_offset),
                               tuple(sec.disturbance.state_offset))
    y0 = sec.y0 if sec.y0 is not None else ds.series.y[0]
    return closed_loop(plant, Controller(EsnModel(res, ro), mpc_config(sec)), ref, dist, sec.steps, ds.dt, y0,
                       sec.u0, n_warm=sec.n_warm)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def _setting_label(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _apply_sweep(kind: str, value, data: DataSection, reservoir: ReservoirSection, training: TrainingSection):
    if kind == "reservoir_sweep":
        reservoir = reservoir.model_copy(update={"n_x": int(value)})
    elif kind == "datasize_sweep":
        n_t = int(value)
        n_te = n_t - data.split.n_ve
        if n_te < 2:
            raise ConfigError(f"labelled length {n_t} leaves fewer than two training rows")
        data = data.model_copy(update={"split": data.split.model_copy(update={"n_te": n_te})})
    elif kind == "robustness":
        params = dict(training.physics_params)
        params["mu"] = float(value)
        training = training.model_copy(update={"physics_params": params})
    return data, reservoir, training


SWEPT = ("reservoir_sweep", "datasize_sweep", "robustness")


def _seed_pairs(exp: ExperimentSection):
    """(reservoir seed, data seed) for every run of one setting."""
    if exp.data_seeds is None:
        return [(s, s) for s in exp.seeds]
    if exp.pairing == "product":
        return [(s, d) for d in exp.data_seeds for s in exp.seeds]
    if len(exp.data_seeds) == 1:
        return [(s, exp.data_seeds[0]) for s in exp.seeds]
    if len(exp.data_seeds) != len(exp.seeds):
        raise ConfigError("zip pairing needs one data seed or one per reservoir seed")
    return list(zip(exp.seeds, exp.data_seeds))


def plan_jobs(cfg: RunConfig) -> list[Job]:
    require(cfg, "data", "reservoir", "experiment")
    exp: ExperimentSection = cfg.experiment
    if exp.kind == "mpc":
        require(cfg, "mpc")
    if exp.kind in SWEPT and not exp.sweep:
        raise ConfigError(f"experiment kind {exp.kind!r} needs a non-empty sweep list")
    pairs = _seed_pairs(exp)
    values = exp.sweep if exp.kind in SWEPT else [None]
    jobs = []
    for v in values:
        data, reservoir, training = _apply_sweep(exp.kind, v, cfg.data, cfg.reservoir, cfg.training)
        for seed, ds_seed in pairs:
            jobs.append(Job(exp.kind, "" if v is None else _setting_label(v), seed, ds_seed, data, reservoir,
                            training, cfg.search, tuple(exp.models), cfg.mpc if exp.kind == "mpc" else None))
    return jobs


def run_experiment(cfg: RunConfig, name: str | None = None) -> ExperimentResult:
    """Execute every planned run; results are ordered as planned whatever the worker count."""
    jobs = plan_jobs(cfg)
    result = ExperimentResult(name or cfg.experiment.kind, scheduled=len(jobs))
    workers = cfg.experiment.workers or os.cpu_count() or 1
    workers = min(workers, max(len(jobs), 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run_job, jobs))
    else:
        outputs = [run_job(j) for j in jobs]
    for recs, arts in outputs:
        result.records.extend(recs)
        result.artifacts.update(arts)
    assert result.n_aggregated + result.n_excluded == result.scheduled
    return result


def _checked(kind: str, cfg: RunConfig) -> RunConfig:
    require(cfg, "experiment")
    if cfg.experiment.kind != kind:
        raise ConfigError(f"expected an experiment of kind {kind!r}, got {cfg.experiment.kind!r}")
    return cfg


def run_comparison(cfg: RunConfig) -> ExperimentResult:
    """Architecture comparison (ESN / PI-ESN-i / PI-ESN-a) on one system."""
    return run_experiment(_checked("comparison", cfg))


def run_reservoir_sweep(cfg: RunConfig) -> ExperimentResult:
    return run_experiment(_checked("reservoir_sweep", cfg))


def run_datasize_sweep(cfg: RunConfig) -> ExperimentResult:
    return run_experiment(_checked("datasize_sweep", cfg))


def run_robustness(cfg: RunConfig) -> ExperimentResult:
    """Physics loss built from a plant whose ``mu`` differs from the data plant."""
    return run_experiment(_checked("robustness", cfg))


def run_esp(cfg: RunConfig) -> ExperimentResult:
    return run_experiment(_checked("esp", cfg))


def run_mpc_comparison(cfg: RunConfig) -> ExperimentResult:
    """Closed-loop IAE for each model variant on the same plant scenario."""
    return run_experiment(_checked("mpc", cfg))


RUNNERS = {
    "comparison": run_comparison,
    "reservoir_sweep": run_reservoir_sweep,
    "datasize_sweep": run_datasize_sweep,
    "robustness": run_robustness,
    "esp": run_esp,
    "mpc": run_mpc_comparison,
}


def win_fraction(result: ExperimentResult, setting: str, metric: str = "test_mse", model: str = "pi-adaptive",
                 base: str = "esn") -> float:
    """Fraction of aggregated runs in which ``model`` has a strictly lower metric than ``base``."""
    by_run = {}
    for r in result.records:
        if r.setting == setting and not r.excluded:
            by_run.setdefault((r.seed, r.data_seed), {})[r.model] = getattr(r, metric)
    runs = [v for v in by_run.values() if model in v and base in v]
    if not runs:
        return math.nan
    return sum(v[model] < v[base] for v in runs) / len(runs)


def check_thresholds(result: ExperimentResult, thresholds) -> list[str]:
    """Human-readable failures of the configured acceptance thresholds (empty when all hold).

    Checks apply to every sweep setting; the comparison is PI-ESN-a against
    the plain ESN.
    """
    failures = []
    models = result.models()
    if result.n_aggregated == 0:
        return ["no run survived; nothing to compare"] if result.scheduled else []
    for s in result.settings():
        tag = f" at setting {s}" if s else ""
        for metric, bound in (("test", thresholds.min_test_reduction),
                              ("colloc", thresholds.min_collocation_reduction)):
            if bound is None or not {"esn", "pi-adaptive"} <= set(models):
                continue
            red = result.reduction(metric, s)
            if not red >= bound:
                failures.append(f"{metric} MSE reduction {red:.3f} < {bound}{tag}")
        if thresholds.min_win_fraction is not None and {"esn", "pi-adaptive"} <= set(models):
            frac = win_fraction(result, s)
            if not frac > thresholds.min_win_fraction:
                failures.append(f"PI-ESN-a wins {frac:.2f} of runs, need > {thresholds.min_win_fraction}{tag}")
        if thresholds.ordering:
            metric = "iae" if any(math.isfinite(r.iae) for r in result.records) else "test"
            vals = [result.mean(m, metric, s) for m in thresholds.ordering]
            if not all(a < b for a, b in zip(vals, vals[1:])):
                pairs = ", ".join(f"{m}={v:.4g}" for m, v in zip(thresholds.ordering, vals))
                failures.append(f"ordering {' < '.join(thresholds.ordering)} violated ({pairs}){tag}")
    return failures

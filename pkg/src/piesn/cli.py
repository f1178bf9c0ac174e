"""Command-line entry point (``piesn``).

Exit codes: 0 success, 2 invalid configuration, 3 an acceptance threshold
failed, 4 numerical instability.
"""
from __future__ import annotations

import json
import logging
import sys
from functools import wraps
from pathlib import Path

import click

from .config import RunConfig, load_config, require
from .errors import ConfigError, DivergenceError, SolverError, TrainingInstability

EXIT_OK, EXIT_CONFIG, EXIT_THRESHOLD, EXIT_UNSTABLE = 0, 2, 3, 4

MODE_TO_MODEL = {"esn-only": "esn", "pi-fixed": "pi-fixed", "pi-adaptive": "pi-adaptive"}

log = logging.getLogger("piesn")


def _guarded(fn):
    """Map package errors onto exit codes."""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (DivergenceError, TrainingInstability, SolverError) as exc:
            click.echo(f"numerical instability: {exc}", err=True)
            sys.exit(EXIT_UNSTABLE)
    return wrapper


def _load(path, seed, out) -> RunConfig:
    cfg = load_config(path)
    update = {}
    if seed is not None:
        update["seed"] = seed
    if out is not None:
        update["output_dir"] = str(out)
    return cfg.model_copy(update=update) if update else cfg


def _outdir(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(doc: dict) -> None:
    click.echo(json.dumps(doc, sort_keys=True))


_config_arg = click.argument("config", type=click.Path(exists=True, dir_okay=False))
_seed_opt = click.option("--seed", type=int, default=None, help="Override the config seed.")
_out_opt = click.option("-o", "--output-dir", "out", type=click.Path(file_okay=False), default=None,
                        help="Override the config output directory.")


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose):
    """Physics-informed echo state networks: data, training, evaluation and MPC."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_config_arg
@_seed_opt
@_out_opt
@_guarded
def simulate(config, seed, out):
    """Simulate the configured plant under its excitation signal and write the series."""
    from .harness.experiments import build_dataset

    cfg = _load(config, seed, out)
    require(cfg, "data")
    ds = build_dataset(cfg.data, cfg.seed)
    path = _outdir(cfg) / "series.csv"
    ds.series.write_csv(path)
    (_outdir(cfg) / "series_meta.json").write_text(json.dumps(ds.meta(), indent=1, sort_keys=True))
    _emit({"rows": len(ds.series), "path": str(path)})


def _train(cfg: RunConfig, mode: str, monitor: bool, init=None):
    from .harness.experiments import build_dataset, fit_models, mse_monitor, physics_system, train_config
    from .reservoir import load_model
    from .training import train_pi_esn

    model = MODE_TO_MODEL[mode]
    if init is None:
        require(cfg, "data", "reservoir")
        ds, res, fits = fit_models(cfg.data, cfg.reservoir, cfg.training, cfg.search, [model], cfg.seed, cfg.seed,
                                   monitor=monitor)
        return ds, res, fits[model], model
    # continue from a saved reservoir + readout instead of drawing and pretraining anew
    require(cfg, "data")
    res, ro, _ = load_model(init)
    if ro is None:
        raise ConfigError(f"{init}: model has no readout")
    ds = build_dataset(cfg.data, cfg.seed)
    fit = train_pi_esn(res, ds.training_view(), physics_system(cfg.data, cfg.training),
                       train_config(cfg.training, model), monitor=mse_monitor(res, ds) if monitor else None,
                       pretrained=ro)
    return ds, res, fit, model


@main.command()
@_config_arg
@click.option("--mode", type=click.Choice(list(MODE_TO_MODEL)), default=None, help="Override the config mode.")
@click.option("--init", "init", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Start from a saved model's reservoir and readout (skips search and pretraining).")
@_seed_opt
@_out_opt
@_guarded
def train(config, mode, init, seed, out):
    """Train one model; writes model.json and the per-iteration training report."""
    from .harness.metrics import evaluate_mse
    from .reservoir import save_model

    cfg = _load(config, seed, out)
    mode = mode or cfg.mode
    ds, res, fit, model = _train(cfg, mode, monitor=True, init=init)
    d = _outdir(cfg)
    save_model(d / "model.json", res, fit.readout, extra={"mode": mode, "seed": cfg.seed, "dataset": ds.meta(),
                                                         "s_d": fit.s.s_d, "s_f": fit.s.s_f})
    fit.report.write_csv(d / "train_report.csv")
    ev = evaluate_mse(res, fit.readout, ds, "both")
    if ev.unstable:
        raise DivergenceError(f"trained model's free run diverged at row {ev.diverged_at}", step=ev.diverged_at)
    _emit({"mode": mode, "colloc_mse": ev.collocation, "test_mse": ev.test, "model": str(d / "model.json")})


@main.command()
@_config_arg
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@_seed_opt
@_out_opt
@_guarded
def evaluate(config, model_path, seed, out):
    """Free-run MSE of a saved model on the configured dataset; writes metrics.json."""
    from .harness.experiments import build_dataset
    from .harness.metrics import evaluate_mse
    from .reservoir import load_model

    cfg = _load(config, seed, out)
    require(cfg, "data")
    res, ro, _ = load_model(model_path)
    if ro is None:
        raise ConfigError(f"{model_path}: model has no readout")
    ds = build_dataset(cfg.data, cfg.seed)
    ev = evaluate_mse(res, ro, ds, "both")
    doc = {"colloc_mse": ev.collocation, "test_mse": ev.test, "unstable": ev.unstable}
    (_outdir(cfg) / "metrics.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    if ev.unstable:
        raise DivergenceError(f"free run diverged at row {ev.diverged_at}", step=ev.diverged_at)
    _emit(doc)


@main.command()
@_config_arg
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Use a saved model instead of training one.")
@_seed_opt
@_out_opt
@_guarded
def mpc(config, model_path, seed, out):
    """Run the closed-loop scenario and write the trajectory."""
    from .harness.experiments import build_dataset, run_closed_loop
    from .reservoir import load_model

    cfg = _load(config, seed, out)
    require(cfg, "data", "mpc")
    if model_path is not None:
        res, ro, _ = load_model(model_path)
        ds = build_dataset(cfg.data, cfg.seed)
    else:
        ds, res, fit, _ = _train(cfg, cfg.mode, monitor=False)
        ro = fit.readout
    cl = run_closed_loop(cfg.mpc, ds, res, ro)
    path = _outdir(cfg) / "closed_loop.csv"
    cl.write_csv(path)
    _emit({"iae": cl.iae, "faults": cl.faults, "relaxed": cl.relaxed, "path": str(path)})


@main.command()
@_config_arg
@click.option("--workers", type=int, default=None, help="Override the worker count (0: one per CPU).")
@_out_opt
@_guarded
def suite(config, workers, out):
    """Run the configured experiment over all seeds and settings and check thresholds."""
    from .harness.experiments import RUNNERS, check_thresholds

    cfg = _load(config, None, out)
    require(cfg, "experiment")
    if workers is not None:
        if workers < 0:
            raise ConfigError("--workers must be >= 0")
        cfg = cfg.model_copy(update={"experiment": cfg.experiment.model_copy(update={"workers": workers})})
    result = RUNNERS[cfg.experiment.kind](cfg)
    d = _outdir(cfg)
    result.write_csv(d)
    for row in result.aggregate():
        _emit({k: getattr(row, k) for k in row.COLUMNS})
    failures = check_thresholds(result, cfg.thresholds)
    counts = {"scheduled": result.scheduled, "aggregated": result.n_aggregated, "excluded": result.n_excluded}
    report = dict(counts, failures=failures, passed=not failures)
    (d / f"{result.name}_report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    _emit(counts)
    for f in failures:
        click.echo(f"threshold failed: {f}", err=True)
    if failures:
        sys.exit(EXIT_THRESHOLD)


if __name__ == "__main__":  # pragma: no cover
    main()

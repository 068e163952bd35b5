"""Command-line surface: generate / identify / sweep / validate.

Exit codes (closed table):
    0  success
    2  config error (bad/unknown key, invalid value)
    3  I/O error (missing or unwritable file)
    4  schema error (file parses but violates the expected layout)
    5  singularity (rank-deficient estimation problem)
    6  sensitivity (Wiener-side monotonicity loss during identification)
    7  divergence (identified model simulation diverged)
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import evaluate, modelio, models, plantlab
from .config import ExperimentConfig, load_config
from .errors import (
    ConfigError,
    NumericalBreakdownError,
    ParseError,
    SchemaError,
    SensitivityError,
    SingularMatrixError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_SINGULARITY = 5
EXIT_SENSITIVITY = 6
EXIT_DIVERGENCE = 7


def _load(config_path) -> ExperimentConfig:
    if config_path is None:
        return ExperimentConfig().validate()
    return load_config(config_path)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Block-oriented nonlinear system identification toolkit."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file")
@click.option("--seed", type=int, default=None, help="override the noise seed")
@click.option("--out", "out_path", type=click.Path(), required=True, help="output dataset CSV")
def generate(config_path, seed, out_path):
    """Generate a dataset CSV from the configured plant and excitation."""
    try:
        cfg = _load(config_path)
        if seed is not None:
            cfg.noise_seed = seed
        plant = plantlab.make_reference_plant(cfg.plant_seed)
        exc = cfg.excitation
        u = plantlab.generate_excitation(exc.kind, exc.n_samples, exc.input_range, seed=exc.seed, dwell=exc.dwell)
        dataset = plantlab.run_experiment(plant, u, cfg.sigma, cfg.noise_seed)
        dataset.meta["config"] = json.dumps(cfg.to_dict(), sort_keys=True)
        plantlab.write_dataset(dataset, out_path)
    except ConfigError as err:
        _fail(EXIT_CONFIG, str(err))
    except OSError as err:
        _fail(EXIT_IO, str(err))
    click.echo(f"wrote {out_path}: N={len(dataset)} sigma={cfg.sigma} seed={cfg.noise_seed}")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None, help="unused for identification; accepted for symmetry")
@click.argument("dataset_path", type=click.Path())
@click.option("--out", "out_path", type=click.Path(), required=True, help="output model file (JSON)")
def identify(config_path, seed, dataset_path, out_path):
    """Identify the configured block model from a dataset CSV."""
    try:
        cfg = _load(config_path)
        dataset = plantlab.read_dataset(dataset_path)
        model = models.identify(dataset, cfg.identify)
        modelio.write_model(model, out_path, config=cfg.to_dict())
    except ConfigError as err:
        _fail(EXIT_CONFIG, str(err))
    except FileNotFoundError as err:
        _fail(EXIT_IO, str(err))
    except ParseError as err:
        _fail(EXIT_SCHEMA, str(err))
    except SchemaError as err:
        _fail(EXIT_SCHEMA, str(err))
    except SensitivityError as err:
        _fail(EXIT_SENSITIVITY, str(err))
    except (SingularMatrixError, NumericalBreakdownError) as err:
        _fail(EXIT_SINGULARITY, str(err))
    except OSError as err:
        _fail(EXIT_IO, str(err))
    if "non-convergence" in model.warnings:
        click.echo("warning: identification did not converge (best iterate kept)", err=True)
    click.echo(f"wrote {out_path}: mse={model.fit_mse} iterations={model.iterations}")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None, help="override the sweep seed")
@click.option("--out", "out_path", type=click.Path(), required=True, help="output report CSV (a .json twin is also written)")
def sweep(config_path, seed, out_path):
    """Run the noise-robustness sweep and write grid + structured reports."""
    try:
        cfg = _load(config_path)
        if seed is not None:
            cfg.sweep_seed = seed
        plant = plantlab.make_reference_plant(cfg.plant_seed)
        report = evaluate.robustness_sweep(
            plant,
            cfg.sigmas,
            cfg.families,
            cfg.identify,
            cfg.sweep_seed,
            n_samples=cfg.excitation.n_samples,
            dwell=cfg.excitation.dwell,
        )
        report.config = cfg.to_dict()
        evaluate.write_report(report, out_path, format="csv")
        json_path = str(out_path) + ".json" if not str(out_path).endswith(".csv") else str(out_path)[:-4] + ".json"
        evaluate.write_report(report, json_path, format="structured")
    except ConfigError as err:
        _fail(EXIT_CONFIG, str(err))
    except OSError as err:
        _fail(EXIT_IO, str(err))
    click.echo(evaluate.report_to_csv(report), nl=False)


@main.command()
@click.argument("model_path", type=click.Path())
@click.argument("dataset_path", type=click.Path())
@click.option("--residuals", "residuals_path", type=click.Path(), default=None,
              help="write a per-sample k,y,yhat,residual CSV for plotting")
def validate(model_path, dataset_path, residuals_path):
    """Simulate a saved model over a dataset and print the MSE."""
    try:
        model = modelio.read_model(model_path)
        dataset = plantlab.read_dataset(dataset_path)
        yhat = models.simulate(model, dataset.u)
        if not np.all(np.isfinite(yhat)):
            _fail(EXIT_DIVERGENCE, "model simulation diverged on this dataset")
        value = evaluate.mse(dataset.y, yhat)
        if residuals_path is not None:
            lines = ["k,y,yhat,residual"]
            for k in range(len(dataset)):
                r = dataset.y[k] - yhat[k]
                lines.append(f"{k},{dataset.y[k]!r},{yhat[k]!r},{r!r}")
            plantlab._atomic_write(residuals_path, "\n".join(lines) + "\n")
    except FileNotFoundError as err:
        _fail(EXIT_IO, str(err))
    except ParseError as err:
        _fail(EXIT_SCHEMA, str(err))
    except SchemaError as err:
        _fail(EXIT_SCHEMA, str(err))
    except OSError as err:
        _fail(EXIT_IO, str(err))
    click.echo(f"mse={value!r} N={len(dataset)}")


if __name__ == "__main__":
    main()

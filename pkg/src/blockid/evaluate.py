"""Validation metrics and the noise-robustness benchmark sweep.

The sweep runs each model family against datasets from the reference
plant at a grid of disturbance amplitudes, validates the identified
models against the noiseless plant response on held-out excitation, and
reports MSE, stability flags, and a per-family dispersion statistic
(population standard deviation of MSE over the low-noise subrange).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .config import IdentConfig
from .errors import (
    NumericalBreakdownError,
    SensitivityError,
    SingularMatrixError,
)
from .models import identify_hammerstein, identify_hw, identify_wiener, simulate
from .plantlab import ReferencePlant, _atomic_write, generate_excitation, run_experiment

REPORT_SCHEMA = 1

# family tag -> (identifier, linear kind)
FAMILIES = {
    "hammerstein": (identify_hammerstein, "laguerre"),
    "wiener": (identify_wiener, "laguerre"),
    "hw_laguerre": (identify_hw, "laguerre"),
    "hw_arx": (identify_hw, "arx"),
}

DISPERSION_SIGMA_MAX = 1.0

OVERFLOW_LIMIT = 1e6
RATIO_LIMIT = 100.0


def mse(y, yhat) -> float:
    """Mean square error (1/N) sum (y_i - yhat_i)^2."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1 or len(y) == 0:
        raise ValueError("inputs must be equal-length nonempty vectors")
    d = y - yhat
    return float(np.mean(d * d))


def dispersion(mses) -> float:
    """Population standard deviation (divide by N) of a list of MSE values."""
    vals = np.asarray(list(mses), dtype=float)
    if len(vals) < 2:
        raise ValueError("need at least 2 values")
    return float(np.std(vals))


def detect_divergence(error_trace, baseline: float):
    """Classify an error trace as stable or diverged.

    Unstable if any entry is non-finite, any magnitude exceeds 1e6, or the
    terminal-window MSE exceeds 100x max(baseline, 1e-12).  Returns
    (stable, reason) with reason in {None, 'non_finite', 'overflow', 'ratio'}.
    """
    if not baseline > 0:
        raise ValueError(f"baseline must be positive, got {baseline}")
    e = np.asarray(error_trace, dtype=float)
    if not np.all(np.isfinite(e)):
        return False, "non_finite"
    if np.any(np.abs(e) > OVERFLOW_LIMIT):
        return False, "overflow"
    window = e[-max(1, len(e) // 10):]
    if float(np.mean(window * window)) > RATIO_LIMIT * max(baseline, 1e-12):
        return False, "ratio"
    return True, None


@dataclass
class SweepCell:
    family: str
    sigma: float
    mse: float | None = None  # vs noiseless plant output on held-out data
    mse_noisy: float | None = None  # paper-style: vs the noisy identification set
    stable: bool = True
    reason: str | None = None  # sensitivity | divergence | singularity
    iterations: int | None = None
    warnings: list = field(default_factory=list)
    wall_time: float | None = None


@dataclass
class SweepReport:
    sigmas: list
    families: list
    cells: dict  # (family, sigma) -> SweepCell
    dispersion: dict  # family -> population std of MSE over the low-sigma subrange
    seed: int
    config: dict = field(default_factory=dict)


def _cell_seeds(seed: int, sigma: float):
    # independent, order-free streams per (seed, sigma); the excitation
    # seeds are sigma-independent so every family and sigma sees the same
    # input trajectories
    sig_key = int(round(sigma * 1_000_000))
    return {
        "ident_u": seed * 7919 + 1,
        "ident_noise": (seed * 7919 + 3) * 104729 + sig_key,
        "valid_u": seed * 7919 + 5,
    }


def run_cell(plant: ReferencePlant, family: str, sigma: float, cfg: IdentConfig, seed: int,
             n_samples: int = 2000, dwell: int = 50) -> SweepCell:
    """One (family, sigma) benchmark cell, independent of any other cell."""
    identifier, linear_kind = FAMILIES[family]
    seeds = _cell_seeds(seed, sigma)
    u_ident = generate_excitation("prbs_steps", n_samples, plant.input_range, seed=seeds["ident_u"], dwell=dwell)
    ident = run_experiment(plant, u_ident, sigma, seeds["ident_noise"])
    u_valid = generate_excitation("prbs_steps", n_samples, plant.input_range, seed=seeds["valid_u"], dwell=dwell)
    valid = run_experiment(plant, u_valid, 0.0, 0)

    import dataclasses as _dc

    cell_cfg = _dc.replace(cfg, linear_kind=linear_kind)
    cell = SweepCell(family=family, sigma=sigma)
    t0 = time.perf_counter()
    try:
        model = identifier(ident, cell_cfg)
    except SensitivityError:
        cell.stable = False
        cell.reason = "sensitivity"
        return cell
    except (SingularMatrixError, NumericalBreakdownError):
        cell.stable = False
        cell.reason = "singularity"
        return cell
    finally:
        cell.wall_time = time.perf_counter() - t0

    yhat_valid = simulate(model, u_valid)
    residual = valid.y - yhat_valid
    baseline = max(sigma * sigma, 0.01 * float(np.var(valid.y)), 1e-12)
    stable, reason = detect_divergence(residual, baseline)
    cell.iterations = model.iterations
    cell.warnings = list(model.warnings)
    if not stable:
        cell.stable = False
        cell.reason = "divergence"
        cell.mse = None
    else:
        cell.mse = mse(valid.y, yhat_valid)
    yhat_ident = simulate(model, u_ident)
    if np.all(np.isfinite(yhat_ident)):
        cell.mse_noisy = mse(ident.y, yhat_ident)
    return cell


def robustness_sweep(plant: ReferencePlant, sigmas, families, cfg: IdentConfig, seed: int,
                     n_samples: int = 2000, dwell: int = 50) -> SweepReport:
    """Grid of (family, sigma) benchmark cells plus dispersion statistics.

    Per-cell failures are recorded in the cell, never aborting the sweep;
    the result is a pure function of (plant, sigmas, families, cfg, seed).
    """
    sigmas = list(sigmas)
    families = list(families)
    if not sigmas or not families:
        raise ValueError("sigmas and families must be non-empty")
    for fam in families:
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}")
    cells = {}
    for family in families:
        for sigma in sigmas:
            cells[(family, sigma)] = run_cell(
                plant, family, sigma, cfg, seed, n_samples=n_samples, dwell=dwell
            )
    disp = {}
    for family in families:
        vals = [
            cells[(family, s)].mse
            for s in sigmas
            if s <= DISPERSION_SIGMA_MAX and cells[(family, s)].mse is not None
        ]
        disp[family] = dispersion(vals) if len(vals) >= 2 else None
    return SweepReport(
        sigmas=sigmas, families=families, cells=cells, dispersion=disp, seed=seed
    )


def _render_cell(cell: SweepCell) -> str:
    if not cell.stable:
        return f"UNSTABLE({cell.reason})"
    return repr(cell.mse)


def report_to_csv(report: SweepReport) -> str:
    """Table-shaped grid: rows = sigma, columns = families, dispersion footer."""
    lines = [f"# schema={REPORT_SCHEMA}", f"# seed={report.seed}"]
    lines.append(",".join(["sigma"] + report.families))
    for sigma in report.sigmas:
        row = [repr(float(sigma))]
        for fam in report.families:
            row.append(_render_cell(report.cells[(fam, sigma)]))
        lines.append(",".join(row))
    disp = ",".join(
        f"{fam}={report.dispersion[fam]!r}" if report.dispersion[fam] is not None else f"{fam}=NA"
        for fam in report.families
    )
    lines.append(f"# dispersion(sigma<={DISPERSION_SIGMA_MAX}): {disp}")
    return "\n".join(lines) + "\n"


def report_to_json(report: SweepReport) -> str:
    """Full per-cell record (wall time excluded so reruns are byte-identical)."""
    doc = {
        "schema": REPORT_SCHEMA,
        "seed": report.seed,
        "sigmas": [float(s) for s in report.sigmas],
        "families": report.families,
        "config": report.config,
        "dispersion": report.dispersion,
        "cells": [
            {
                "family": c.family,
                "sigma": float(c.sigma),
                "mse": c.mse,
                "mse_noisy": c.mse_noisy,
                "stable": c.stable,
                "reason": c.reason,
                "iterations": c.iterations,
                "warnings": c.warnings,
            }
            for c in (report.cells[(f, s)] for f in report.families for s in report.sigmas)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_report(report: SweepReport, path, format: str = "csv") -> None:
    if format == "csv":
        _atomic_write(path, report_to_csv(report))
    elif format == "structured":
        _atomic_write(path, report_to_json(report))
    else:
        raise ValueError(f"unknown report format {format!r}")

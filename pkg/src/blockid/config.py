"""Dataclass configuration for experiments, with strict YAML loading.

Every knob has a documented default; unknown keys in a config file are a
hard error so a typo cannot silently change an experiment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

DEFAULT_SIGMAS = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 5.0]
DEFAULT_FAMILIES = ["hammerstein", "wiener", "hw_laguerre", "hw_arx"]
DEFAULT_PSI_GRID = [round(0.05 * i, 2) for i in range(20)]  # 0.0 .. 0.95


@dataclass
class IdentConfig:
    """Settings for a single block-model identification run."""

    structure: str = "hammerstein_wiener"  # hammerstein | wiener | hammerstein_wiener | linear
    linear_kind: str = "laguerre"  # laguerre | arx
    p: int = 4
    psi: float | None = None  # fixed pole; None -> grid search
    psi_grid: list = field(default_factory=lambda: list(DEFAULT_PSI_GRID))
    na: int = 2
    nb: int = 2
    delay: int = 1
    input_nodes: int = 8
    output_nodes: int = 8
    input_breakpoints: list | None = None  # explicit grid overrides node count
    output_breakpoints: list | None = None
    rls_lambda: float = 0.999
    rls_delta: float = 1e4
    tol: float = 1e-6
    max_iters: int = 50
    freeze_output_nl: bool = False
    grid_margin: float = 0.01  # fractional widening of data-derived grids

    def validate(self):
        if self.structure not in ("hammerstein", "wiener", "hammerstein_wiener", "linear"):
            raise ConfigError(f"unknown structure {self.structure!r}")
        if self.linear_kind not in ("laguerre", "arx"):
            raise ConfigError(f"unknown linear_kind {self.linear_kind!r}")
        if self.p < 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if self.psi is not None and not (0.0 <= self.psi < 1.0):
            raise ConfigError(f"psi must be in [0, 1), got {self.psi}")
        if any(not (0.0 <= g < 1.0) for g in self.psi_grid):
            raise ConfigError("psi_grid entries must be in [0, 1)")
        if not (0.0 < self.rls_lambda <= 1.0):
            raise ConfigError(f"rls_lambda must be in (0, 1], got {self.rls_lambda}")
        if self.rls_delta <= 0:
            raise ConfigError(f"rls_delta must be positive, got {self.rls_delta}")
        if self.input_nodes < 2 or self.output_nodes < 2:
            raise ConfigError("node counts must be >= 2")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        return self


@dataclass
class ExcitationConfig:
    kind: str = "prbs_steps"  # prbs_steps | staircase | impulse | step
    n_samples: int = 2000
    dwell: int = 50
    input_range: list = field(default_factory=lambda: [5.0, 65.0])
    seed: int = 1

    def validate(self):
        if self.kind not in ("prbs_steps", "staircase", "impulse", "step"):
            raise ConfigError(f"unknown excitation kind {self.kind!r}")
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.dwell < 1:
            raise ConfigError(f"dwell must be >= 1, got {self.dwell}")
        lo, hi = self.input_range
        if not hi > lo:
            raise ConfigError(f"input_range must be non-degenerate, got {self.input_range}")
        return self


@dataclass
class ExperimentConfig:
    """Top-level config: plant + excitation + noise + identification + sweep."""

    plant_seed: int = 0
    sigma: float = 0.1
    noise_seed: int = 123
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    identify: IdentConfig = field(default_factory=IdentConfig)
    sigmas: list = field(default_factory=lambda: list(DEFAULT_SIGMAS))
    families: list = field(default_factory=lambda: list(DEFAULT_FAMILIES))
    sweep_seed: int = 7

    def validate(self):
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sigmas must all be >= 0")
        for fam in self.families:
            if fam not in DEFAULT_FAMILIES:
                raise ConfigError(f"unknown family {fam!r}")
        self.excitation.validate()
        self.identify.validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {path}{key!r}")
        ftype = fields[key].type
        if key == "excitation":
            value = _build(ExcitationConfig, value or {}, f"{path}excitation.")
        elif key == "identify":
            value = _build(IdentConfig, value or {}, f"{path}identify.")
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    """Load a YAML config, merging with defaults; unknown keys are fatal."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise ConfigError(f"cannot parse config {path}: {err}") from err
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    return _build(ExperimentConfig, data, "").validate()

"""Block-oriented nonlinear system identification with Laguerre basis networks."""

from .config import ExperimentConfig, IdentConfig
from .laguerre import LaguerreNetwork, build_network, impulse_response_matrix, simulate_linear
from .models import BlockModel, LinearBlock, identify, normalize_model, simulate
from .nonlin import PwlFunction, is_monotonic, pwl_eval, pwl_fit, pwl_inverse
from .plantlab import Dataset, ReferencePlant, generate_excitation, make_reference_plant, run_experiment

__all__ = [
    "BlockModel",
    "Dataset",
    "ExperimentConfig",
    "IdentConfig",
    "LaguerreNetwork",
    "LinearBlock",
    "PwlFunction",
    "ReferencePlant",
    "build_network",
    "generate_excitation",
    "identify",
    "impulse_response_matrix",
    "is_monotonic",
    "make_reference_plant",
    "normalize_model",
    "pwl_eval",
    "pwl_fit",
    "pwl_inverse",
    "run_experiment",
    "simulate",
    "simulate_linear",
]

__version__ = "0.1.0"

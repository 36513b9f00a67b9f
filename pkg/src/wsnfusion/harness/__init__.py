"""Monte Carlo sweeps, experiment configs, CSV output and the CLI."""

from .config import ExperimentSpec, load_config, parse_config, preset, serialize_config
from .engine import PePoint, run_sweep, run_trial, write_csv

__all__ = [
    "ExperimentSpec",
    "PePoint",
    "load_config",
    "parse_config",
    "preset",
    "run_sweep",
    "run_trial",
    "serialize_config",
    "write_csv",
]

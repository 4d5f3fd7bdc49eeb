"""Seeded Monte Carlo sweeps and the command-line entry point."""

from .config import PRESETS, ExperimentConfig, config_from_dict, load_config, preset
from .sweeps import (
    CSV_COLUMNS,
    ResultTable,
    quantize_uniform,
    run_adc_ablation,
    run_ase_sweep,
    run_ber_sweep,
    run_nmse_sweep,
    trial_seed,
)

__all__ = [
    "CSV_COLUMNS",
    "ExperimentConfig",
    "PRESETS",
    "preset",
    "load_config",
    "config_from_dict",
    "ResultTable",
    "quantize_uniform",
    "trial_seed",
    "run_nmse_sweep",
    "run_ase_sweep",
    "run_ber_sweep",
    "run_adc_ablation",
]

"""Uplink user association and bandwidth allocation in two-tier HetNets."""
from .config import SimConfig, parse_config
from .simkit import KpiReport, run_drop, run_monte_carlo, sensitivity_sweep

__all__ = ["SimConfig", "parse_config", "KpiReport", "run_drop", "run_monte_carlo", "sensitivity_sweep"]
__version__ = "0.1.0"

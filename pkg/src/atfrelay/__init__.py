"""Accumulate-then-forward relaying with co-channel interference energy harvesting.

Analytic battery Markov chain, a Monte Carlo protocol simulator and a CLI.
"""

from .channel import (
    LinkBudget,
    SystemConfig,
    Topology,
    config_from_topology,
    dbm_to_watts,
    watts_to_dbm,
)
from .distributions import GammaParams, HypoExpParams, RngStream, first_hop_outage_prob
from .markov import (
    AnalyticReport,
    BatteryModel,
    TransitionMatrixError,
    analytic_pipeline,
    build_transition_matrix,
    model_inputs,
    outage_probability,
    stationary_distribution,
    throughput,
)
from .simulator import SimConfig, SimReport, simulate_atf, simulate_baseline_no_accumulation

__version__ = "0.1.0"

__all__ = [
    "AnalyticReport", "BatteryModel", "GammaParams", "HypoExpParams", "LinkBudget", "RngStream",
    "SimConfig", "SimReport", "SystemConfig", "Topology", "TransitionMatrixError",
    "analytic_pipeline", "build_transition_matrix", "config_from_topology", "dbm_to_watts",
    "first_hop_outage_prob", "model_inputs", "outage_probability", "simulate_atf",
    "simulate_baseline_no_accumulation", "stationary_distribution", "throughput", "watts_to_dbm",
]

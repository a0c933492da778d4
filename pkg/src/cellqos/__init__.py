"""Quality of service in large cellular networks: per-cell processor-sharing queues
coupled through interference, typical-cell Monte Carlo and the analytic mean cell."""

from .estimators import (
    Scenario,
    mean_cell_full,
    origin_link_samples,
    shadowing_equivalence_check,
    solve_mean_cell_equation,
    typical_cell_estimate,
    typical_cell_sweep,
)
from .geometry import BsPattern, Window, hexagonal_lattice, l_envelope_test, ripley_l, sample_poisson
from .propagation import Grid, PathLossParams, ShadowingParams, build_propagation_map
from .qos import TrafficModel, cell_metrics, solve_cell_load_equations
from .queueing import ps_queue_oracle
from .radio import LinkBudget, RateFunction, partition_cells, peak_rate, sinr_field

__version__ = "0.1.0"

__all__ = [
    "BsPattern",
    "Grid",
    "LinkBudget",
    "PathLossParams",
    "RateFunction",
    "Scenario",
    "ShadowingParams",
    "TrafficModel",
    "Window",
    "build_propagation_map",
    "cell_metrics",
    "hexagonal_lattice",
    "l_envelope_test",
    "mean_cell_full",
    "origin_link_samples",
    "partition_cells",
    "peak_rate",
    "ps_queue_oracle",
    "ripley_l",
    "sample_poisson",
    "shadowing_equivalence_check",
    "sinr_field",
    "solve_cell_load_equations",
    "solve_mean_cell_equation",
    "typical_cell_estimate",
    "typical_cell_sweep",
]

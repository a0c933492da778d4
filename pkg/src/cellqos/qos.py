"""Per-cell processor-sharing metrics and the coupled cell-load equations."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .propagation import PropagationMap
from .radio import CellPartition, LinkBudget, LinkDecomposition, RateFunction, link_decomposition, rate_table

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrafficModel:
    """Space-time Poisson arrivals: ``arrival_rate`` users/s/km², mean volume in bits."""

    arrival_rate: float
    mean_volume_bits: float = 1e6

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise ValueError("arrival rate must be non-negative")
        if not self.mean_volume_bits > 0:
            raise ValueError("mean volume must be positive")

    @property
    def traffic_density(self) -> float:
        """Traffic demand per unit surface, bit/s/km²."""
        return self.arrival_rate * self.mean_volume_bits

    @classmethod
    def from_density(cls, rho: float, mean_volume_bits: float = 1e6) -> "TrafficModel":
        return cls(rho / mean_volume_bits, mean_volume_bits)

    @classmethod
    def per_cell(cls, rho_per_cell: float, intensity: float, mean_volume_bits: float = 1e6) -> "TrafficModel":
        return cls.from_density(rho_per_cell * intensity, mean_volume_bits)


@dataclass
class CellMetrics:
    traffic_demand: np.ndarray  # rho(X), bit/s
    critical_traffic: np.ndarray  # rho_c(X), bit/s
    load: np.ndarray
    throughput: np.ndarray  # r(X), bit/s
    mean_users: np.ndarray  # inf for unstable cells
    busy_prob: np.ndarray
    area: np.ndarray

    @property
    def stable(self) -> np.ndarray:
        return self.load < 1

    def to_csv(self, path, points) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write("# units: -, km, km, km2, bit/s, bit/s, -, bit/s, users, -\n")
            w = csv.writer(fh)
            w.writerow(
                ["station_id", "x_km", "y_km", "area_km2", "rho_bps", "rho_c_bps", "theta", "r_bps", "n_users", "p_busy"]
            )
            for i in range(len(self.load)):
                n = self.mean_users[i]
                w.writerow(
                    [
                        i,
                        f"{points[i, 0]:.6f}",
                        f"{points[i, 1]:.6f}",
                        f"{self.area[i]:.6f}",
                        f"{self.traffic_demand[i]:.6f}",
                        f"{self.critical_traffic[i]:.6f}",
                        f"{self.load[i]:.9g}",
                        f"{self.throughput[i]:.6f}",
                        "inf" if np.isinf(n) else f"{n:.9g}",
                        f"{self.busy_prob[i]:.9g}",
                    ]
                )


@dataclass
class LoadSolution:
    theta: np.ndarray
    theta_lower: np.ndarray
    theta_upper: np.ndarray
    iterations: int
    max_gap: float
    converged: bool
    model: str
    rate_integral: np.ndarray  # integral of 1/R over each cell at theta, km² s/bit
    iterations_lower: int = 0
    iterations_upper: int = 0
    residual: float = 0.0
    tol: float = 1e-4

    @property
    def unique(self) -> bool:
        """Minimal and maximal solutions coincide within tolerance."""
        return self.max_gap < self.tol


def _per_cell_integral(links: LinkDecomposition, n: int, pixel_area: float, table, weights=None) -> np.ndarray:
    sinr, _ = links.sinr(weights)
    inv = table.inverse(sinr)
    return pixel_area * np.bincount(links.serving_station, weights=inv, minlength=n)


def cell_loads_full(
    partition: CellPartition,
    sinr,
    rf: RateFunction,
    traffic: TrafficModel,
) -> np.ndarray:
    """Cell loads rho * integral over V(X) of 1/R(SINR) under full interference.

    ``sinr`` is the per-pixel SINR (a SinrField or an array). Cells containing a
    zero-rate pixel get an infinite load.
    """
    s = getattr(sinr, "sinr", sinr)
    inv = rate_table(rf).inverse(s)
    pix = partition.map.grid.pixel_area
    integral = pix * np.bincount(partition.serving_station, weights=inv, minlength=partition.n_stations)
    if np.isinf(integral).any():
        log.warning("%d cells contain zero-rate pixels", int(np.isinf(integral).sum()))
    rho = traffic.traffic_density
    if rho == 0:
        return np.zeros(partition.n_stations)
    return rho * integral


def _max_change(a: np.ndarray, b: np.ndarray) -> float:
    both_inf = np.isinf(a) & np.isinf(b)
    with np.errstate(invalid="ignore"):
        d = np.where(both_inf, 0.0, np.abs(a - b))
    return float(np.max(d, initial=0.0))


def solve_cell_load_equations(
    pmap: PropagationMap,
    partition: CellPartition,
    budget: LinkBudget,
    rf: RateFunction,
    traffic: TrafficModel,
    tol: float = 1e-4,
    max_iter: int = 200,
    model: str = "weighted",
    links: LinkDecomposition | None = None,
    lower_start: np.ndarray | None = None,
) -> LoadSolution:
    """Solve the cell-load equations by monotone fixed-point iteration.

    Interferer Z is weighted by min(theta_Z, 1) (1 - eps) + eps. The ascending run
    starts at zero load (or at ``lower_start``, which must lie below the minimal
    solution, e.g. the minimal solution at a smaller traffic), the descending run at
    the full-interference loads; they converge to the minimal and maximal solutions.
    ``theta`` is the maximal one. ``model="full"`` returns the full-interference loads.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if model not in ("full", "weighted"):
        raise ValueError(f"unknown interference model {model!r}")
    links = links or link_decomposition(pmap, partition, budget)
    n = partition.n_stations
    table = rate_table(rf)
    pix = pmap.grid.pixel_area
    rho = traffic.traffic_density
    eps = budget.pilot_fraction

    full_integral = _per_cell_integral(links, n, pix, table)
    full = rho * full_integral if rho > 0 else np.zeros(n)
    if model == "full" or rho == 0:
        integral = full_integral
        if model == "weighted":
            # zero load: only the pilot power interferes
            integral = _per_cell_integral(links, n, pix, table, np.full(n, eps))
        return LoadSolution(full, full.copy(), full.copy(), 1, 0.0, True, model, integral, 1, 1, tol=tol)

    def step(theta):
        w = np.minimum(theta, 1.0) * (1 - eps) + eps
        integral = _per_cell_integral(links, n, pix, table, w)
        return rho * integral, integral

    def iterate(theta):
        integral = None
        for k in range(1, max_iter + 1):
            new, integral = step(theta)
            change = _max_change(new, theta)
            theta = new
            if change < tol:
                return theta, integral, k, True
        return theta, integral, max_iter, False

    start = np.zeros(n) if lower_start is None else np.asarray(lower_start, dtype=float)
    lo, _, it_lo, ok_lo = iterate(start)
    hi, integral_hi, it_hi, ok_hi = iterate(full)
    nxt, _ = step(hi)
    residual = _max_change(nxt, hi)
    gap = _max_change(hi, lo)
    converged = ok_lo and ok_hi
    if not converged:
        log.warning("cell-load iteration did not converge within %d iterations (gap %.3g)", max_iter, gap)
    return LoadSolution(
        hi, lo, hi, max(it_lo, it_hi), gap, converged, model, integral_hi, it_lo, it_hi, residual, tol
    )


def cell_metrics(theta, partition: CellPartition, traffic: TrafficModel, critical_traffic=None) -> CellMetrics:
    """Processor-sharing metrics of every cell from its load.

    ``critical_traffic`` (area / integral of 1/R) is needed only when the traffic is
    zero; otherwise it follows from rho(X) / theta(X).
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(np.isnan(theta)):
        raise ValueError("loads must be non-negative")
    area = np.asarray(partition.cell_area, dtype=float)
    rho_x = traffic.traffic_density * area
    if critical_traffic is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            rho_c = np.where(theta > 0, rho_x / theta, np.inf)
    else:
        rho_c = np.asarray(critical_traffic, dtype=float)
    stable = theta < 1
    with np.errstate(divide="ignore", invalid="ignore"):
        n_users = np.where(stable, theta / (1 - theta), np.inf)
        r = np.where(stable, np.maximum(rho_c - rho_x, 0.0), 0.0)
    return CellMetrics(rho_x, rho_c, theta, r, n_users, np.minimum(theta, 1.0), area)


def critical_traffic(partition: CellPartition, rate_integral) -> np.ndarray:
    """Harmonic mean of the peak rate over each cell: |V(X)| / integral of 1/R."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rate_integral > 0, partition.cell_area / rate_integral, np.inf)

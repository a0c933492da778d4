"""Network-level estimators: typical cell by Monte Carlo, the analytic mean cell,
and the shadowing/density equivalence check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .geometry import BsPattern, Window, hexagonal_lattice, sample_poisson
from .propagation import (
    Grid,
    PathLossParams,
    PropagationMap,
    ShadowingParams,
    build_propagation_map,
    lognormal_equivalence_moment,
)
from .qos import LoadSolution, TrafficModel, cell_metrics, solve_cell_load_equations
from .radio import (
    CellPartition,
    LinkBudget,
    LinkDecomposition,
    RateFunction,
    link_decomposition,
    partition_cells,
    rate_table,
)

log = logging.getLogger(__name__)

# mean station count simulated around the origin; a fixed radius would truncate
# distant shadowed stations that can still be the strongest at low density
ORIGIN_STATIONS = 400


@dataclass(frozen=True)
class Scenario:
    """Everything needed to simulate one network realization."""

    window: Window = field(default_factory=lambda: Window.disc(2.63))
    intensity: float = 4.62
    pattern: str = "poisson"
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    shadowing: ShadowingParams = field(default_factory=ShadowingParams)
    budget: LinkBudget = field(default_factory=LinkBudget)
    rate: RateFunction = field(default_factory=RateFunction)
    pixel_size: float = 0.02
    guard_margin: float = 0.0
    tol: float = 1e-4
    max_iter: int = 200

    def __post_init__(self):
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")
        if self.pattern not in ("poisson", "hexagonal"):
            raise ValueError(f"unknown pattern type {self.pattern!r}")
        if self.guard_margin < 0:
            raise ValueError("guard margin must be non-negative")


def realization_seeds(base_seed: int, index: int) -> tuple[int, int]:
    """Independent (pattern, shadowing) seeds for realization ``index``."""
    a, b = np.random.SeedSequence([int(base_seed), int(index)]).generate_state(2)
    return int(a), int(b)


@dataclass
class Realization:
    pattern: BsPattern
    grid: Grid
    map: PropagationMap
    partition: CellPartition
    links: LinkDecomposition
    inner: np.ndarray  # stations counted in the statistics
    inner_pixels: np.ndarray  # pixels served by counted stations

    @property
    def n_stations(self) -> int:
        return len(self.pattern)


def simulate_realization(scenario: Scenario, base_seed: int, index: int, grid: Grid | None = None) -> Realization:
    pseed, sseed = realization_seeds(base_seed, index)
    if scenario.pattern == "poisson":
        pattern = sample_poisson(scenario.intensity, scenario.window, pseed)
    else:
        pattern = hexagonal_lattice(scenario.intensity, scenario.window)
    if len(pattern) == 0:
        raise ValueError(f"realization {index}: no stations in the window")
    grid = grid or Grid(scenario.window, scenario.pixel_size)
    pmap = build_propagation_map(pattern, grid, scenario.pathloss, scenario.shadowing, sseed)
    part = partition_cells(pmap)
    links = link_decomposition(pmap, part, scenario.budget)
    inner = scenario.window.shrink(scenario.guard_margin).contains(pattern.points)
    # the loss matrix is not needed past this point
    pmap.loss = None
    pmap.shadowing = None
    return Realization(pattern, grid, pmap, part, links, inner, inner[part.serving_station])


@dataclass
class CellStats:
    """Station averages of one realization at one traffic value."""

    mean_load: float
    stable_fraction: float
    n0: float
    n_stations: int
    area_x_intensity: float
    converged: bool
    max_gap: float
    mean_rate_integral: float  # station average of the integral of 1/R over the cell


def realization_stats(real: Realization, sol: LoadSolution, traffic: TrafficModel, intensity: float) -> CellStats:
    m = cell_metrics(sol.theta, real.partition, traffic)
    sel = real.inner
    theta = m.load[sel]
    area = m.area[sel]
    stable = theta < 1
    n = int(sel.sum())
    pis = float(area[stable].sum() / area.sum()) if area.sum() > 0 else 0.0
    n0 = float(m.mean_users[sel][stable].sum() / n) if n else 0.0
    return CellStats(
        float(theta.mean()) if n else 0.0,
        pis,
        n0,
        n,
        float(area.mean() * intensity) if n else math.nan,
        sol.converged,
        sol.max_gap,
        float(sol.rate_integral[sel].mean()) if n else math.nan,
    )


@dataclass
class TypicalCellEstimate:
    traffic_per_cell: float  # bit/s
    model: str
    mean_load: float
    load_std: float
    stable_fraction: float
    stable_std: float
    n0: float
    n0_over_pis: float
    n_std: float
    r0: float  # bit/s
    r0_std: float
    n_realizations: int
    traffic_density: float
    intensity: float
    area_x_intensity: float
    converged_fraction: float
    gaps: np.ndarray = field(repr=False, default=None)
    all_unstable: bool = False

    @property
    def load_sem(self) -> float:
        return self.load_std / math.sqrt(self.n_realizations)

    def throughput_identity_residual(self) -> float:
        """|r0 lambda N0 - rho pi_S|, zero up to rounding by construction."""
        return abs(self.r0 * self.intensity * self.n0 - self.traffic_density * self.stable_fraction)


def aggregate(stats_list: list[CellStats], traffic: TrafficModel, intensity: float, model: str) -> TypicalCellEstimate:
    """Average per-realization statistics; error bars are standard deviations across realizations."""
    k = len(stats_list)
    if k < 1:
        raise ValueError("no realizations to aggregate")
    rho = traffic.traffic_density
    load = np.array([s.mean_load for s in stats_list])
    pis = np.array([s.stable_fraction for s in stats_list])
    n0 = np.array([s.n0 for s in stats_list])
    ddof = 1 if k > 1 else 0
    with np.errstate(divide="ignore", invalid="ignore"):
        n_ratio = np.where(pis > 0, n0 / pis, np.nan)
        r0_each = np.where(n0 > 0, rho * pis / (intensity * n0), np.nan)
    pis_mean = float(pis.mean())
    n0_mean = float(n0.mean())
    all_unstable = pis_mean == 0
    if rho == 0:
        # light-traffic limit: N(X) ~ theta(X), so r0 -> 1 / (lambda E0[integral of 1/R])
        integral = np.array([s.mean_rate_integral for s in stats_list])
        r0_each = 1.0 / (intensity * integral)
        r0 = 1.0 / (intensity * float(integral.mean()))
    elif n0_mean > 0:
        r0 = rho * pis_mean / (intensity * n0_mean)
    else:
        r0 = 0.0
    return TypicalCellEstimate(
        traffic_per_cell=rho / intensity,
        model=model,
        mean_load=float(load.mean()),
        load_std=float(load.std(ddof=ddof)),
        stable_fraction=pis_mean,
        stable_std=float(pis.std(ddof=ddof)),
        n0=n0_mean,
        n0_over_pis=n0_mean / pis_mean if pis_mean > 0 else math.inf,
        n_std=float(np.nanstd(n_ratio, ddof=ddof)) if np.isfinite(n_ratio).sum() > ddof else math.nan,
        r0=r0,
        r0_std=float(np.nanstd(r0_each, ddof=ddof)) if np.isfinite(r0_each).sum() > ddof else math.nan,
        n_realizations=k,
        traffic_density=rho,
        intensity=intensity,
        area_x_intensity=float(np.mean([s.area_x_intensity for s in stats_list])),
        converged_fraction=float(np.mean([s.converged for s in stats_list])),
        gaps=np.array([s.max_gap for s in stats_list]),
        all_unstable=all_unstable,
    )


@dataclass
class OriginSamples:
    """Pooled pixel samples of the SINR at a stationary location, split into parts."""

    signal: np.ndarray
    interference: np.ndarray  # at unit load on every interferer
    noise: float
    cap: float

    def sinr(self, weight: float = 1.0) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = self.signal / (self.noise + weight * self.interference)
        return np.where(raw < self.cap, raw, self.cap)

    def __len__(self):
        return len(self.signal)

    @classmethod
    def concat(cls, parts: list["OriginSamples"]) -> "OriginSamples":
        return cls(
            np.concatenate([p.signal for p in parts]),
            np.concatenate([p.interference for p in parts]),
            parts[0].noise,
            parts[0].cap,
        )


def origin_samples(real: Realization) -> OriginSamples:
    sel = real.inner_pixels
    return OriginSamples(
        real.links.signal[sel].copy(),
        real.links.interference()[sel],
        real.links.noise,
        real.links.cap,
    )


@dataclass
class MeanCellEstimate:
    rho_bar: float
    theta_bar: float
    rho_c_bar: float
    r_bar: float
    n_bar: float
    model: str
    converged: bool = True

    @property
    def stable(self) -> bool:
        return self.theta_bar < 1


def _mean_cell(rho_bar: float, theta_bar: float, mean_inverse_rate: float, model: str, converged=True):
    rho_c_bar = 1.0 / mean_inverse_rate if mean_inverse_rate > 0 else math.inf
    if theta_bar < 1:
        r_bar = rho_c_bar - rho_bar
        n_bar = theta_bar / (1 - theta_bar)
    else:
        r_bar = 0.0
        n_bar = math.inf
    return MeanCellEstimate(rho_bar, theta_bar, rho_c_bar, max(r_bar, 0.0), n_bar, model, converged)


def mean_cell_full(traffic: TrafficModel, intensity: float, sinr_samples, rf: RateFunction) -> MeanCellEstimate:
    """Mean cell under full interference from samples of the stationary SINR.

    ``sinr_samples`` is an array of SINR values (equal weights) or an OriginSamples.
    """
    if isinstance(sinr_samples, OriginSamples):
        sinr_samples = sinr_samples.sinr(1.0)
    s = np.asarray(sinr_samples, dtype=float)
    if s.size == 0:
        raise ValueError("empty SINR sample pool")
    inv = float(rate_table(rf).inverse(s).mean())
    rho_bar = traffic.traffic_density / intensity
    return _mean_cell(rho_bar, rho_bar * inv, inv, "full")


def solve_mean_cell_equation(
    traffic: TrafficModel,
    intensity: float,
    samples: OriginSamples,
    rf: RateFunction,
    pilot_fraction: float = 0.1,
    tol: float = 1e-8,
) -> MeanCellEstimate:
    """Mean-cell load under load-weighted interference.

    Solves theta = rho_bar E[1/R(S / (N + w(theta) I))] with
    w(theta) = min(theta, 1)(1 - eps) + eps, by a bracketing root search on
    [0, full-interference load].
    """
    if len(samples) == 0:
        raise ValueError("empty SINR sample pool")
    table = rate_table(rf)
    rho_bar = traffic.traffic_density / intensity
    eps = pilot_fraction

    def mean_inv(theta):
        w = min(theta, 1.0) * (1 - eps) + eps
        return float(table.inverse(samples.sinr(w)).mean())

    inv_full = mean_inv(1.0)
    theta_full = rho_bar * inv_full
    if rho_bar == 0:
        return _mean_cell(0.0, 0.0, mean_inv(0.0), "weighted")

    def g(theta):
        return rho_bar * mean_inv(theta) - theta

    g_hi = g(theta_full)
    if g_hi > tol:
        log.warning("mean-cell equation has no root below the full-interference load")
        return _mean_cell(rho_bar, theta_full, inv_full, "weighted", converged=False)
    if abs(g_hi) <= tol:
        theta = theta_full
    else:
        theta = optimize.brentq(g, 0.0, theta_full, xtol=tol * max(theta_full, 1e-300), rtol=1e-12)
    return _mean_cell(rho_bar, theta, mean_inv(theta), "weighted")


def origin_link_samples(
    intensity: float,
    pl: PathLossParams,
    sh: ShadowingParams | None,
    budget: LinkBudget,
    n_samples: int,
    seed,
    radius: float | None = None,
    chunk: int = 5000,
) -> OriginSamples:
    """Signal and unit-load interference at the origin of Poisson networks with
    i.i.d. marginal shadowing, strongest-station association.

    Stations are simulated within ``radius`` km (default: ORIGIN_STATIONS stations on
    average); the mean interference from beyond is added deterministically.
    """
    if radius is None:
        radius = math.sqrt(ORIGIN_STATIONS / (math.pi * intensity))
    rng = np.random.default_rng(seed)
    P = budget.tx_power
    sigma = sh.sigma_log if (sh is not None and sh.active) else 0.0
    mean_s = math.exp(sigma**2 / 2)
    beta = pl.beta
    far = intensity * 2 * math.pi * mean_s * P * pl.k ** (-beta) * radius ** (2 - beta) / (beta - 2)
    mean_count = intensity * math.pi * radius**2
    signal = np.empty(n_samples)
    interf = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        counts = rng.poisson(mean_count, m)
        total = int(counts.sum())
        r = radius * np.sqrt(rng.random(total))
        rx = P / (pl.k * r) ** beta
        if sigma > 0:
            rx *= np.exp(sigma * rng.standard_normal(total))
        idx = np.repeat(np.arange(m), counts)
        best = np.zeros(m)
        np.maximum.at(best, idx, rx)
        tot = np.bincount(idx, weights=rx, minlength=m)
        signal[done : done + m] = best
        interf[done : done + m] = far + tot - best
        done += m
    return OriginSamples(signal, interf, budget.noise, budget.sinr_cap)


def origin_sinr_samples(intensity, pl, sh, budget, n_samples, seed, radius: float | None = None) -> np.ndarray:
    """Full-interference SINR at the origin; see :func:`origin_link_samples`."""
    return origin_link_samples(intensity, pl, sh, budget, n_samples, seed, radius).sinr(1.0)


@dataclass
class EquivalenceResult:
    ks_distance: float
    p_value: float
    density_factor: float
    passed: bool
    threshold: float


def shadowing_equivalence_check(
    pl: PathLossParams,
    sh: ShadowingParams,
    budget: LinkBudget,
    rf: RateFunction,
    intensity: float,
    n_samples: int = 100_000,
    seed: int = 0,
    threshold: float = 0.03,
    radius: float | None = None,
) -> EquivalenceResult:
    """Two-sample KS distance between the origin SINR with shadowing at ``intensity``
    and without shadowing at ``intensity * E[S^(2/beta)]``."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples per model")
    factor = lognormal_equivalence_moment(sh.sigma_db if sh.active else 0.0, pl.beta)
    ss = np.random.SeedSequence(seed).spawn(2)
    a = origin_sinr_samples(intensity, pl, sh, budget, n_samples, ss[0], radius)
    b = origin_sinr_samples(intensity * factor, pl, None, budget, n_samples, ss[1], radius)
    res = stats.ks_2samp(a, b)
    return EquivalenceResult(float(res.statistic), float(res.pvalue), factor, bool(res.statistic < threshold), threshold)


@dataclass
class SweepPoint:
    rho_per_cell: float
    model: str
    typical: TypicalCellEstimate
    mean_cell: MeanCellEstimate


@dataclass
class SweepRun:
    points: list[SweepPoint]
    pool: OriginSamples | None
    per_realization: dict = field(repr=False, default_factory=dict)  # (rho index, model) -> [CellStats]
    failures: list[str] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(s.converged for v in self.per_realization.values() for s in v)


def typical_cell_sweep(
    scenario: Scenario,
    rho_per_cell,
    models=("full", "weighted"),
    n_realizations: int = 30,
    base_seed: int = 0,
    mean_volume_bits: float = 1e6,
    keep_samples: bool = True,
    on_solution=None,
) -> SweepRun:
    """Typical-cell and mean-cell estimates over a traffic sweep.

    Realizations are shared across traffic values and models (common random numbers);
    within a realization the ascending cell-load iteration is warm-started from the
    minimal solution at the previous traffic value, which stays below the new one.
    ``on_solution(index, realization, rho_index, model, solution, traffic)`` is called
    for every solved instance. A realization that cannot be simulated is recorded in
    ``failures`` and skipped.
    """
    if n_realizations < 2:
        raise ValueError("need at least 2 realizations")
    rhos = [float(r) for r in rho_per_cell]
    if any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("traffic sweep must be increasing")
    traffics = [TrafficModel.per_cell(r, scenario.intensity, mean_volume_bits) for r in rhos]
    per = {(i, m): [] for i in range(len(rhos)) for m in models}
    pools = []
    failures = []
    grid = Grid(scenario.window, scenario.pixel_size)
    for k in range(n_realizations):
        try:
            real = simulate_realization(scenario, base_seed, k, grid)
        except ValueError as exc:
            failures.append(f"realization {k}: {exc}")
            log.warning("skipping realization %d: %s", k, exc)
            continue
        pools.append(origin_samples(real))
        for m in models:
            lower = None
            for i, tr in enumerate(traffics):
                sol = solve_cell_load_equations(
                    real.map,
                    real.partition,
                    scenario.budget,
                    scenario.rate,
                    tr,
                    scenario.tol,
                    scenario.max_iter,
                    model=m,
                    links=real.links,
                    lower_start=lower,
                )
                if m == "weighted":
                    lower = sol.theta_lower
                per[(i, m)].append(realization_stats(real, sol, tr, scenario.intensity))
                if on_solution is not None:
                    on_solution(k, real, i, m, sol, tr)
        log.info("realization %d/%d: %d stations", k + 1, n_realizations, real.n_stations)
        del real
    if len(pools) < 2:
        raise ValueError(f"only {len(pools)} usable realizations: {failures}")
    pool = OriginSamples.concat(pools)
    points = []
    for i, tr in enumerate(traffics):
        for m in models:
            typ = aggregate(per[(i, m)], tr, scenario.intensity, m)
            try:
                if m == "full":
                    mc = mean_cell_full(tr, scenario.intensity, pool, scenario.rate)
                else:
                    mc = solve_mean_cell_equation(
                        tr, scenario.intensity, pool, scenario.rate, scenario.budget.pilot_fraction
                    )
            except (ValueError, RuntimeError) as exc:
                failures.append(f"mean cell at {rhos[i]:g} bit/s ({m}): {exc}")
                nan = math.nan
                mc = MeanCellEstimate(tr.traffic_density / scenario.intensity, nan, nan, nan, nan, m, False)
            points.append(SweepPoint(rhos[i], m, typ, mc))
    return SweepRun(points, pool if keep_samples else None, per, failures)


def typical_cell_estimate(
    scenario: Scenario,
    traffic: TrafficModel,
    n_realizations: int = 30,
    base_seed: int = 0,
    model: str = "full",
) -> TypicalCellEstimate:
    """Typical-cell averages at a single traffic density."""
    rho_pc = traffic.traffic_density / scenario.intensity
    run = typical_cell_sweep(
        scenario, [rho_pc], (model,), n_realizations, base_seed, traffic.mean_volume_bits, keep_samples=False
    )
    return run.points[0].typical

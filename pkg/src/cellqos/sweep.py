"""Sweep orchestration, measurement comparison and pattern diagnostics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .estimators import (
    SweepRun,
    mean_cell_full,
    origin_link_samples,
    solve_mean_cell_equation,
    typical_cell_sweep,
)
from .geometry import BsPattern, Window, l_envelope_test
from .qos import TrafficModel, cell_metrics

log = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "rho_per_cell_bps",
    "model",
    "mean_load",
    "load_std",
    "stable_fraction",
    "n0_over_pis",
    "n_std",
    "r0_bps",
    "r0_std",
    "theta_bar",
    "n_bar",
    "r_bar_bps",
]
SWEEP_UNITS = "# units: bit/s, -, -, -, -, users, users, bit/s, bit/s, -, users, bit/s"

MEAN_CELL_COLUMNS = ["rho_per_cell_bps", "model", "theta_bar", "rho_c_bar_bps", "n_bar", "r_bar_bps"]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _read_rows(path) -> list[dict]:
    with Path(path).open() as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        return list(reader)


def sweep_rows(run: SweepRun) -> list[dict]:
    rows = []
    for p in run.points:
        t, m = p.typical, p.mean_cell
        rows.append(
            {
                "rho_per_cell_bps": p.rho_per_cell,
                "model": p.model,
                "mean_load": t.mean_load,
                "load_std": t.load_std,
                "stable_fraction": t.stable_fraction,
                "stable_std": t.stable_std,
                "n0_over_pis": t.n0_over_pis,
                "n_std": t.n_std,
                "r0_bps": t.r0,
                "r0_std": t.r0_std,
                "theta_bar": m.theta_bar,
                "n_bar": m.n_bar,
                "r_bar_bps": m.r_bar,
            }
        )
    return rows


def write_sweep_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(SWEEP_UNITS + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])


def read_sweep_csv(path) -> list[dict]:
    rows = _read_rows(path)
    out = []
    for r in rows:
        d = {k: (v if k == "model" else float(v)) for k, v in r.items()}
        out.append(d)
    return out


_DAT_SERIES = {
    "load": ("mean_load", "load_std"),
    "mean_cell_load": ("theta_bar", None),
    "stable_fraction": ("stable_fraction", "stable_std"),
    "users": ("n0_over_pis", "n_std"),
    "mean_cell_users": ("n_bar", None),
    "throughput": ("r0_bps", "r0_std"),
    "mean_cell_throughput": ("r_bar_bps", None),
}


def write_dat_files(rows, directory) -> list[Path]:
    """Gnuplot-ready columns: traffic per cell (bit/s), value, standard deviation."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for model in sorted({r["model"] for r in rows}):
        sub = [r for r in rows if r["model"] == model]
        for name, (col, err) in _DAT_SERIES.items():
            path = directory / f"{model}_{name}.dat"
            with path.open("w") as fh:
                fh.write(f"# {model} interference: {col} versus traffic demand per cell\n")
                fh.write("# rho_per_cell_bps value std\n")
                for r in sub:
                    fh.write(f"{_fmt(r['rho_per_cell_bps'])} {_fmt(r[col])} {_fmt(r[err]) if err else '0'}\n")
            written.append(path)
    return written


@dataclass
class SweepResult:
    rows: list[dict]
    run: SweepRun
    output_dir: Path
    files: list[Path] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.run.all_converged


def run_sweep(config: RunConfig, output_dir=None) -> SweepResult:
    """Typical-cell and mean-cell estimates for every traffic value and model in the config.

    Writes ``sweep.csv``, per-realization summaries and station files, cell-metric files
    of realization 0, ``.dat`` series and figures, depending on ``outputs.formats``.
    """
    out = Path(output_dir or config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    scenario = config.scenario()
    formats = set(config.outputs.formats)
    rhos = [1e3 * r for r in config.traffic.rho_per_cell_kbps]
    real_dir = out / "realizations"
    per_real_rows = []
    files: list[Path] = []

    def on_solution(k, real, i, model, sol, traffic):
        if "csv" not in formats:
            return
        real_dir.mkdir(exist_ok=True)
        if i == 0 and model == config.traffic.models[0]:
            path = real_dir / f"stations_{k:03d}.csv"
            real.pattern.to_csv(path)
            files.append(path)
        if k == 0:
            metrics = cell_metrics(sol.theta, real.partition, traffic)
            path = real_dir / f"cells_000_{model}_{rhos[i]:.0f}bps.csv"
            metrics.to_csv(path, real.pattern.points)
            files.append(path)
        per_real_rows.append(
            [k, rhos[i], model, len(real.pattern), sol.theta.mean(), sol.max_gap, sol.iterations, sol.converged]
        )

    run = typical_cell_sweep(
        scenario,
        rhos,
        tuple(config.traffic.models),
        config.estimation.n_realizations,
        config.estimation.base_seed,
        config.traffic.mean_volume_bits,
        keep_samples=False,
        on_solution=on_solution,
    )
    rows = sweep_rows(run)
    config.dump(out / "config.yaml")
    files.append(out / "config.yaml")
    if "csv" in formats:
        write_sweep_csv(rows, out / "sweep.csv")
        files.append(out / "sweep.csv")
        path = out / "realizations.csv"
        per_real_rows.sort(key=lambda r: (r[2], r[1], r[0]))
        with path.open("w", newline="") as fh:
            fh.write("# units: -, bit/s, -, stations, -, -, iterations, -\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["realization", "rho_per_cell_bps", "model", "n_stations", "mean_load", "max_gap", "iterations", "converged"])
            for r in per_real_rows:
                w.writerow([r[0], _fmt(r[1]), r[2], r[3], _fmt(r[4]), _fmt(r[5]), r[6], int(r[7])])
        files.append(path)
    if run.failures:
        path = out / "failures.txt"
        path.write_text("\n".join(run.failures) + "\n")
        files.append(path)
    if "dat" in formats:
        files.extend(write_dat_files(rows, out / "dat"))
    if "png" in formats:
        files.extend(render_sweep_figures(rows, out / "figures"))
    return SweepResult(rows, run, out, files)


def render_sweep_figures(rows, directory) -> list[Path]:
    from . import plotting

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for model in sorted({r["model"] for r in rows}):
        sub = [r for r in rows if r["model"] == model]
        for name, fn in (
            ("load", plotting.load_figure),
            ("users", plotting.users_figure),
            ("throughput", plotting.throughput_figure),
        ):
            path = directory / f"{model}_{name}.png"
            fn(sub, model, path)
            paths.append(path)
    return paths


def mean_cell_sweep(config: RunConfig, seed: int | None = None) -> list[dict]:
    """Mean-cell curves from SINR samples at a stationary location of the Poisson model.

    Only static samples of the SINR at the origin are drawn; no cell loads are solved.
    """
    sc = config.scenario()
    samples = origin_link_samples(
        sc.intensity,
        sc.pathloss,
        sc.shadowing,
        sc.budget,
        config.estimation.origin_samples,
        config.estimation.base_seed if seed is None else seed,
    )
    rows = []
    for kbps in config.traffic.rho_per_cell_kbps:
        tr = TrafficModel.per_cell(1e3 * kbps, sc.intensity, config.traffic.mean_volume_bits)
        for model in config.traffic.models:
            if model == "full":
                mc = mean_cell_full(tr, sc.intensity, samples, sc.rate)
            else:
                mc = solve_mean_cell_equation(tr, sc.intensity, samples, sc.rate, sc.budget.pilot_fraction)
            rows.append(
                {
                    "rho_per_cell_bps": 1e3 * kbps,
                    "model": model,
                    "theta_bar": mc.theta_bar,
                    "rho_c_bar_bps": mc.rho_c_bar,
                    "n_bar": mc.n_bar,
                    "r_bar_bps": mc.r_bar,
                }
            )
    return rows


def write_mean_cell_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("# units: bit/s, -, -, bit/s, users, bit/s\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEAN_CELL_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in MEAN_CELL_COLUMNS])


# measurement comparison

MEASUREMENT_COLUMNS = ["hour_label", "traffic_demand_per_cell", "mean_users", "busy_fraction", "throughput"]


def read_measurements(path) -> list[dict]:
    """Read a measurement table.

    Columns: ``hour_label, traffic_demand_per_cell, mean_users, busy_fraction`` and either
    ``throughput`` or ``total_bits, total_users`` (throughput = total bits / total users).
    Rates in bit/s.
    """
    rows = _read_rows(path)
    out = []
    for lineno, r in enumerate(rows, start=2):
        try:
            if r.get("throughput") not in (None, ""):
                thr = float(r["throughput"])
            else:
                thr = float(r["total_bits"]) / float(r["total_users"])
            row = {
                "hour_label": r["hour_label"],
                "traffic_demand_per_cell": float(r["traffic_demand_per_cell"]),
                "mean_users": float(r["mean_users"]),
                "busy_fraction": float(r["busy_fraction"]),
                "throughput": thr,
            }
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"{path}: malformed measurement row {lineno}: {r}") from exc
        if any(v < 0 for k, v in row.items() if k != "hour_label"):
            raise ValueError(f"{path}: negative value in row {lineno}")
        out.append(row)
    return out


_CURVES = {
    "typical": {"busy_fraction": "mean_load", "mean_users": "n0_over_pis", "throughput": "r0_bps"},
    "mean-cell": {"busy_fraction": "theta_bar", "mean_users": "n_bar", "throughput": "r_bar_bps"},
}


@dataclass
class ComparisonReport:
    rows: list[dict]
    skipped: list[str]
    summary: dict  # metric -> quantiles of relative deviation

    def to_csv(self, path) -> None:
        cols = ["hour_label", "traffic_demand_per_cell", "dev_busy_fraction", "dev_mean_users", "dev_throughput"]
        with Path(path).open("w", newline="") as fh:
            fh.write("# relative deviation = measured / model - 1; traffic in bit/s\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r["hour_label"]] + [_fmt(r[c]) for c in cols[1:]])


def compare_measurements(sweep_rows_, measurements, model: str = "weighted", curve: str = "typical") -> ComparisonReport:
    """Relative deviation of each measurement from the model curve interpolated at its traffic."""
    if curve not in _CURVES:
        raise ValueError(f"unknown curve {curve!r}")
    sub = sorted((r for r in sweep_rows_ if r["model"] == model), key=lambda r: r["rho_per_cell_bps"])
    if measurements and not sub:
        raise ValueError(f"sweep has no rows for model {model!r}")
    x = np.array([r["rho_per_cell_bps"] for r in sub])
    rows, skipped = [], []
    for m in measurements:
        rho = m["traffic_demand_per_cell"]
        if not len(x) or rho < x[0] or rho > x[-1]:
            skipped.append(f"{m['hour_label']}: traffic {rho:g} bit/s outside swept range")
            continue
        row = {"hour_label": m["hour_label"], "traffic_demand_per_cell": rho}
        for metric, col in _CURVES[curve].items():
            model_val = float(np.interp(rho, x, [r[col] for r in sub]))
            with np.errstate(divide="ignore", invalid="ignore"):
                row[f"dev_{metric}"] = m[metric] / model_val - 1 if model_val != 0 else math.nan
        rows.append(row)
    for s in skipped:
        log.info("skipped measurement %s", s)
    summary = {}
    for metric in _CURVES[curve]:
        vals = np.array([r[f"dev_{metric}"] for r in rows], dtype=float)
        vals = vals[np.isfinite(vals)]
        if len(vals):
            q = np.quantile(vals, [0, 0.25, 0.5, 0.75, 1])
            summary[metric] = dict(zip(["min", "q25", "median", "q75", "max"], map(float, q)))
    return ComparisonReport(rows, skipped, summary)


def default_radii(window: Window, n: int = 50) -> np.ndarray:
    rmax = window.diameter / 4
    return np.linspace(rmax / n, rmax, n)


def diagnose_pattern(pattern: BsPattern, radii=None, n_sim: int = 99, seed: int = 0):
    """Ripley's L with a global CSR envelope from ``n_sim`` simulations."""
    if len(pattern) < 10:
        raise ValueError(f"need at least 10 stations, got {len(pattern)}")
    if radii is None:
        radii = default_radii(pattern.window)
    return l_envelope_test(pattern, radii, n_sim, seed)

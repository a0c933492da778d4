"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical non-convergence
(outputs written so far are kept).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, RunConfig
from .geometry import BsPattern, Window
from .queueing import ps_queue_oracle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3

log = logging.getLogger("cellqos")


def _load_structured(path) -> dict:
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def cmd_sweep(args) -> int:
    from .sweep import run_sweep

    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg.estimation.base_seed = args.seed
    if args.realizations is not None:
        cfg.estimation.n_realizations = args.realizations
    cfg.validate()
    res = run_sweep(cfg, args.output)
    for f in res.run.failures:
        print(f"failure: {f}", file=sys.stderr)
    print(f"wrote {len(res.files)} files to {res.output_dir}")
    if not res.converged:
        print("some cell-load iterations did not converge; see realizations.csv", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_mean_cell(args) -> int:
    from .sweep import mean_cell_sweep, write_mean_cell_csv

    cfg = RunConfig.load(args.config)
    cfg.validate()
    rows = mean_cell_sweep(cfg, args.seed)
    out = Path(args.output or cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mean_cell.csv"
    write_mean_cell_csv(rows, path)
    print(f"wrote {path}")
    if any(not np.isfinite(r["theta_bar"]) for r in rows):
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_compare(args) -> int:
    from .sweep import compare_measurements, read_measurements, read_sweep_csv

    try:
        sweep_rows = read_sweep_csv(args.sweep_csv)
        meas = read_measurements(args.measurements_csv)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    report = compare_measurements(sweep_rows, meas, args.model, args.curve)
    for s in report.skipped:
        print(f"skipped {s}", file=sys.stderr)
    if args.output:
        report.to_csv(args.output)
    print(f"{len(report.rows)} rows compared, {len(report.skipped)} skipped")
    for metric, q in report.summary.items():
        print(f"{metric}: " + " ".join(f"{k}={v:+.4f}" for k, v in q.items()))
    return EXIT_OK


def _window_arg(text: str | None) -> Window | None:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--window: {exc}") from exc
    if len(vals) == 1:
        return Window.disc(vals[0])
    if len(vals) == 3:
        return Window.disc(vals[2], (vals[0], vals[1]))
    if len(vals) == 4:
        return Window.rectangle(*vals)
    raise ConfigError("--window: expected R, cx,cy,R or x0,y0,x1,y1")


def cmd_diagnose(args) -> int:
    from . import plotting
    from .sweep import diagnose_pattern

    try:
        window = _window_arg(args.window)
        pattern = BsPattern.from_csv(args.stations_csv, window=window, intensity=args.intensity)
        radii = None
        if args.rmax is not None:
            radii = np.linspace(args.rmax / args.n_radii, args.rmax, args.n_radii)
        test = diagnose_pattern(pattern, radii, args.n_sim, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.stations_csv).stem
    with (out / f"{stem}_lfunction.csv").open("w", newline="") as fh:
        fh.write("# units: km, km, km, km\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r_km", "l_km", "envelope_low_km", "envelope_high_km"])
        for row in zip(test.curve.radii, test.curve.l_values, test.lower, test.upper):
            w.writerow([repr(float(v)) for v in row])
    plotting.l_function_figure(test, out / f"{stem}_lfunction.png", label=stem)
    verdict = "inside" if test.inside else "OUTSIDE"
    print(
        f"{len(pattern)} stations, intensity {pattern.intensity:.4g}/km2: L-curve {verdict} the CSR envelope "
        f"(max |L-r| {test.curve.max_deviation:.4g} km, critical {test.critical_deviation:.4g} km, p = {test.p_value:.3f})"
    )
    return EXIT_OK


ORACLE_KEYS = {"cell_arrival_rate", "mean_volume_bits", "volume_dist", "pixel_rates", "horizon", "seed", "warmup"}


def cmd_oracle(args) -> int:
    cell = _load_structured(args.cell_spec)
    unknown = set(cell) - ORACLE_KEYS
    if unknown:
        raise ConfigError(f"unknown cell description key(s): {', '.join(sorted(unknown))}")
    try:
        res = ps_queue_oracle(
            float(cell["cell_arrival_rate"]),
            cell.get("volume_dist", "exponential"),
            float(cell.get("mean_volume_bits", 1e6)),
            cell["pixel_rates"],
            float(cell["horizon"]),
            int(cell.get("seed", 0)),
            float(cell.get("warmup", 0.05)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.cell_spec}: {exc}") from exc
    theta = res.load
    rho = float(cell["cell_arrival_rate"]) * float(cell.get("mean_volume_bits", 1e6))
    print("metric,closed_form,simulated")
    if res.stationary:
        print(f"mean_users,{theta / (1 - theta)!r},{res.empirical_mean_users!r}")
        print(f"busy_fraction,{theta!r},{res.empirical_busy_fraction!r}")
        print(f"throughput_bps,{res.critical_traffic - rho!r},{res.empirical_mean_throughput!r}")
    else:
        print(f"load,{theta!r},nan")
    print(f"# {res.departures} departures", file=sys.stderr)
    return EXIT_OK if res.stationary else EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cellqos", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="typical-cell and mean-cell estimates over a traffic sweep")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="output directory (default: outputs.directory)")
    s.add_argument("--seed", type=int, help="override estimation.base_seed")
    s.add_argument("--realizations", type=int, help="override estimation.n_realizations")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("mean-cell", help="analytic mean-cell curves only")
    s.add_argument("config")
    s.add_argument("-o", "--output")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_mean_cell)

    s = sub.add_parser("compare", help="deviation of measurements from a sweep curve")
    s.add_argument("sweep_csv")
    s.add_argument("measurements_csv")
    s.add_argument("--model", default="weighted", choices=["full", "weighted"])
    s.add_argument("--curve", default="typical", choices=["typical", "mean-cell"])
    s.add_argument("-o", "--output", help="per-row report CSV")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("diagnose", help="Ripley L-function test of a station layout")
    s.add_argument("stations_csv")
    s.add_argument("--window", help="R | cx,cy,R | x0,y0,x1,y1 (km); default: bounding box")
    s.add_argument("--intensity", type=float, help="stations per km2; default: empirical")
    s.add_argument("--rmax", type=float, help="largest radius in km")
    s.add_argument("--n-radii", type=int, default=50)
    s.add_argument("--n-sim", type=int, default=99)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", default=".")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("oracle", help="discrete-event simulation of one processor-sharing cell")
    s.add_argument("cell_spec", help="YAML or JSON file")
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from cellqos.cli import main
from cellqos.geometry import Window, hexagonal_lattice, sample_poisson
from cellqos.sweep import compare_measurements, read_sweep_csv

SMALL = {
    "geometry": {"window": {"kind": "disc", "center": [0.0, 0.0], "radius": 1.0}},
    "traffic": {"rho_per_cell_kbps": [100.0, 300.0, 600.0]},
    "solver": {"pixel_size": 0.04},
    "estimation": {"n_realizations": 2, "base_seed": 1, "origin_samples": 2000},
    "outputs": {"formats": ["csv", "dat"]},
}


def _write(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sweep")
    cfg = _write(d, SMALL)
    assert main(["sweep", str(cfg), "-o", str(d / "out")]) == 0
    return d / "out"


def _data_rows(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def test_sweep_outputs(sweep_dir):
    rows = read_sweep_csv(sweep_dir / "sweep.csv")
    assert len(rows) == 6
    assert {r["model"] for r in rows} == {"full", "weighted"}
    header = _data_rows(sweep_dir / "sweep.csv")[0]
    assert header == (
        "rho_per_cell_bps,model,mean_load,load_std,stable_fraction,n0_over_pis,n_std,"
        "r0_bps,r0_std,theta_bar,n_bar,r_bar_bps"
    )
    dat = sweep_dir / "dat" / "weighted_load.dat"
    vals = np.loadtxt(dat)
    assert vals.shape == (3, 3)
    np.testing.assert_allclose(vals[:, 0], [1e5, 3e5, 6e5])
    assert (sweep_dir / "realizations" / "stations_000.csv").exists()
    assert list((sweep_dir / "realizations").glob("cells_000_*.csv"))
    assert (sweep_dir / "config.yaml").exists()


def test_every_csv_declares_units(sweep_dir):
    files = list(sweep_dir.rglob("*.csv"))
    assert len(files) > 3
    for f in files:
        assert f.read_text().startswith("# units:"), f


def test_sweep_byte_identical(tmp_path, sweep_dir):
    cfg = _write(tmp_path, SMALL)
    assert main(["sweep", str(cfg), "-o", str(tmp_path / "again")]) == 0
    for f in sweep_dir.rglob("*"):
        if f.is_file():
            assert (tmp_path / "again" / f.relative_to(sweep_dir)).read_bytes() == f.read_bytes(), f


def test_sweep_seed_changes_output(tmp_path, sweep_dir):
    cfg = _write(tmp_path, SMALL)
    assert main(["sweep", str(cfg), "-o", str(tmp_path / "s2"), "--seed", "2"]) == 0
    assert (tmp_path / "s2" / "sweep.csv").read_bytes() != (sweep_dir / "sweep.csv").read_bytes()


def test_sweep_zero_traffic(tmp_path):
    data = dict(SMALL, traffic={"rho_per_cell_kbps": [0.0], "models": ["full"]})
    assert main(["sweep", str(_write(tmp_path, data)), "-o", str(tmp_path / "z")]) == 0
    (row,) = read_sweep_csv(tmp_path / "z" / "sweep.csv")
    assert row["mean_load"] == 0 and row["theta_bar"] == 0 and row["stable_fraction"] == 1
    assert row["r0_bps"] == pytest.approx(row["r_bar_bps"], rel=0.3)


def test_sweep_with_figures(tmp_path):
    data = dict(SMALL, outputs={"formats": ["csv", "png"]}, traffic={"rho_per_cell_kbps": [200.0]})
    assert main(["sweep", str(_write(tmp_path, data)), "-o", str(tmp_path / "f")]) == 0
    pngs = sorted(p.name for p in (tmp_path / "f" / "figures").glob("*.png"))
    assert "weighted_load.png" in pngs and "full_throughput.png" in pngs
    assert (tmp_path / "f" / "figures" / "full_users.png").read_bytes()[:4] == b"\x89PNG"


def test_sweep_non_convergence_exit_code(tmp_path):
    data = dict(SMALL, solver={"pixel_size": 0.04, "max_iter": 1}, traffic={"rho_per_cell_kbps": [900.0]})
    assert main(["sweep", str(_write(tmp_path, data)), "-o", str(tmp_path / "nc")]) == 3
    # partial outputs are kept
    assert (tmp_path / "nc" / "sweep.csv").exists()
    flags = [r["converged"] for r in csv.DictReader(_data_rows(tmp_path / "nc" / "realizations.csv"))]
    assert "0" in flags


@pytest.mark.parametrize(
    "data",
    [{"radio": {"tx_pwr": 58}}, {"geometry": {"intensity": -4.62}}, {"traffic": {"rho_per_cell_kbps": [3.0, 1.0]}}],
)
def test_config_errors_exit_2(tmp_path, data, capsys):
    assert main(["sweep", str(_write(tmp_path, data))]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["mean-cell", str(_write(tmp_path, data))]) == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["sweep", str(tmp_path / "nope.yaml")]) == 2


def test_mean_cell_command(tmp_path):
    assert main(["mean-cell", str(_write(tmp_path, SMALL)), "-o", str(tmp_path / "mc")]) == 0
    rows = list(csv.DictReader(_data_rows(tmp_path / "mc" / "mean_cell.csv")))
    assert len(rows) == 6
    full = [float(r["theta_bar"]) for r in rows if r["model"] == "full"]
    np.testing.assert_allclose(np.array(full) / full[0], [1, 3, 6], rtol=1e-12)


def _measurements(path, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour_label", "traffic_demand_per_cell", "mean_users", "busy_fraction", "throughput"])
        w.writerows(rows)


def test_compare_self_consistent(sweep_dir, tmp_path):
    rows = [r for r in read_sweep_csv(sweep_dir / "sweep.csv") if r["model"] == "weighted"]
    meas = [[f"h{i}", r["rho_per_cell_bps"], r["n0_over_pis"], r["mean_load"], r["r0_bps"]] for i, r in enumerate(rows)]
    path = tmp_path / "m.csv"
    _measurements(path, meas)
    report = tmp_path / "rep.csv"
    assert main(["compare", str(sweep_dir / "sweep.csv"), str(path), "-o", str(report)]) == 0
    devs = np.array([[float(x) for x in r[2:]] for r in csv.reader(_data_rows(report)[1:])])
    np.testing.assert_allclose(devs, 0, atol=1e-12)


def test_compare_ten_percent(sweep_dir):
    rows = read_sweep_csv(sweep_dir / "sweep.csv")
    weighted = [r for r in rows if r["model"] == "weighted"]
    meas = []
    for x in (1.5e5, 2.5e5, 4e5, 5.5e5):
        r = {k: np.interp(x, [w["rho_per_cell_bps"] for w in weighted], [w[k] for w in weighted])
             for k in ("mean_load", "n0_over_pis", "r0_bps")}
        meas.append({"hour_label": "h", "traffic_demand_per_cell": x, "mean_users": r["n0_over_pis"],
                     "busy_fraction": r["mean_load"], "throughput": 1.1 * r["r0_bps"]})
    rep = compare_measurements(rows, meas)
    assert len(rep.rows) == 4
    np.testing.assert_allclose([r["dev_throughput"] for r in rep.rows], 0.10, atol=1e-9)
    np.testing.assert_allclose([r["dev_mean_users"] for r in rep.rows], 0.0, atol=1e-9)
    assert rep.summary["throughput"]["median"] == pytest.approx(0.10)


def test_compare_skips_out_of_range(sweep_dir, tmp_path, capsys):
    path = tmp_path / "m.csv"
    _measurements(path, [["night", 5e4, 0.1, 0.1, 1e6], ["day", 2e5, 0.1, 0.1, 1e6]])
    assert main(["compare", str(sweep_dir / "sweep.csv"), str(path)]) == 0
    captured = capsys.readouterr()
    assert "skipped night" in captured.err
    assert "1 rows compared, 1 skipped" in captured.out


def test_compare_empty_table(sweep_dir, tmp_path, capsys):
    path = tmp_path / "m.csv"
    _measurements(path, [])
    assert main(["compare", str(sweep_dir / "sweep.csv"), str(path), "-o", str(tmp_path / "r.csv")]) == 0
    assert "0 rows compared" in capsys.readouterr().out
    assert len(_data_rows(tmp_path / "r.csv")) == 1


def test_compare_total_bits_column(sweep_dir, tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(
        "hour_label,traffic_demand_per_cell,mean_users,busy_fraction,total_bits,total_users\n"
        "h1,200000,0.1,0.1,4e9,2000\n"
    )
    from cellqos.sweep import read_measurements

    (row,) = read_measurements(path)
    assert row["throughput"] == pytest.approx(2e6)


@pytest.mark.parametrize("body", ["hour_label,traffic_demand_per_cell\nh,1\n", "hour_label,traffic_demand_per_cell,mean_users,busy_fraction,throughput\nh,-1,0,0,1\n"])
def test_compare_bad_measurements_exit_2(sweep_dir, tmp_path, body):
    path = tmp_path / "m.csv"
    path.write_text(body)
    assert main(["compare", str(sweep_dir / "sweep.csv"), str(path)]) == 2


def test_diagnose_poisson_and_lattice(tmp_path, capsys):
    win = Window.disc(2.63)
    sample_poisson(4.62, win, 0).to_csv(tmp_path / "poisson.csv")
    hexagonal_lattice(4.62, win).to_csv(tmp_path / "hex.csv")
    assert main(["diagnose", str(tmp_path / "poisson.csv"), "--window", "2.63", "-o", str(tmp_path)]) == 0
    assert "inside" in capsys.readouterr().out
    assert main(["diagnose", str(tmp_path / "hex.csv"), "--window", "0,0,2.63", "-o", str(tmp_path)]) == 0
    assert "OUTSIDE" in capsys.readouterr().out
    lines = (tmp_path / "hex_lfunction.csv").read_text().splitlines()
    assert lines[0].startswith("# units") and lines[1] == "r_km,l_km,envelope_low_km,envelope_high_km"
    assert (tmp_path / "hex_lfunction.png").exists()


def test_diagnose_minimum_input(tmp_path, capsys):
    pts = np.random.default_rng(0).random((10, 2))
    path = tmp_path / "ten.csv"
    path.write_text("x_km,y_km\n" + "".join(f"{x},{y}\n" for x, y in pts))
    assert main(["diagnose", str(path), "--window", "0,0,1,1", "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "10 stations" in out
    path.write_text("x_km,y_km\n" + "".join(f"{x},{y}\n" for x, y in pts[:9]))
    assert main(["diagnose", str(path), "--window", "0,0,1,1", "-o", str(tmp_path)]) == 2


def test_diagnose_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_km,y_km\n1,2\nnot,a number\n")
    assert main(["diagnose", str(path)]) == 2
    assert main(["diagnose", str(tmp_path / "bad.csv"), "--window", "1,2"]) == 2


def test_oracle_command(tmp_path, capsys):
    spec = {"cell_arrival_rate": 1.0, "pixel_rates": [[1, 2e6], [1, 4e6]], "horizon": 20000, "seed": 3}
    path = tmp_path / "cell.json"
    path.write_text(json.dumps(spec))
    assert main(["oracle", str(path)]) == 0
    rows = {r[0]: (float(r[1]), float(r[2])) for r in csv.reader(capsys.readouterr().out.splitlines()[1:])}
    for closed, sim in rows.values():
        assert sim == pytest.approx(closed, rel=0.05)
    path.write_text(json.dumps(dict(spec, colour=1)))
    assert main(["oracle", str(path)]) == 2
    path.write_text(json.dumps(dict(spec, cell_arrival_rate=5.0, horizon=50)))
    assert main(["oracle", str(path)]) == 3


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "cellqos.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "cellqos" in out.stdout
    out = subprocess.run([sys.executable, "-m", "cellqos.cli", "sweep", str(_write(tmp_path, {"bogus": 1}))],
                         capture_output=True, text=True)
    assert out.returncode == 2 and "bogus" in out.stderr

"""Matplotlib figures written next to the delimited sweep outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.4),
    "savefig.dpi": 150,
    "svg.hashsalt": "cellqos",
}


def _kbps(x):
    return np.asarray(x, dtype=float) / 1e3


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _finite(y):
    y = np.asarray(y, dtype=float)
    return np.where(np.isfinite(y), y, np.nan)


def load_figure(rows, model: str, path) -> None:
    """Mean typical-cell load with error bars, mean-cell load and stable fraction."""
    x = _kbps([r["rho_per_cell_bps"] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(x, [r["mean_load"] for r in rows], yerr=[r["load_std"] for r in rows],
                    fmt="o", ms=3, capsize=2, label="typical cell load")
        ax.plot(x, _finite([r["theta_bar"] for r in rows]), "-", label="mean cell load")
        ax.errorbar(x, [r["stable_fraction"] for r in rows], yerr=[r["stable_std"] for r in rows],
                    fmt="s--", ms=3, capsize=2, label="stable fraction")
        ax.set_xlabel("traffic demand per cell [kbit/s]")
        ax.set_ylabel("load, stable fraction")
        ax.set_title(f"{model} interference", fontsize=10)
        ax.legend()
        _save(fig, path)


def users_figure(rows, model: str, path) -> None:
    x = _kbps([r["rho_per_cell_bps"] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(x, _finite([r["n0_over_pis"] for r in rows]), yerr=_finite([r["n_std"] for r in rows]),
                    fmt="o", ms=3, capsize=2, label="typical cell (stable part)")
        ax.plot(x, _finite([r["n_bar"] for r in rows]), "-", label="mean cell")
        ax.set_xlabel("traffic demand per cell [kbit/s]")
        ax.set_ylabel("mean number of users per cell")
        ax.set_title(f"{model} interference", fontsize=10)
        ax.legend()
        _save(fig, path)


def throughput_figure(rows, model: str, path, measurements=None) -> None:
    x = _kbps([r["rho_per_cell_bps"] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(x, _kbps(_finite([r["r0_bps"] for r in rows])), yerr=_kbps(_finite([r["r0_std"] for r in rows])),
                    fmt="o", ms=3, capsize=2, label="typical cell")
        ax.plot(x, _kbps(_finite([r["r_bar_bps"] for r in rows])), "-", label="mean cell")
        if measurements:
            ax.plot(_kbps([m["traffic_demand_per_cell"] for m in measurements]),
                    _kbps([m["throughput"] for m in measurements]), "x", label="measurements")
        ax.set_xlabel("traffic demand per cell [kbit/s]")
        ax.set_ylabel("mean user throughput [kbit/s]")
        ax.set_title(f"{model} interference", fontsize=10)
        ax.legend()
        _save(fig, path)


def l_function_figure(test, path, label: str = "observed") -> None:
    r = test.curve.radii
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.fill_between(r, test.lower, test.upper, color="0.85", label=f"CSR envelope ({len(test.simulated_deviations)} sims)")
        ax.plot(r, r, "k:", lw=1, label="L(r) = r")
        ax.plot(r, test.curve.l_values, "-", label=label)
        ax.set_xlabel("r [km]")
        ax.set_ylabel("L(r) [km]")
        ax.legend()
        _save(fig, path)

"""Run configuration: a nested YAML document whose sections mirror the library modules.

Unknown keys are rejected so that a typo in a physics parameter cannot pass silently.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .estimators import Scenario
from .geometry import Window
from .propagation import PathLossParams, ShadowingParams
from .radio import LinkBudget, RateFunction


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class GeometryConfig:
    window: dict = field(default_factory=lambda: {"kind": "disc", "center": [0.0, 0.0], "radius": 2.63})
    intensity: float = 4.62
    pattern: str = "poisson"


@dataclass
class ShadowingConfig:
    enabled: bool = True
    sigma_db: float = 10.0
    corr_dist: float = 0.05


@dataclass
class PropagationConfig:
    k: float = 7117.0
    beta: float = 3.8
    shadowing: ShadowingConfig = field(default_factory=ShadowingConfig)


@dataclass
class RadioConfig:
    tx_power_dbm: float = 58.0
    noise_dbm: float = -96.0
    pilot_fraction: float = 0.1
    rate_mode: str = "rayleigh_ergodic"
    bandwidth_hz: float = 5e6
    efficiency: float = 0.3


@dataclass
class TrafficConfig:
    rho_per_cell_kbps: list = field(default_factory=lambda: [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 900.0])
    mean_volume_bits: float = 1e6
    models: list = field(default_factory=lambda: ["full", "weighted"])


@dataclass
class SolverConfig:
    tol: float = 1e-4
    max_iter: int = 200
    pixel_size: float = 0.02
    sinr_cap_db: float = 60.0
    guard_margin: float = 0.0


@dataclass
class EstimationConfig:
    n_realizations: int = 30
    base_seed: int = 0
    origin_samples: int = 100_000


@dataclass
class OutputConfig:
    directory: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "dat", "png"])


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self, path=None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=False)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = _build(cls, data or {}, "")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def validate(self) -> None:
        self.scenario()
        rhos = self.traffic.rho_per_cell_kbps
        if not rhos:
            raise ConfigError("traffic.rho_per_cell_kbps: empty sweep")
        if any(not isinstance(r, (int, float)) or r < 0 for r in rhos):
            raise ConfigError("traffic.rho_per_cell_kbps: values must be non-negative numbers")
        if any(b <= a for a, b in zip(rhos, rhos[1:])):
            raise ConfigError("traffic.rho_per_cell_kbps: values must be strictly increasing")
        if not self.traffic.mean_volume_bits > 0:
            raise ConfigError("traffic.mean_volume_bits: must be positive")
        bad = set(self.traffic.models) - {"full", "weighted"}
        if bad or not self.traffic.models:
            raise ConfigError(f"traffic.models: expected a subset of ['full', 'weighted'], got {self.traffic.models}")
        if self.estimation.n_realizations < 2:
            raise ConfigError("estimation.n_realizations: need at least 2")
        if self.estimation.origin_samples < 100:
            raise ConfigError("estimation.origin_samples: need at least 100")
        bad = set(self.outputs.formats) - {"csv", "dat", "png"}
        if bad:
            raise ConfigError(f"outputs.formats: unknown formats {sorted(bad)}")

    def scenario(self) -> Scenario:
        g, p, r, s = self.geometry, self.propagation, self.radio, self.solver
        sh = p.shadowing
        window = _section("geometry.window", Window.from_dict, g.window)
        pathloss = _section("propagation", PathLossParams, p.k, p.beta)
        shadowing = _section("propagation.shadowing", ShadowingParams, sh.sigma_db, sh.corr_dist, sh.enabled)
        budget = _section("radio", LinkBudget, r.tx_power_dbm, r.noise_dbm, r.pilot_fraction, s.sinr_cap_db)
        rate = _section("radio", RateFunction, r.rate_mode, r.bandwidth_hz, r.efficiency)
        if not s.pixel_size > 0:
            raise ConfigError("solver.pixel_size: must be positive")
        if not s.tol > 0:
            raise ConfigError("solver.tol: must be positive")
        if s.max_iter < 1:
            raise ConfigError("solver.max_iter: must be at least 1")
        return _section(
            "geometry",
            Scenario,
            window=window,
            intensity=g.intensity,
            pattern=g.pattern,
            pathloss=pathloss,
            shadowing=shadowing,
            budget=budget,
            rate=rate,
            pixel_size=s.pixel_size,
            guard_margin=s.guard_margin,
            tol=s.tol,
            max_iter=s.max_iter,
        )


def _section(label, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{label}: {exc}") from exc


def _build(cls, data, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        names = ", ".join(f"{prefix}{k}" for k in sorted(unknown))
        raise ConfigError(f"unknown configuration key(s): {names}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub = f.type if isinstance(f.type, type) else _SECTIONS.get(f.type)
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{prefix}{name}.")
        else:
            kwargs[name] = _check_scalar(value, f.type, f"{prefix}{name}")
    return cls(**kwargs)


_SCALARS = {"float": (int, float), "int": (int,), "bool": (bool,), "str": (str,), "list": (list,), "dict": (dict,)}


def _check_scalar(value, type_name: str, where: str):
    expected = _SCALARS.get(type_name)
    if expected is None:
        return value
    ok = isinstance(value, expected) and not (type_name in ("float", "int") and isinstance(value, bool))
    if not ok:
        raise ConfigError(f"{where}: expected {type_name}, got {value!r}")
    return float(value) if type_name == "float" else value


_SECTIONS = {
    "GeometryConfig": GeometryConfig,
    "ShadowingConfig": ShadowingConfig,
    "PropagationConfig": PropagationConfig,
    "RadioConfig": RadioConfig,
    "TrafficConfig": TrafficConfig,
    "SolverConfig": SolverConfig,
    "EstimationConfig": EstimationConfig,
    "OutputConfig": OutputConfig,
}

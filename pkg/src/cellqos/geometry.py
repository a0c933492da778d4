"""Base-station point patterns, observation windows and Ripley's L-function."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist


@dataclass(frozen=True)
class Window:
    """Observation window: a disc (``radius`` > 0) or an axis-aligned rectangle.

    Coordinates are in km.
    """

    kind: str = "disc"
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind == "disc":
            if not self.radius > 0:
                raise ValueError(f"disc radius must be positive, got {self.radius}")
        elif self.kind == "rectangle":
            x0, y0, x1, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"degenerate rectangle {self.bounds}")
        else:
            raise ValueError(f"unknown window kind {self.kind!r}")

    @classmethod
    def disc(cls, radius: float, center=(0.0, 0.0)) -> "Window":
        return cls(kind="disc", center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "Window":
        return cls(kind="rectangle", bounds=(float(x0), float(y0), float(x1), float(y1)))

    @property
    def area(self) -> float:
        if self.kind == "disc":
            return math.pi * self.radius**2
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    @property
    def centroid(self) -> tuple[float, float]:
        if self.kind == "disc":
            return self.center
        x0, y0, x1, y1 = self.bounds
        return ((x0 + x1) / 2, (y0 + y1) / 2)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        if self.kind == "disc":
            cx, cy = self.center
            r = self.radius
            return (cx - r, cy - r, cx + r, cy + r)
        return self.bounds

    @property
    def diameter(self) -> float:
        if self.kind == "disc":
            return 2 * self.radius
        x0, y0, x1, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if self.kind == "disc":
            cx, cy = self.center
            return (xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2 <= self.radius**2
        x0, y0, x1, y1 = self.bounds
        return (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)

    def shrink(self, margin: float) -> "Window":
        """Window eroded by ``margin`` km (used for guard-margin statistics)."""
        if margin <= 0:
            return self
        if self.kind == "disc":
            return Window.disc(self.radius - margin, self.center)
        x0, y0, x1, y1 = self.bounds
        return Window.rectangle(x0 + margin, y0 + margin, x1 - margin, y1 - margin)

    def overlap_area(self, dx, dy) -> np.ndarray:
        """Area of W intersected with W translated by (dx, dy)."""
        dx = np.asarray(dx, dtype=float)
        dy = np.asarray(dy, dtype=float)
        if self.kind == "disc":
            r = self.radius
            d = np.minimum(np.hypot(dx, dy), 2 * r)
            return 2 * r**2 * np.arccos(d / (2 * r)) - 0.5 * d * np.sqrt(4 * r**2 - d**2)
        x0, y0, x1, y1 = self.bounds
        return np.clip((x1 - x0) - np.abs(dx), 0, None) * np.clip((y1 - y0) - np.abs(dy), 0, None)

    def uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` i.i.d. uniform points in the window."""
        if self.kind == "disc":
            cx, cy = self.center
            rr = self.radius * np.sqrt(rng.random(n))
            phi = 2 * np.pi * rng.random(n)
            return np.column_stack([cx + rr * np.cos(phi), cy + rr * np.sin(phi)])
        x0, y0, x1, y1 = self.bounds
        u = rng.random((n, 2))
        return np.column_stack([x0 + (x1 - x0) * u[:, 0], y0 + (y1 - y0) * u[:, 1]])

    def to_dict(self) -> dict:
        if self.kind == "disc":
            return {"kind": "disc", "center": list(self.center), "radius": self.radius}
        return {"kind": "rectangle", "bounds": list(self.bounds)}

    @classmethod
    def from_dict(cls, d: dict) -> "Window":
        d = dict(d)
        kind = d.pop("kind", "disc")
        if kind == "disc":
            unknown = set(d) - {"center", "radius"}
            if unknown:
                raise ValueError(f"unknown window keys: {sorted(unknown)}")
            return cls.disc(d["radius"], d.get("center", (0.0, 0.0)))
        unknown = set(d) - {"bounds"}
        if unknown:
            raise ValueError(f"unknown window keys: {sorted(unknown)}")
        return cls.rectangle(*d["bounds"])


@dataclass
class BsPattern:
    points: np.ndarray
    intensity: float
    window: Window
    seed: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.points)

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write("# units: km\n")
            w = csv.writer(fh)
            w.writerow(["x_km", "y_km"])
            for x, y in self.points:
                w.writerow([repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path, window: Window | None = None, intensity: float | None = None) -> "BsPattern":
        """Read a station CSV (header ``x_km,y_km``; ``#`` lines ignored).

        Without an explicit window the bounding rectangle of the points is used,
        and without an intensity the empirical one.
        """
        rows = []
        with Path(path).open() as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["x_km", "y_km"]:
                raise ValueError(f"{path}: expected header 'x_km,y_km', got {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}: malformed row {lineno}: {row}") from exc
        pts = np.array(rows, dtype=float).reshape(-1, 2)
        if window is None:
            if len(pts) < 2:
                raise ValueError(f"{path}: need a window for fewer than 2 points")
            window = Window.rectangle(*pts.min(axis=0), *pts.max(axis=0))
        if intensity is None:
            intensity = len(pts) / window.area
        return cls(pts, intensity, window)


@dataclass
class LCurve:
    radii: np.ndarray
    l_values: np.ndarray
    n_points: int

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.l_values - self.radii)))


def sample_poisson(intensity: float, window: Window, seed: int) -> BsPattern:
    """Homogeneous Poisson pattern of the given intensity (per km²) in ``window``."""
    if not intensity > 0:
        raise ValueError(f"intensity must be positive, got {intensity}")
    rng = np.random.default_rng(seed)
    n = rng.poisson(intensity * window.area)
    return BsPattern(window.uniform(n, rng), intensity, window, seed)


def lattice_pitch(intensity: float) -> float:
    """Nearest-neighbour distance of a triangular lattice with ``intensity`` points per km²."""
    return math.sqrt(2.0 / (intensity * math.sqrt(3.0)))


def hexagonal_lattice(intensity: float, window: Window) -> BsPattern:
    """Triangular lattice (hexagonal cells) centred on the window, truncated to it."""
    if not intensity > 0:
        raise ValueError(f"intensity must be positive, got {intensity}")
    a = lattice_pitch(intensity)
    cx, cy = window.centroid
    x0, y0, x1, y1 = window.bbox
    row_h = a * math.sqrt(3) / 2
    jmax = int(math.ceil(max(y1 - cy, cy - y0) / row_h)) + 1
    imax = int(math.ceil(max(x1 - cx, cx - x0) / a)) + 2
    j, i = np.meshgrid(np.arange(-jmax, jmax + 1), np.arange(-imax, imax + 1), indexing="ij")
    x = cx + a * (i + 0.5 * (j % 2))
    y = cy + row_h * j
    pts = np.column_stack([x.ravel(), y.ravel()])
    pts = pts[window.contains(pts)]
    return BsPattern(pts, intensity, window, None)


def ripley_k(pattern: BsPattern, radii) -> np.ndarray:
    """Translation-corrected estimate of Ripley's K."""
    radii = np.asarray(radii, dtype=float)
    n = len(pattern)
    if n < 2:
        raise ValueError("Ripley's K needs at least 2 points")
    win = pattern.window
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if np.any(radii > win.diameter / 2 + 1e-12):
        raise ValueError(f"radii must not exceed half the window diameter ({win.diameter / 2:g} km)")
    pts = pattern.points
    d = pdist(pts)
    i, j = np.triu_indices(n, k=1)
    delta = pts[i] - pts[j]
    weight = 1.0 / win.overlap_area(delta[:, 0], delta[:, 1])
    order = np.argsort(d)
    cum = np.concatenate([[0.0], np.cumsum(weight[order])])
    counts = cum[np.searchsorted(d[order], radii, side="right")]
    # each unordered pair stands for two ordered pairs
    return win.area**2 / (n * (n - 1)) * 2 * counts


def ripley_l(pattern: BsPattern, radii) -> LCurve:
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    k = ripley_k(pattern, radii)
    return LCurve(radii, np.sqrt(k / np.pi), len(pattern))


@dataclass
class EnvelopeTest:
    curve: LCurve
    lower: np.ndarray
    upper: np.ndarray
    critical_deviation: float
    simulated_deviations: np.ndarray = field(repr=False)

    @property
    def inside(self) -> bool:
        return self.curve.max_deviation <= self.critical_deviation

    @property
    def p_value(self) -> float:
        """Monte Carlo rank p-value of the observed max |L(r) - r|."""
        sims = self.simulated_deviations
        return (1 + np.sum(sims >= self.curve.max_deviation)) / (1 + len(sims))


def l_envelope_test(pattern: BsPattern, radii, n_sim: int = 99, seed: int = 0) -> EnvelopeTest:
    """Global max-deviation envelope for L(r) - r under complete spatial randomness.

    Simulations are binomial patterns with the same point count in the same window.
    The curve is inside iff its max deviation does not exceed the largest simulated one,
    which gives a test of level 1/(n_sim + 1).
    """
    radii = np.asarray(radii, dtype=float)
    curve = ripley_l(pattern, radii)
    rng = np.random.default_rng(seed)
    n = len(pattern)
    sims = np.empty(n_sim)
    for k in range(n_sim):
        sim = BsPattern(pattern.window.uniform(n, rng), pattern.intensity, pattern.window)
        sims[k] = ripley_l(sim, radii).max_deviation
    crit = float(sims.max())
    return EnvelopeTest(curve, radii - crit, radii + crit, crit, sims)

"""Distance path loss, correlated log-normal shadowing and station-to-pixel loss maps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .geometry import BsPattern, Window

log = logging.getLogger(__name__)

DB_TO_NEPER = math.log(10) / 10


@dataclass(frozen=True)
class PathLossParams:
    k: float = 7117.0
    beta: float = 3.8

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"path-loss constant k must be positive, got {self.k}")
        if not self.beta > 2:
            raise ValueError(f"path-loss exponent must exceed 2, got {self.beta}")


@dataclass(frozen=True)
class ShadowingParams:
    sigma_db: float = 10.0
    corr_dist: float = 0.05
    enabled: bool = True

    def __post_init__(self):
        if self.sigma_db < 0:
            raise ValueError(f"sigma_db must be non-negative, got {self.sigma_db}")
        if self.enabled and not self.corr_dist > 0:
            raise ValueError(f"corr_dist must be positive, got {self.corr_dist}")

    @property
    def sigma_log(self) -> float:
        """Standard deviation of ln S."""
        return self.sigma_db * DB_TO_NEPER

    @property
    def active(self) -> bool:
        return self.enabled and self.sigma_db > 0


@dataclass
class Grid:
    """Square-pixel raster over the window bounding box; only in-window pixels are kept."""

    window: Window
    pixel_size: float = 0.02
    nx: int = field(init=False)
    ny: int = field(init=False)
    x: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)
    mask: np.ndarray = field(init=False, repr=False)
    xy: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.pixel_size > 0:
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size}")
        x0, y0, x1, y1 = self.window.bbox
        h = self.pixel_size
        self.nx = max(1, int(math.ceil((x1 - x0) / h - 1e-9)))
        self.ny = max(1, int(math.ceil((y1 - y0) / h - 1e-9)))
        # raster centred on the bounding box
        ox = (x0 + x1) / 2 - self.nx * h / 2
        oy = (y0 + y1) / 2 - self.ny * h / 2
        self.x = ox + h * (np.arange(self.nx) + 0.5)
        self.y = oy + h * (np.arange(self.ny) + 0.5)
        gx, gy = np.meshgrid(self.x, self.y)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        self.mask = self.window.contains(pts).reshape(self.ny, self.nx)
        self.xy = pts[self.mask.ravel()]

    @property
    def n_pixels(self) -> int:
        return len(self.xy)

    @property
    def pixel_area(self) -> float:
        return self.pixel_size**2


@dataclass
class PropagationMap:
    loss: np.ndarray  # (n_stations, n_pixels)
    grid: Grid
    pattern: BsPattern
    seed: int | None = None
    shadowing: np.ndarray | None = field(default=None, repr=False)


def path_loss(r, params: PathLossParams):
    """(k r)^beta; zero at r = 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    out = (params.k * r) ** params.beta
    return out if out.ndim else float(out)


@lru_cache(maxsize=8)
def _circulant_sqrt_eigs(ny: int, nx: int, pixel_size: float, corr_dist: float) -> np.ndarray:
    """Square-root eigenvalues of the exponential covariance embedded on a 2x periodic torus."""
    my = sfft.next_fast_len(2 * ny)
    mx = sfft.next_fast_len(2 * nx)
    dy = np.minimum(np.arange(my), my - np.arange(my)) * pixel_size
    dx = np.minimum(np.arange(mx), mx - np.arange(mx)) * pixel_size
    d = np.hypot(dy[:, None], dx[None, :])
    eig = sfft.fft2(np.exp(-d / corr_dist)).real
    neg = eig < 0
    if neg.any():
        lost = -eig[neg].sum() / np.abs(eig).sum()
        if lost > 1e-6:
            log.warning("circulant embedding not positive definite; clipped %.2e of spectral mass", lost)
        eig[neg] = 0.0
    return np.sqrt(eig / (my * mx))


def gaussian_field_pairs(grid: Grid, corr_dist: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent unit-variance Gaussian fields with covariance exp(-d/corr_dist).

    Circulant embedding: one complex FFT gives two independent real fields.
    Returns an array (count, n_pixels) restricted to in-window pixels.
    """
    lam = _circulant_sqrt_eigs(grid.ny, grid.nx, float(grid.pixel_size), float(corr_dist))
    my, mx = lam.shape
    out = np.empty((count, grid.n_pixels))
    flat_mask = grid.mask
    k = 0
    while k < count:
        z = rng.standard_normal((my, mx)) + 1j * rng.standard_normal((my, mx))
        f = sfft.fft2(lam * z)[: grid.ny, : grid.nx]
        out[k] = f.real[flat_mask]
        k += 1
        if k < count:
            out[k] = f.imag[flat_mask]
            k += 1
    return out


def sample_shadowing_fields(pattern: BsPattern, grid: Grid, params: ShadowingParams, seed: int) -> np.ndarray:
    """Per-station log-normal shadowing S_X(y) on the grid pixels, median 1.

    The underlying Gaussian field has correlation exp(-d / corr_dist).
    """
    n = len(pattern)
    if not params.active:
        return np.ones((n, grid.n_pixels))
    if grid.pixel_size > params.corr_dist:
        log.warning(
            "pixel size %.3g km exceeds shadowing correlation distance %.3g km", grid.pixel_size, params.corr_dist
        )
    rng = np.random.default_rng(seed)
    g = gaussian_field_pairs(grid, params.corr_dist, n, rng)
    g *= params.sigma_log
    return np.exp(g, out=g)


def build_propagation_map(
    pattern: BsPattern,
    grid: Grid,
    pl: PathLossParams,
    sh: ShadowingParams | None = None,
    seed: int | None = None,
) -> PropagationMap:
    d = np.hypot(
        grid.xy[None, :, 0] - pattern.points[:, 0, None],
        grid.xy[None, :, 1] - pattern.points[:, 1, None],
    )
    loss = path_loss(d, pl)
    shadow = None
    if sh is not None and sh.active:
        shadow = sample_shadowing_fields(pattern, grid, sh, 0 if seed is None else seed)
        loss /= shadow
    return PropagationMap(np.atleast_2d(loss), grid, pattern, seed, shadow)


def lognormal_equivalence_moment(sigma_db: float, beta: float) -> float:
    """E[S^(2/beta)] for median-one log-normal S with log-std ``sigma_db`` dB."""
    if not beta > 2:
        raise ValueError(f"beta must exceed 2, got {beta}")
    t = 2.0 / beta
    s = sigma_db * DB_TO_NEPER
    return math.exp((t * s) ** 2 / 2)

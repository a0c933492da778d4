"""Discrete-event simulation of a single cell as a multi-class processor-sharing queue.

Used as an independent check of the closed-form cell metrics.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

MAX_CLASSES = 200


@dataclass
class QueueOracleResult:
    empirical_mean_users: float
    empirical_mean_throughput: float  # bit/s
    empirical_busy_fraction: float
    departures: int
    load: float
    critical_traffic: float  # bit/s
    stationary: bool


def rate_classes(pixel_rates, max_classes: int = MAX_CLASSES) -> tuple[np.ndarray, np.ndarray]:
    """Merge (weight, peak rate) pairs into at most ``max_classes`` classes of equal weight.

    Each class keeps the harmonic mean of its members' rates, so the cell's mean
    inverse rate is unchanged.
    """
    arr = np.asarray(pixel_rates, dtype=float).reshape(-1, 2)
    w, rate = arr[:, 0], arr[:, 1]
    keep = w > 0
    w, rate = w[keep], rate[keep]
    if len(w) == 0:
        raise ValueError("no pixel with positive weight")
    if np.any(rate <= 0):
        raise ValueError("peak rates must be positive")
    w = w / w.sum()
    if len(w) <= max_classes:
        return w, rate
    order = np.argsort(rate)
    w, rate = w[order], rate[order]
    cum = np.cumsum(w) - w / 2
    b = np.minimum((cum * max_classes).astype(int), max_classes - 1)
    cw = np.bincount(b, weights=w, minlength=max_classes)
    cinv = np.bincount(b, weights=w / rate, minlength=max_classes)
    used = cw > 0
    return cw[used], cw[used] / cinv[used]


def ps_queue_oracle(
    cell_arrival_rate: float,
    volume_dist: str,
    mean_volume_bits: float,
    pixel_rates,
    horizon: float,
    seed: int = 0,
    warmup: float = 0.05,
) -> QueueOracleResult:
    """Simulate Poisson arrivals into one processor-sharing cell.

    A user with volume v at peak rate R needs v / R seconds alone; with n users
    present everyone advances at 1/n of that speed. Implemented with a virtual clock
    that runs at 1/n, so each event costs O(log n).

    Statistics are collected after ``warmup * horizon``. Mean throughput is the mean
    departed volume over the mean sojourn.
    """
    if volume_dist not in ("exponential", "deterministic"):
        raise ValueError(f"unknown volume distribution {volume_dist!r}")
    if not cell_arrival_rate > 0 or not horizon > 0:
        raise ValueError("arrival rate and horizon must be positive")
    weights, rates = rate_classes(pixel_rates)
    mean_inv = float(np.sum(weights / rates))
    load = cell_arrival_rate * mean_volume_bits * mean_inv
    rho_c = 1.0 / mean_inv
    stationary = load < 1
    if not stationary:
        log.warning("cell load %.3f >= 1: the queue is not stationary", load)

    rng = np.random.default_rng(seed)
    # pre-draw in blocks to keep the event loop in plain Python floats
    block = 65536

    def draws():
        while True:
            gaps = rng.exponential(1.0 / cell_arrival_rate, block)
            cls = rng.choice(len(rates), size=block, p=weights)
            if volume_dist == "exponential":
                vol = rng.exponential(mean_volume_bits, block)
            else:
                vol = np.full(block, mean_volume_bits)
            yield from zip(gaps.tolist(), (vol / rates[cls]).tolist(), vol.tolist())

    stream = draws()
    t0 = warmup * horizon
    t = 0.0
    vclock = 0.0
    heap: list[tuple[float, float, float]] = []  # (virtual finish, arrival time, volume)
    gap, work, vol = next(stream)
    next_arrival = gap
    area_n = 0.0
    busy = 0.0
    n_dep = 0
    sum_sojourn = 0.0
    sum_vol = 0.0

    while True:
        n = len(heap)
        t_dep = t + (heap[0][0] - vclock) * n if n else math.inf
        t_next = min(next_arrival, t_dep, horizon)
        if t_next > t0 and n:
            span = t_next - max(t, t0)
            area_n += n * span
            busy += span
        if n:
            vclock += (t_next - t) / n
        t = t_next
        if t >= horizon:
            break
        if t_dep <= next_arrival:
            _, arrived, v = heapq.heappop(heap)
            if arrived >= t0:
                n_dep += 1
                sum_sojourn += t - arrived
                sum_vol += v
            if not heap:
                # idle period: reset the virtual clock to avoid drift
                vclock = 0.0
        else:
            heapq.heappush(heap, (vclock + work, t, vol))
            gap, work, vol = next(stream)
            next_arrival = t + gap

    span = horizon - t0
    thr = (sum_vol / n_dep) / (sum_sojourn / n_dep) if n_dep else 0.0
    return QueueOracleResult(area_n / span, thr, busy / span, n_dep, load, rho_c, stationary)

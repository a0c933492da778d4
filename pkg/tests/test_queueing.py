import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellqos.queueing import ps_queue_oracle, rate_classes


def test_uniform_rate_half_load():
    # rate 2 Mbit/s, 1 Mbit volumes, one arrival per second: theta = 0.5
    res = ps_queue_oracle(1.0, "exponential", 1e6, [(1.0, 2e6)], horizon=40_000, seed=1)
    assert res.load == pytest.approx(0.5)
    assert res.departures >= 10_000
    assert res.empirical_mean_users == pytest.approx(1.0, rel=0.05)
    assert res.empirical_busy_fraction == pytest.approx(0.5, rel=0.05)
    assert res.empirical_mean_throughput == pytest.approx(1e6, rel=0.05)


def test_volume_insensitivity():
    rates = [(0.3, 1e6), (0.5, 3e6), (0.2, 8e6)]
    kw = dict(cell_arrival_rate=1.2, mean_volume_bits=1e6, pixel_rates=rates, horizon=40_000, seed=2)
    exp = ps_queue_oracle(volume_dist="exponential", **kw)
    det = ps_queue_oracle(volume_dist="deterministic", **kw)
    assert det.empirical_mean_users == pytest.approx(exp.empirical_mean_users, rel=0.05)
    theta = exp.load
    assert det.empirical_mean_users == pytest.approx(theta / (1 - theta), rel=0.05)


def test_unstable_flagged(caplog):
    res = ps_queue_oracle(3.0, "exponential", 1e6, [(1.0, 2e6)], horizon=100, seed=0)
    assert not res.stationary
    assert res.load == pytest.approx(1.5)
    assert "not stationary" in caplog.text


def test_oracle_input_errors():
    with pytest.raises(ValueError):
        ps_queue_oracle(1.0, "pareto", 1e6, [(1, 1e6)], 10)
    with pytest.raises(ValueError):
        ps_queue_oracle(0.0, "exponential", 1e6, [(1, 1e6)], 10)
    with pytest.raises(ValueError):
        ps_queue_oracle(1.0, "exponential", 1e6, [(1, 0.0)], 10)
    with pytest.raises(ValueError):
        ps_queue_oracle(1.0, "exponential", 1e6, [(0, 1e6)], 10)


def test_oracle_deterministic():
    a = ps_queue_oracle(0.5, "exponential", 1e6, [(1, 2e6), (1, 1e6)], 2000, seed=5)
    b = ps_queue_oracle(0.5, "exponential", 1e6, [(1, 2e6), (1, 1e6)], 2000, seed=5)
    assert a == b


@given(st.integers(1, 3000), st.integers(0, 1000))
def test_rate_classes_preserve_harmonic_mean(n, seed):
    rng = np.random.default_rng(seed)
    pairs = np.column_stack([rng.random(n) + 0.01, np.exp(rng.normal(14, 1.5, n))])
    w, r = rate_classes(pairs, 200)
    assert len(w) <= 200
    assert w.sum() == pytest.approx(1.0)
    ref = np.sum(pairs[:, 0] / pairs[:, 1]) / pairs[:, 0].sum()
    assert np.sum(w / r) == pytest.approx(ref, rel=1e-10)

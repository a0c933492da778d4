import math

import numpy as np
import pytest

from cellqos.estimators import (
    CellStats,
    OriginSamples,
    aggregate,
    mean_cell_full,
    origin_link_samples,
    shadowing_equivalence_check,
    simulate_realization,
    solve_mean_cell_equation,
    typical_cell_estimate,
    typical_cell_sweep,
)
from cellqos.propagation import PathLossParams, ShadowingParams
from cellqos.qos import TrafficModel
from cellqos.radio import LinkBudget, RateFunction, rate_table

RF = RateFunction()
BUDGET = LinkBudget()
PL = PathLossParams()
LAM = 4.62


@pytest.fixture(scope="module")
def small_run(small_scenario):
    return typical_cell_sweep(small_scenario, [0.0, 1e5, 4e5, 3e6], ("full", "weighted"), 4, base_seed=11)


def test_sweep_determinism(small_scenario):
    a = typical_cell_sweep(small_scenario, [2e5], ("weighted",), 2, base_seed=5)
    b = typical_cell_sweep(small_scenario, [2e5], ("weighted",), 2, base_seed=5)
    assert a.points[0].typical.mean_load == b.points[0].typical.mean_load
    assert a.points[0].mean_cell.theta_bar == b.points[0].mean_cell.theta_bar


def test_sweep_argument_checks(small_scenario):
    with pytest.raises(ValueError):
        typical_cell_sweep(small_scenario, [1e5], n_realizations=1)
    with pytest.raises(ValueError):
        typical_cell_sweep(small_scenario, [2e5, 1e5], n_realizations=2)


def test_zero_traffic_limit(small_run):
    for p in small_run.points[:2]:
        t = p.typical
        assert t.mean_load == 0 and t.stable_fraction == 1
        # light traffic: r0 is the mean critical traffic of the mean cell; r0 uses the
        # nominal intensity, the pixel pool the realized one
        assert t.r0 == pytest.approx(p.mean_cell.rho_c_bar / t.area_x_intensity, rel=0.01)
        assert p.mean_cell.r_bar == pytest.approx(p.mean_cell.rho_c_bar)


def test_throughput_identity(small_run):
    for p in small_run.points:
        t = p.typical
        assert t.throughput_identity_residual() <= 1e-9 * max(t.traffic_density * t.stable_fraction, 1.0)
        assert 0 <= t.stable_fraction <= 1


def test_full_stable_r0_equals_rho_bar_over_n(small_scenario):
    run = typical_cell_sweep(small_scenario, [2e5], ("full",), 3, base_seed=2)
    stats = run.per_realization[(0, "full")]
    t = run.points[0].typical
    assert t.stable_fraction == 1
    n_mean = np.mean([s.n0 for s in stats])
    assert t.r0 == pytest.approx(2e5 / n_mean, rel=1e-12)


def test_weighted_below_full(small_run):
    by = {(p.rho_per_cell, p.model): p for p in small_run.points}
    for rho in (1e5, 4e5, 3e6):
        assert by[(rho, "weighted")].typical.mean_load <= by[(rho, "full")].typical.mean_load
        assert by[(rho, "weighted")].mean_cell.theta_bar <= by[(rho, "full")].mean_cell.theta_bar


def test_mean_cell_theta_monotone(small_run):
    for model in ("full", "weighted"):
        th = [p.mean_cell.theta_bar for p in small_run.points if p.model == model]
        assert all(b >= a for a, b in zip(th, th[1:]))


def test_mean_cell_constant_sinr():
    tr = TrafficModel.per_cell(3e5, LAM)
    r0 = rate_table(RF).rate(np.array([2.0]))[0]
    mc = mean_cell_full(tr, LAM, np.full(100, 2.0), RF)
    assert mc.theta_bar == pytest.approx(3e5 / r0)
    assert mc.rho_c_bar == pytest.approx(mc.rho_bar / mc.theta_bar)
    assert mc.r_bar == pytest.approx(max(mc.rho_c_bar - mc.rho_bar, 0))
    assert mc.n_bar == pytest.approx(mc.theta_bar / (1 - mc.theta_bar))


def test_mean_cell_unstable():
    mc = mean_cell_full(TrafficModel.per_cell(1e8, LAM), LAM, np.full(10, 1.0), RF)
    assert mc.theta_bar >= 1 and not mc.stable
    assert mc.r_bar == 0 and math.isinf(mc.n_bar)
    with pytest.raises(ValueError):
        mean_cell_full(TrafficModel.per_cell(1e5, LAM), LAM, np.array([]), RF)


@pytest.fixture(scope="module")
def origin():
    return origin_link_samples(LAM, PL, ShadowingParams(10, 0.05), BUDGET, 20_000, seed=3)


def test_mean_cell_equation_limits(origin):
    assert solve_mean_cell_equation(TrafficModel(0.0), LAM, origin, RF).theta_bar == 0
    tiny = solve_mean_cell_equation(TrafficModel.per_cell(1.0, LAM), LAM, origin, RF)
    assert tiny.theta_bar < 1e-5
    tr = TrafficModel.per_cell(5e5, LAM)
    always_on = solve_mean_cell_equation(tr, LAM, origin, RF, pilot_fraction=1.0)
    full = mean_cell_full(tr, LAM, origin, RF)
    assert always_on.theta_bar == pytest.approx(full.theta_bar, rel=1e-12)


def test_mean_cell_equation_root(origin):
    tr = TrafficModel.per_cell(6e5, LAM)
    mc = solve_mean_cell_equation(tr, LAM, origin, RF)
    w = min(mc.theta_bar, 1) * 0.9 + 0.1
    rhs = 6e5 * rate_table(RF).inverse(origin.sinr(w)).mean()
    assert rhs == pytest.approx(mc.theta_bar, rel=1e-6)
    assert mc.converged


def test_mean_cell_equation_unstable(origin):
    tr = TrafficModel.per_cell(5e7, LAM)
    mc = solve_mean_cell_equation(tr, LAM, origin, RF)
    # weights saturate at one, so the root is the full-interference load
    assert not mc.stable and mc.n_bar == math.inf and mc.r_bar == 0
    assert mc.theta_bar == pytest.approx(mean_cell_full(tr, LAM, origin, RF).theta_bar)
    with pytest.raises(ValueError):
        solve_mean_cell_equation(TrafficModel.per_cell(1e5, LAM), LAM, OriginSamples(np.array([]), np.array([]), 1, 1), RF)


def test_equivalence_no_shadowing():
    res = shadowing_equivalence_check(PL, ShadowingParams(0.0, 0.05), BUDGET, RF, LAM, 20_000, seed=1)
    assert res.density_factor == 1.0
    assert res.ks_distance < 0.02 and res.passed


@pytest.mark.parametrize("lam", [LAM, 0.1])
def test_equivalence_with_shadowing(lam):
    res = shadowing_equivalence_check(PL, ShadowingParams(10.0, 0.05), BUDGET, RF, lam, 20_000, seed=1)
    assert res.density_factor == pytest.approx(2.084, abs=5e-4)
    assert res.ks_distance < 0.03 and res.passed


def test_equivalence_negative_control():
    # at low density noise matters, and dropping the density rescaling is detected
    from scipy import stats

    a = origin_link_samples(0.1, PL, ShadowingParams(10.0, 0.05), BUDGET, 20_000, 5).sinr()
    b = origin_link_samples(0.1, PL, None, BUDGET, 20_000, 6).sinr()
    c = origin_link_samples(0.1 * 2.084, PL, None, BUDGET, 20_000, 7).sinr()
    assert stats.ks_2samp(a, b).statistic > 0.1
    assert stats.ks_2samp(a, c).statistic < 0.03


def test_equivalence_needs_samples():
    with pytest.raises(ValueError):
        shadowing_equivalence_check(PL, ShadowingParams(10.0, 0.05), BUDGET, RF, LAM, 50)


def _stats(pis, n0, integral=1e-6):
    return CellStats(0.5, pis, n0, 10, 1.0, True, 0.0, integral)


def test_aggregate_all_unstable():
    tr = TrafficModel.per_cell(1e6, LAM)
    t = aggregate([_stats(0.0, 0.0), _stats(0.0, 0.0)], tr, LAM, "full")
    assert t.all_unstable and t.r0 == 0 and math.isinf(t.n0_over_pis)


def test_aggregate_reading_of_users():
    tr = TrafficModel.per_cell(1e5, LAM)
    t = aggregate([_stats(0.8, 0.4), _stats(1.0, 0.6)], tr, LAM, "full")
    assert t.n0 == pytest.approx(0.5)
    assert t.n0_over_pis == pytest.approx(0.5 / 0.9)
    assert t.r0 == pytest.approx(tr.traffic_density * 0.9 / (LAM * 0.5))


def test_typical_cell_estimate_wrapper(small_scenario):
    tr = TrafficModel.per_cell(2e5, small_scenario.intensity)
    t = typical_cell_estimate(small_scenario, tr, 2, base_seed=4, model="weighted")
    assert t.n_realizations == 2 and t.model == "weighted"
    assert t.traffic_per_cell == pytest.approx(2e5)


def test_empty_window_realization_raises(small_scenario):
    from dataclasses import replace

    sc = replace(small_scenario, intensity=1e-9)
    with pytest.raises(ValueError):
        simulate_realization(sc, 0, 0)


def test_guard_margin_restricts_statistics(small_scenario):
    from dataclasses import replace

    sc = replace(small_scenario, guard_margin=0.3)
    real = simulate_realization(sc, 0, 1)
    inner = sc.window.shrink(0.3).contains(real.pattern.points)
    np.testing.assert_array_equal(real.inner, inner)
    assert real.inner_pixels.sum() < real.grid.n_pixels

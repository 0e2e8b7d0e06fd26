import math

import numpy as np
import pytest

from healthinvest.boundary import covering_h_grid, solve_surface
from healthinvest.health import health_pre, mortality
from healthinvest.params import g_value
from healthinvest.primal import PrimalPoint, primal_boundary, value_primal
from healthinvest.simulate import (
    PolicyKind, SimConfig, simulate_closed_loop, simulate_health_mortality, summary_rows, trajectory_rows,
    welfare_estimate,
)


def test_health_never_invest_is_pure_decay(params):
    s = simulate_health_mortality(params, 1000.0, params.horizon, n_steps=200)
    np.testing.assert_allclose(s.health, 1000.0 * np.exp(-params.delta * s.times), rtol=1e-14)
    np.testing.assert_allclose(s.mortality, mortality(params, s.health))


def test_health_splice_continuous_with_slope_kink(params):
    n = 2000
    s = simulate_health_mortality(params, 1000.0, 10.0, n_steps=n)
    dt = params.horizon / n
    k = n // 2
    assert s.health[k] == pytest.approx(health_pre(params, 1000.0, 10.0), rel=1e-12)
    left = (s.health[k] - s.health[k - 1]) / dt
    right = (s.health[k + 1] - s.health[k]) / dt
    assert right - left == pytest.approx(params.f_of_I, rel=1e-2)
    with pytest.raises(ValueError):
        simulate_health_mortality(params, 1000.0, 25.0)


def test_post_investment_mortality_eventually_decreasing(params):
    s = simulate_health_mortality(params, 100.0, 0.0, n_steps=400)
    assert s.mortality[-1] < s.mortality[0]
    assert np.all(s.mortality > params.m0)
    assert np.all(s.health > 0)


def test_bank_account(params, surface):
    n, x0 = 50, 100.0
    cfg = SimConfig(n_paths=3, n_steps=n, initial_wealth=x0, policy=PolicyKind.NEVER_INVEST, consumption="zero")
    b = simulate_closed_loop(params, surface, cfg)
    dt = params.horizon / n
    np.testing.assert_allclose(b.terminal_wealth, x0 * (1.0 + params.r * dt) ** n, rtol=1e-12)
    assert welfare_estimate(params, b) == (0.0, 0.0)
    assert np.all(np.isnan(b.invest_time))


def test_seed_determinism_and_threads(params, surface):
    cfg = SimConfig(n_paths=1500, n_steps=60, seed=11, initial_wealth=300.0, record_paths=5)
    a = simulate_closed_loop(params, surface, cfg)
    b = simulate_closed_loop(params, surface, cfg)
    c = simulate_closed_loop(params, surface, SimConfig(**{**cfg.__dict__, "threads": 2}))
    for name in ("wealth", "dual", "consumption", "terminal_wealth", "discounted_utility", "invest_time"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        np.testing.assert_allclose(getattr(a, name), getattr(c, name), rtol=1e-12)
    other = simulate_closed_loop(params, surface, SimConfig(**{**cfg.__dict__, "seed": 12}))
    assert not np.array_equal(a.terminal_wealth, other.terminal_wealth)


def test_welfare_matches_value_and_se_scaling(params, surface):
    x, h = 300.0, 1000.0
    runs = {n: welfare_estimate(params, simulate_closed_loop(
        params, surface, SimConfig(n_paths=n, n_steps=200, seed=5, initial_wealth=x, initial_health=h,
                                   record_paths=1))) for n in (2000, 4000)}
    est, se = runs[4000]
    assert abs(est - value_primal(params, surface, PrimalPoint(0.0, x, h))) <= 3.0 * se
    assert runs[4000][1] / runs[2000][1] == pytest.approx(1.0 / math.sqrt(2.0), rel=0.2)


def test_optimal_beats_fixed_threshold(params, surface):
    out = {}
    for pol in (PolicyKind.OPTIMAL_BOUNDARY, PolicyKind.FIXED_THRESHOLD):
        cfg = SimConfig(n_paths=10_000, n_steps=200, seed=1, initial_wealth=300.0, policy=pol, threshold_scale=2.0,
                        record_paths=1)
        out[pol] = welfare_estimate(params, simulate_closed_loop(params, surface, cfg))
    opt, thr = out[PolicyKind.OPTIMAL_BOUNDARY], out[PolicyKind.FIXED_THRESHOLD]
    assert opt[0] >= thr[0] - 2.0 * thr[1]


def test_invest_immediately_and_post_floor(params, surface):
    g0 = g_value(params, 0.0)
    cfg = SimConfig(n_paths=1000, n_steps=4, seed=1, initial_wealth=1.5 * g0,
                    policy=PolicyKind.INVEST_IMMEDIATELY, record_paths=1000, scheme="euler")
    b = simulate_closed_loop(params, surface, cfg)
    assert np.all(b.invest_time == 0.0)
    hit = b.absorbed
    assert 0 < hit.sum() < 1000                # coarse Euler steps cross the admissibility floor
    floors = g_value(params, b.times)
    for i in np.flatnonzero(hit)[:20]:
        k = int(np.argmax(b.wealth[i] <= floors + 1e-12))
        assert b.wealth[i, k] == pytest.approx(floors[k])
        assert np.all(b.consumption[i, k:] == 0.0)
    assert np.all(b.health > 0)


def test_wealth_tracks_dual_identity(params, surface):
    """Before investing, X_s = -J_z(s, Z_s, H_s); the gap shrinks with the step."""
    gaps = []
    for n, q in ((25, 4), (50, 2), (100, 1)):           # one Brownian path, step halved twice
        cfg = SimConfig(n_paths=50, n_steps=n, substeps=q, seed=4, initial_dual=3.0, initial_health=1000.0,
                        record_paths=1)
        gaps.append(np.nanmax(simulate_closed_loop(params, surface, cfg, track_identity=True).identity_gap))
    assert gaps[0] > gaps[1] > gaps[2]


def test_identity_gap_median_is_first_order(params, surface):
    """The typical path gap halves with the step; the worst path is too noisy to show a clean rate."""
    med = []
    for n, q in ((100, 4), (200, 2), (400, 1)):
        cfg = SimConfig(n_paths=100, n_steps=n, substeps=q, seed=5, initial_dual=3.0, initial_health=1000.0,
                        record_paths=1)
        med.append(np.nanmedian(simulate_closed_loop(params, surface, cfg, track_identity=True).identity_gap))
    ratios = np.array(med[1:]) / np.array(med[:-1])
    assert np.all(ratios < 0.7), ratios


@pytest.mark.parametrize("h,later", [(1000.0, False), (2.0, True)])
def test_investment_time_moves_with_health_decay(params, h, later):
    """Faster decay brings investment forward for the healthy agent and delays it for the sick one."""
    x = 0.85 * primal_boundary(params, solve_surface(params, covering_h_grid(params, [h]), 60, refine=0), 0.0, h)
    med = []
    for d in (0.0055, 0.022):
        q = params.replace(delta=d)
        surf = solve_surface(q, covering_h_grid(q, [h]), 60, refine=0)
        b = simulate_closed_loop(q, surf, SimConfig(n_paths=2000, n_steps=200, seed=3, initial_wealth=x,
                                                    initial_health=h, record_paths=1))
        med.append(np.median(np.where(np.isnan(b.invest_time), np.inf, b.invest_time)))
    assert (med[1] > med[0]) if later else (med[1] < med[0])


def test_rows_and_config_validation(params, surface):
    b = simulate_closed_loop(params, surface, SimConfig(n_paths=4, n_steps=10, initial_wealth=50.0, record_paths=2))
    assert len(list(summary_rows(b))) == 4
    assert len(list(trajectory_rows(b))) == 2 * len(b.times)
    for bad in ({"n_paths": 0}, {"n_steps": 1}, {"scheme": "rk4"}, {"consumption": "some"}, {"initial_health": 0.0}):
        with pytest.raises(ValueError):
            SimConfig(**bad)
    with pytest.raises(ValueError):
        simulate_closed_loop(params, surface, SimConfig(t0=params.horizon))

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from healthinvest.params import (
    TABLE1, ModelParams, ParameterError, derived, g_rate, g_value, load_params, params_from_mapping, validate,
)


def test_baseline_accepted():
    p = validate(ModelParams())
    assert (p.r, p.mu, p.sigma, p.rho) == (0.048, 0.108, 0.20, 0.05)
    assert (p.m0, p.m1, p.kappa, p.delta) == (0.0237, 0.0017, 1.80, 0.0055)
    assert (p.alpha, p.beta, p.invest_amount, p.horizon) == (0.2258, 0.19, 2.0, 20.0)
    assert TABLE1 == p


@pytest.mark.parametrize("change, message", [
    ({"alpha": 1.0}, "alpha must lie in (0,1)"),
    ({"sigma": 0.0}, "sigma must be positive"),
    ({"beta": 0.0}, "beta must lie in (0,1)"),
    ({"m1": -1e-3}, "m1 must be non-negative"),
    ({"r": 0.0}, "r must be positive"),
    ({"delta": float("nan")}, "delta must be a finite number"),
])
def test_invalid_parameters(change, message):
    with pytest.raises(ParameterError, match=message.replace("(", r"\(").replace(")", r"\)")):
        ModelParams().replace(**change)


def test_derived_constants(params):
    d = derived(params)
    assert d.theta == (params.mu - params.r) / params.sigma
    assert d.f_of_I == params.invest_amount ** params.beta
    assert d.g_profile(params.horizon) == 0.0


def test_g_value_examples(params):
    assert g_value(params, params.horizon) == 0.0
    assert g_value(params, 0.0) == pytest.approx(2.0 / 0.048 * (1.0 - math.exp(-0.96)), rel=1e-14)
    assert g_value(params, 0.0) == pytest.approx(25.7128, abs=1e-4)
    assert g_value(params, 19.0) == pytest.approx(2.0 / 0.048 * (1.0 - math.exp(-0.048)), rel=1e-14)


def test_g_value_rejects_out_of_range(params):
    with pytest.raises(ValueError):
        g_value(params, -1.0)


def test_g_rate_matches_difference(params):
    t, e = 7.0, 1e-6
    fd = (g_value(params, t + e) - g_value(params, t - e)) / (2 * e)
    assert g_rate(params, t) == pytest.approx(fd, rel=1e-8)


@given(st.floats(0.0, 19.99), st.floats(1e-3, 1.0))
def test_g_strictly_decreasing(t, dt):
    p = ModelParams()
    t2 = min(t + dt, p.horizon)
    assert g_value(p, t2) < g_value(p, t)


@given(st.floats(0.01, 100.0))
def test_theta_scale_invariant(c):
    p = ModelParams()
    q = ModelParams(mu=p.r + c * (p.mu - p.r), sigma=c * p.sigma)
    assert q.theta == pytest.approx(p.theta, rel=1e-12)


def test_mapping_defaults_and_unknown_keys(caplog):
    with caplog.at_level("INFO"):
        p = params_from_mapping({"delta": 0.011})
    assert p.delta == 0.011 and p.alpha == 0.2258
    assert "alpha not given" in caplog.text
    with pytest.raises(ParameterError, match="unknown"):
        params_from_mapping({"gamma": 1.0})


def test_load_params(tmp_path):
    f = tmp_path / "p.json"
    f.write_text('{"rho": 0.07}')
    assert load_params(f).rho == 0.07
    f.write_text("[1, 2]")
    with pytest.raises(ParameterError):
        load_params(f)


def test_to_dict_round_trip():
    p = ModelParams(alpha=0.3)
    assert params_from_mapping(p.to_dict()) == p

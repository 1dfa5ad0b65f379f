import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobeq.model import (BeliefParams, ConfigError, DemandCurve, MarketConfig, baseline_config,
                         check_assumptions, demand_maps, eval_density_stats)

ALPHA0 = BeliefParams(2.5, 1.0, 0.5, 0.5)

beliefs = st.builds(BeliefParams,
                    st.floats(0.05, 10), st.floats(0.05, 10),
                    st.floats(0.05, 12), st.floats(0.05, 12))


def test_density_at_zero():
    d = eval_density_stats(ALPHA0, 0.0)
    assert d.F_plus == pytest.approx(5 / 7, abs=1e-15)
    assert d.F_minus == pytest.approx(2 / 7, abs=1e-15)
    assert d.f == 0.0


def test_density_inside_and_outside_support():
    d = eval_density_stats(ALPHA0, 0.25)
    assert d.F_plus == pytest.approx(5 / 14, abs=1e-15)
    assert d.hazard_plus == pytest.approx(0.25, abs=1e-15)
    out = eval_density_stats(ALPHA0, 0.6)
    assert out.F_plus == 0.0 and out.f == 0.0


def test_lower_side_hazard_is_distance_to_edge():
    d = eval_density_stats(ALPHA0, -0.2)
    assert d.hazard_minus == pytest.approx(0.3)
    assert d.f == pytest.approx(1 / 3.5 / 0.5)


@given(beliefs, st.floats(-15, 15), st.floats(-15, 15))
def test_tails_bounded_and_monotone(b, p, q):
    lo, hi = min(p, q), max(p, q)
    a, c = eval_density_stats(b, lo), eval_density_stats(b, hi)
    for d in (a, c):
        assert 0.0 <= d.F_plus <= 1.0 and 0.0 <= d.F_minus <= 1.0
        assert d.F_plus + d.F_minus <= 1.0 + 1e-15
    assert c.F_plus <= a.F_plus
    assert c.F_minus >= a.F_minus


@given(beliefs)
def test_tails_split_at_zero(b):
    d = eval_density_stats(b, 0.0)
    assert d.F_plus + d.F_minus == pytest.approx(1.0, rel=1e-14)


@given(beliefs)
def test_density_integrates_to_one(b):
    mass = b.up_share + b.down_share
    assert mass == pytest.approx(1.0, rel=1e-15)
    assert b.rate == b.lambda_plus + b.lambda_minus


def test_demand_examples():
    d = DemandCurve(0.2)
    assert demand_maps(d, 0.1, 0.1) == (pytest.approx(-0.02), pytest.approx(-0.5))
    assert d.demand(0.0) == 0.0


@given(st.floats(0.01, 5), st.floats(-11, 11))
def test_demand_inverse_roundtrip(k, p):
    d = DemandCurve(k)
    assert d.inverse(d.demand(p)) == pytest.approx(p, abs=4 * math.ulp(max(abs(p), 1.0)) / min(k, 1))


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_demand_rejects_nonpositive_slope(bad):
    with pytest.raises(ValueError):
        DemandCurve(bad)


def test_baseline_passes_all_checks(cfg):
    rep = check_assumptions(cfg)
    assert rep.passed, rep.failures
    size = rep["demand_size"]
    assert size.witness == pytest.approx(0.1)
    assert rep.grid_points == cfg.price_grid_points


def test_steep_demand_fails_size_check(cfg):
    rep = check_assumptions(cfg.replace(demand=DemandCurve(0.5)))
    assert not rep.passed
    assert [c.name for c in rep.failures] == ["demand_size"]
    assert rep["demand_size"].witness == pytest.approx(0.25)


def test_support_beyond_price_cap_rejected(cfg):
    with pytest.raises(ConfigError, match="price_cap"):
        cfg.replace(price_cap=5.0)


def test_belief_grids(cfg):
    ask, bid = cfg.ask_grid(), cfg.bid_grid()
    assert ask["support_up"][0] == 0.5
    assert ask["support_up"][-1] == pytest.approx(0.5 + 10 * 499 / 500)
    assert np.all(ask["support_down"] == 0.5)
    assert np.array_equal(bid["support_down"], ask["support_up"])
    assert np.all(ask["lambda_plus"] == cfg.extremal_ask.lambda_plus)
    assert cfg.price_cap == 11.0


def test_auto_price_cap():
    cfg = baseline_config(price_cap=None)
    assert cfg.price_cap == 11.0


def test_config_json_roundtrip(tmp_path, cfg):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert MarketConfig.load(path) == cfg


def test_config_rejects_unknown_fields(cfg):
    data = cfg.to_dict()
    data["colour"] = "red"
    with pytest.raises(ConfigError, match="colour"):
        MarketConfig.from_dict(data)
    data = cfg.to_dict()
    data["demand"]["elasticity"] = 1
    with pytest.raises(ConfigError, match="elasticity"):
        MarketConfig.from_dict(data)


def test_config_reports_json_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "extremal_ask": ,\n}')
    with pytest.raises(ConfigError, match="line 2"):
        MarketConfig.load(path)


@pytest.mark.parametrize("field,value", [("belief_count", 0), ("time_steps", 0),
                                         ("price_grid_points", 1), ("extremal_mass", -0.1)])
def test_config_validation(cfg, field, value):
    with pytest.raises(ValueError):
        cfg.replace(**{field: value})


def test_mirror(cfg):
    assert cfg.mirrored()
    assert ALPHA0.mirrored() == BeliefParams(1.0, 2.5, 0.5, 0.5)

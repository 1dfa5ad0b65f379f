import numpy as np
import pytest
from scipy.optimize import brentq

from lobeq.kernels import contraction_constants, generator
from lobeq.model import BeliefParams, baseline_config
from lobeq.rbsde import (SolverDivergence, TimeGrid, equilibrium_prices, solve_capped_system,
                         solve_equilibrium, solve_reflected_system)


@pytest.fixture(scope="module")
def short():
    return baseline_config(horizon=1.0, time_steps=1000)


def test_one_step_from_terminal_zero(cfg):
    grid = TimeGrid(1e-3, 1)
    p = solve_reflected_system(cfg, grid)
    assert p.Y1[0] == pytest.approx(0.125 * 1e-3, abs=1e-16)
    assert p.Y2[0] == pytest.approx(0.0, abs=1e-16)
    assert p.K[-1] == 0.0


def test_terminal_condition(short):
    p = solve_reflected_system(short)
    assert p.Y1[-1] == 0.0 and p.Y2[-1] == 0.0 and p.K[0] == 0.0
    assert len(p.t) == short.time_steps + 1


def test_time_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 5)


def test_reflection_structure(short):
    p = solve_reflected_system(short)
    assert np.all(p.Y1 >= 0.0)
    assert np.all(np.diff(p.K) >= 0.0)
    pushed = p.reflection_increments > 0
    assert np.all(p.Y1[:-1][pushed] == 0.0)


def test_zero_caps_leave_only_constant_drift(short):
    p = solve_capped_system(short, TimeGrid(1.0, 1000), caps=0.0)
    dt = 1e-3
    g = generator(short, 0.0, 0.0)
    assert p.Y2[-2] == pytest.approx(g.g2 * dt, abs=1e-15)
    assert p.Y1[-2] == pytest.approx(max(g.g1 * dt, 0.0), abs=1e-15)


def test_large_caps_match_uncapped(short):
    k = contraction_constants(short)
    free = solve_reflected_system(short)
    capped = solve_capped_system(short, caps=10 * k.cap)
    np.testing.assert_array_equal(free.Y1, capped.Y1)
    np.testing.assert_array_equal(free.Y2, capped.Y2)


def test_capped_validates_caps(short):
    with pytest.raises(ValueError):
        solve_capped_system(short, caps=(1.0, 1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        solve_capped_system(short, caps=(1.0, 1.0))


def test_symmetric_config_has_zero_y2(cfg):
    p = solve_equilibrium(cfg, n=4000)
    assert np.max(np.abs(p.Y2)) < 1e-14
    np.testing.assert_allclose(p.pa[: p.tau_hat_index], -p.pb[: p.tau_hat_index], atol=1e-14)


def test_stationary_root_oracle(cfg):
    root = brentq(lambda y: generator(cfg, y, 0.0).G1, 1e-6, 0.3, xtol=1e-15)
    p = solve_equilibrium(cfg)
    assert p.Y1[0] == pytest.approx(root, abs=1e-9)
    assert p.Va[0] == pytest.approx(1 / 26, abs=1e-9)
    assert p.pa[0] == pytest.approx(0.25 + 1 / 52, abs=1e-9)
    assert p.tau_hat_index == cfg.time_steps


def test_bearish_ask_is_degenerate():
    cfg = baseline_config(extremal_ask=BeliefParams(1.0, 2.5, 0.5, 0.5),
                          extremal_bid=BeliefParams(2.5, 1.0, 0.5, 0.5),
                          horizon=1.0, time_steps=500)
    p = solve_equilibrium(cfg)
    assert np.all(p.Y1 == 0.0)
    assert p.degenerate
    assert np.all(p.pa == p.pbar_at_tau) and np.all(p.pb == p.pbar_at_tau)
    assert p.K[-1] > 0


def test_comparison_in_ask_rate(short):
    # stronger bullish conviction of the ask never lowers the ask value
    lo = solve_reflected_system(short)
    hi_cfg = short.replace(extremal_ask=BeliefParams(3.0, 1.0, 0.5, 0.5), price_cap=None)
    hi = solve_reflected_system(hi_cfg)
    assert np.all(hi.Y1 >= lo.Y1 - 1e-12)


def test_first_order_convergence():
    base = baseline_config(horizon=1.0)
    va = [solve_reflected_system(base, TimeGrid(1.0, n)).Va[0] for n in (250, 500, 1000, 2000)]
    diffs = np.abs(np.diff(va))
    ratios = diffs[1:] / diffs[:-1]
    np.testing.assert_allclose(ratios, 0.5, atol=0.05)


def test_prices_inside_supports(cfg):
    p = solve_equilibrium(cfg, n=2000)
    assert np.all((0 <= p.pa) & (p.pa <= 0.5))
    assert np.all((-0.5 <= p.pb) & (p.pb <= 0))


def test_equilibrium_prices_freeze_after_stop(short):
    p = solve_reflected_system(short)
    p.Y1[300:] = 0.0
    equilibrium_prices(p, short)
    assert p.tau_hat_index == 300
    assert np.all(p.pa[300:] == p.pbar_at_tau)


def test_divergence_guard(short):
    k = contraction_constants(short)
    tiny = type(k)(**{**k.__dict__, "cap": 1e-6})
    with pytest.raises(SolverDivergence):
        solve_reflected_system(short, constants=tiny)

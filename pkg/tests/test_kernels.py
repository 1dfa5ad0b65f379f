import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from lobeq.kernels import (AssumptionViolation, analytic_ratio_bound, ask_offset, bid_offset,
                           contraction_constants, generator, intensity_terms,
                           offset_by_bisection, optimal_offsets)
from lobeq.model import BeliefParams, baseline_config, eval_density_stats

ys = st.floats(-3, 3, allow_nan=False)


def quad_tail(b, lo, hi):
    """Probability of a jump in (lo, hi) by integrating the density."""
    f = lambda u: eval_density_stats(b, u).f
    pts = [p for p in (-b.support_down, 0.0, b.support_up) if lo < p < hi]
    return quad(f, lo, hi, points=pts or None, limit=200)[0]


def test_offset_examples(cfg):
    a, b = cfg.extremal_ask, cfg.extremal_bid
    assert optimal_offsets(a, b, 0.0, 0.0) == (0.25, -0.25)
    assert ask_offset(0.5, -0.6) == 0.0
    assert ask_offset(0.5, 0.8) == 0.5
    assert bid_offset(0.5, -0.8) == -0.5


@given(ys, ys)
def test_offsets_monotone_lipschitz(y, z):
    for P in (lambda v: ask_offset(0.5, v), lambda v: bid_offset(0.5, v)):
        lo, hi = min(y, z), max(y, z)
        assert P(lo) <= P(hi)
        assert abs(P(y) - P(z)) <= abs(y - z) + 1e-15


@given(ys)
def test_offsets_clamped(y):
    pa, pb = ask_offset(0.5, y), bid_offset(0.5, y)
    assert 0.0 <= pa <= 0.5 and -0.5 <= pb <= 0.0
    assert pa >= min(y, 0.5) and pb <= max(y, -0.5)


def test_offset_matches_bruteforce_argmax():
    b = BeliefParams(2.5, 1.0, 0.5, 0.5)
    grid = np.linspace(0.0, 11.0, 110001)
    tail = b.up_share * np.clip(1 - grid / b.support_up, 0, 1)
    for y in np.linspace(-1, 1, 41):
        obj = (grid - y) * tail
        best = grid[np.argmax(obj)]
        assert ask_offset(b.support_up, y) == pytest.approx(best, abs=1e-4)


def test_bisection_agrees_with_closed_form():
    for y in np.linspace(-0.7, 0.7, 29):
        p = offset_by_bisection(lambda q: 0.5 - q, y, 0.5)
        assert p == pytest.approx(ask_offset(0.5, y), abs=1e-12)


def test_generator_at_origin(cfg):
    g = generator(cfg, 0.0, 0.0)
    assert g.g_a == pytest.approx(0.0625, abs=1e-15)
    assert g.g_b == pytest.approx(-0.0625, abs=1e-15)
    assert g.G1 == pytest.approx(0.125, abs=1e-15)
    assert g.G2 == pytest.approx(0.0, abs=1e-15)
    assert g.c_alpha0 == pytest.approx(1.75, abs=1e-15)
    assert g.c_alpha0 == pytest.approx(g.c1 - g.c2)


@pytest.mark.parametrize("y1,y2", [(0.0, 0.0), (0.3, 0.1), (0.05, -0.4), (1.2, 0.7), (0.0, -2.0)])
def test_generator_against_quadrature(cfg, y1, y2):
    g = generator(cfg, y1, y2)
    a, b = cfg.extremal_ask, cfg.extremal_bid
    x, y = g.x, g.y
    up_a, dn_a = quad_tail(a, x, 20), quad_tail(a, -20, y)
    up_b, dn_b = quad_tail(b, x, 20), quad_tail(b, -20, y)
    assert g.c_alpha0 == pytest.approx(a.rate * (up_a + dn_a), abs=1e-10)
    assert g.c_beta0 == pytest.approx(b.rate * (up_b + dn_b), abs=1e-10)
    assert g.g_a == pytest.approx(a.rate * (2 * y * dn_a + x * up_a), abs=1e-10)
    assert g.g_b == pytest.approx(b.rate * (y * dn_b + 2 * x * up_b), abs=1e-10)
    va, vb = (y1 + y2) / 2, (y2 - y1) / 2
    assert g.G1 == pytest.approx(-g.c1 * y1 + g.c2 * y2 + g.g1, abs=1e-14)
    assert g.G2 == pytest.approx(g.c2 * y1 - g.c1 * y2 + g.g2, abs=1e-14)
    assert g.Ga == pytest.approx(-g.c_alpha0 * va + g.g_a, abs=1e-14)


@given(st.floats(-5, 5))
def test_mirror_config_has_no_drift_in_y2(y1):
    cfg = baseline_config()
    assert generator(cfg, y1, 0.0).G2 == pytest.approx(0.0, abs=1e-14)


def test_vectorized_terms_match_scalar(cfg):
    rng = np.random.default_rng(0)
    y1, y2 = rng.uniform(-3, 3, (2, 50))
    c1, c2, g1, g2 = intensity_terms(cfg, y1, y2)
    for i in range(50):
        g = generator(cfg, y1[i], y2[i])
        assert (c1[i], c2[i], g1[i], g2[i]) == pytest.approx((g.c1, g.c2, g.g1, g.g2), abs=1e-15)


def test_contraction_constants_baseline(cfg):
    k = contraction_constants(cfg)
    assert k.C0 == 55.0
    assert 0 < k.lambda_hat <= analytic_ratio_bound(cfg) + 1e-12
    assert analytic_ratio_bound(cfg) == pytest.approx(1.5 / 3.5)
    assert k.cap == pytest.approx(k.C0 / (1 - k.lambda_hat))


def test_contraction_constants_identical_beliefs(cfg):
    same = cfg.replace(extremal_bid=cfg.extremal_ask)
    k = contraction_constants(same)
    assert k.lambda_hat == 0.0 and k.cap == k.C0


def test_generator_ratio_bounds_on_grid(cfg):
    k = contraction_constants(cfg)
    axis = np.linspace(-k.box, k.box, 101)
    y1, y2 = np.meshgrid(axis, axis)
    c1, c2, g1, g2 = intensity_terms(cfg, y1, y2)
    assert np.all(np.abs(c2) <= k.lambda_hat * c1 + 1e-15)
    assert np.all(np.abs(g1) + np.abs(g2) <= 2 * k.C0 * c1)


def test_ratio_at_one_is_rejected(cfg, monkeypatch):
    import lobeq.kernels as kern
    monkeypatch.setattr(kern, "intensity_terms", lambda c, a, b: (np.ones_like(a), np.ones_like(a),
                                                                  a, b))
    with pytest.raises(AssumptionViolation):
        kern.contraction_constants(cfg)

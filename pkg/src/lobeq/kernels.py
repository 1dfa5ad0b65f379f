"""Feedback price maps and the generator of the reflected value system.

With ``Y1 = Va - Vb`` and ``Y2 = Va + Vb`` the extremal agents' values obey a
pair of backward ODEs whose right-hand side is assembled here from the
extinction intensities ``c`` and reward rates ``g`` of both extremal agents,
evaluated at their optimal quotes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .model import BeliefParams, MarketConfig


class AssumptionViolation(RuntimeError):
    pass


def ask_offset(support_up: float, y: float) -> float:
    """Optimal ask quote for continuation value ``y`` (uniform buy shocks).

    Maximizer of ``(p - y) * F+(p)``: the root ``(C + y)/2`` of
    ``p - y = C - p``, clamped to ``[0, C]``.
    """
    p = 0.5 * (support_up + y)
    if p < 0.0:
        return 0.0
    if p > support_up:
        return support_up
    return p


def bid_offset(support_down: float, y: float) -> float:
    p = 0.5 * (y - support_down)
    if p > 0.0:
        return 0.0
    if p < -support_down:
        return -support_down
    return p


def optimal_offsets(ask_belief: BeliefParams, bid_belief: BeliefParams,
                    y_a: float, y_b: float) -> tuple[float, float]:
    return ask_offset(ask_belief.support_up, y_a), bid_offset(bid_belief.support_down, y_b)


def offset_by_bisection(hazard: Callable[[float], float], y: float, upper: float,
                        tol: float = 1e-13, max_iter: int = 200) -> float:
    """Generic ask quote for a decreasing hazard ``F+/f`` on ``(0, upper)``.

    Solves ``p - y = hazard(p)`` on ``[0, upper]``; returns 0 when the root
    would be negative and ``upper`` when ``y`` exceeds the support.
    """
    def gap(p):
        return p - y - hazard(p)

    if gap(0.0) >= 0.0:
        return 0.0
    if gap(upper) <= 0.0:
        return upper
    lo, hi = 0.0, upper
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _up(b: BeliefParams, x: float) -> float:
    v = 1.0 - max(x, 0.0) / b.support_up
    return b.up_share * min(max(v, 0.0), 1.0)


def _down(b: BeliefParams, y: float) -> float:
    v = 1.0 + min(y, 0.0) / b.support_down
    return b.down_share * min(max(v, 0.0), 1.0)


@dataclass(frozen=True)
class GeneratorTerms:
    x: float
    y: float
    c_alpha0: float
    c_beta0: float
    c1: float
    c2: float
    g_a: float
    g_b: float
    g1: float
    g2: float
    Ga: float
    Gb: float
    G1: float
    G2: float


def generator(cfg: MarketConfig, y1: float, y2: float) -> GeneratorTerms:
    a, b = cfg.extremal_ask, cfg.extremal_bid
    va = 0.5 * (y1 + y2)
    vb = 0.5 * (y2 - y1)
    x = ask_offset(a.support_up, va)
    y = bid_offset(b.support_down, vb)
    fa_up, fa_dn = _up(a, x), _down(a, y)
    fb_up, fb_dn = _up(b, x), _down(b, y)
    c_a = a.rate * (fa_dn + fa_up)
    c_b = b.rate * (fb_dn + fb_up)
    g_a = a.rate * (2.0 * y * fa_dn + x * fa_up)
    g_b = b.rate * (y * fb_dn + 2.0 * x * fb_up)
    Ga = -c_a * va + g_a
    Gb = -c_b * vb + g_b
    return GeneratorTerms(
        x=x, y=y, c_alpha0=c_a, c_beta0=c_b,
        c1=0.5 * (c_a + c_b), c2=0.5 * (c_b - c_a),
        g_a=g_a, g_b=g_b, g1=g_a - g_b, g2=g_a + g_b,
        Ga=Ga, Gb=Gb, G1=Ga - Gb, G2=Ga + Gb,
    )


def intensity_terms(cfg: MarketConfig, y1, y2):
    """Vectorized ``(c1, c2, g1, g2)`` over arrays of ``(y1, y2)``."""
    a, b = cfg.extremal_ask, cfg.extremal_bid
    y1 = np.asarray(y1, float)
    y2 = np.asarray(y2, float)
    x = np.clip(0.5 * (a.support_up + 0.5 * (y1 + y2)), 0.0, a.support_up)
    y = np.clip(0.5 * (0.5 * (y2 - y1) - b.support_down), -b.support_down, 0.0)
    fa_up = a.up_share * np.clip(1.0 - x / a.support_up, 0.0, 1.0)
    fa_dn = a.down_share * np.clip(1.0 + y / a.support_down, 0.0, 1.0)
    fb_up = b.up_share * np.clip(1.0 - x / b.support_up, 0.0, 1.0)
    fb_dn = b.down_share * np.clip(1.0 + y / b.support_down, 0.0, 1.0)
    c_a = a.rate * (fa_dn + fa_up)
    c_b = b.rate * (fb_dn + fb_up)
    g_a = a.rate * (2.0 * y * fa_dn + x * fa_up)
    g_b = b.rate * (y * fb_dn + 2.0 * x * fb_up)
    return 0.5 * (c_a + c_b), 0.5 * (c_b - c_a), g_a - g_b, g_a + g_b


@dataclass(frozen=True)
class ContractionConstants:
    C0: float
    lambda_hat: float
    cap: float
    box: float
    grid: int

    def to_dict(self) -> dict:
        return asdict(self)


def analytic_ratio_bound(cfg: MarketConfig) -> float:
    """``(R - 1)/(R + 1)`` from the pointwise ratio bound ``R`` of ``lambda f``.

    Both extinction intensities integrate ``lambda f`` over the same region,
    so their ratio lies in ``[1/R, R]``.
    """
    a, b = cfg.extremal_ask, cfg.extremal_bid
    if not (math.isclose(a.support_up, b.support_up) and math.isclose(a.support_down, b.support_down)):
        return math.nan
    r = max(a.lambda_plus / b.lambda_plus, b.lambda_plus / a.lambda_plus,
            a.lambda_minus / b.lambda_minus, b.lambda_minus / a.lambda_minus)
    return (r - 1.0) / (r + 1.0)


def contraction_constants(cfg: MarketConfig, grid: int = 101, max_rounds: int = 20) -> ContractionConstants:
    C0 = 5.0 * cfg.price_cap
    coarse = analytic_ratio_bound(cfg)
    lam = coarse if math.isfinite(coarse) and coarse < 1.0 else 0.5
    box = C0 / (1.0 - lam)
    for _ in range(max_rounds):
        axis = np.linspace(-box, box, grid)
        y1, y2 = np.meshgrid(axis, axis, indexing="ij")
        c1, c2, _, _ = intensity_terms(cfg, y1, y2)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(c1 > 0, np.abs(c2) / c1, np.where(c2 == 0, 0.0, np.inf))
        lam = float(ratio.max())
        if lam >= 1.0:
            raise AssumptionViolation(f"|c2/c1| reaches {lam:.6g} >= 1")
        new_box = C0 / (1.0 - lam)
        if math.isclose(new_box, box, rel_tol=1e-12):
            break
        box = new_box
    return ContractionConstants(C0=C0, lambda_hat=lam, cap=C0 / (1.0 - lam), box=box, grid=grid)

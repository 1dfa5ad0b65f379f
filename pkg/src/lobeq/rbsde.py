"""Backward Euler solver for the reflected value system.

In the deterministic setting the reflected system reduces to two ODEs run
backward from ``(Y1, Y2)(T) = (0, 0)``; ``Y1`` is projected onto ``[0, inf)``
after each step and the projection amount is booked as local time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import ContractionConstants, ask_offset, bid_offset, contraction_constants
from .model import MarketConfig


class SolverDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n: int

    def __post_init__(self):
        if self.n < 1 or not self.horizon > 0:
            raise ValueError("time grid needs n >= 1 and a positive horizon")

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt

    @classmethod
    def for_config(cls, cfg: MarketConfig, n: int | None = None) -> "TimeGrid":
        return cls(cfg.horizon, cfg.time_steps if n is None else n)


@dataclass
class ValuePaths:
    t: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    Va: np.ndarray
    Vb: np.ndarray
    K: np.ndarray
    cap: float
    pa: np.ndarray | None = None
    pb: np.ndarray | None = None
    tau_hat_index: int | None = None
    pbar_at_tau: float | None = None

    @property
    def n(self) -> int:
        return len(self.t) - 1

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def reflection_increments(self) -> np.ndarray:
        """Local time pushed at node ``i`` while stepping back from ``i+1``."""
        return np.diff(self.K)

    @property
    def degenerate(self) -> bool:
        return self.tau_hat_index == 0

    def rows(self):
        for i in range(self.n + 1):
            yield (self.t[i], self.Y1[i], self.Y2[i], self.Va[i], self.Vb[i],
                   self.pa[i], self.pb[i], self.K[i])


def _clip(y: float, cap: float) -> float:
    return min(max(y, -cap), cap)


def _drift(a, b, y1, y2, caps):
    """Right-hand side ``(G1, G2)``; ``caps`` clamp the linear multipliers only."""
    va = 0.5 * (y1 + y2)
    vb = 0.5 * (y2 - y1)
    x = ask_offset(a.support_up, va)
    y = bid_offset(b.support_down, vb)
    fa_up = a.up_share * min(max(1.0 - x / a.support_up, 0.0), 1.0)
    fb_up = b.up_share * min(max(1.0 - x / b.support_up, 0.0), 1.0)
    fa_dn = a.down_share * min(max(1.0 + y / a.support_down, 0.0), 1.0)
    fb_dn = b.down_share * min(max(1.0 + y / b.support_down, 0.0), 1.0)
    c_a = a.rate * (fa_dn + fa_up)
    c_b = b.rate * (fb_dn + fb_up)
    g_a = a.rate * (2.0 * y * fa_dn + x * fa_up)
    g_b = b.rate * (y * fb_dn + 2.0 * x * fb_up)
    c1 = 0.5 * (c_a + c_b)
    c2 = 0.5 * (c_b - c_a)
    if caps is None:
        m11 = m21 = y1
        m12 = m22 = y2
    else:
        m11, m12 = _clip(y1, caps[0]), _clip(y2, caps[1])
        m21, m22 = _clip(y1, caps[2]), _clip(y2, caps[3])
    return (-c1 * m11 + c2 * m12 + (g_a - g_b),
            c2 * m21 - c1 * m22 + (g_a + g_b))


def _solve(cfg, grid, caps, constants) -> ValuePaths:
    if constants is None:
        constants = contraction_constants(cfg)
    a, b = cfg.extremal_ask, cfg.extremal_bid
    n, dt = grid.n, grid.dt
    guard = 2.0 * constants.cap
    y1 = [0.0] * (n + 1)
    y2 = [0.0] * (n + 1)
    push = [0.0] * n
    u1 = u2 = 0.0
    for i in range(n - 1, -1, -1):
        d1, d2 = _drift(a, b, u1, u2, caps)
        cand = u1 + d1 * dt
        u1 = cand if cand > 0.0 else 0.0
        push[i] = u1 - cand
        u2 = u2 + d2 * dt
        if abs(u1) > guard or abs(u2) > guard or math.isnan(u1) or math.isnan(u2):
            raise SolverDivergence(
                f"|Y| exceeded 2*cap={guard:.6g} at node {i}; check assumptions or refine dt")
        y1[i] = u1
        y2[i] = u2
    Y1 = np.array(y1)
    Y2 = np.array(y2)
    K = np.concatenate([[0.0], np.cumsum(push)])
    return ValuePaths(t=grid.nodes, Y1=Y1, Y2=Y2, Va=0.5 * (Y1 + Y2), Vb=0.5 * (Y2 - Y1),
                      K=K, cap=constants.cap)


def solve_reflected_system(cfg: MarketConfig, grid: TimeGrid | None = None,
                           constants: ContractionConstants | None = None) -> ValuePaths:
    return _solve(cfg, grid or TimeGrid.for_config(cfg), None, constants)


def solve_capped_system(cfg: MarketConfig, grid: TimeGrid | None = None,
                        caps: tuple[float, float, float, float] | float | None = None,
                        constants: ContractionConstants | None = None) -> ValuePaths:
    """Same scheme with the multipliers of ``Y1``/``Y2`` clamped.

    ``caps`` is ``(C11, C12, C21, C22)``: the bound on ``Y1`` and ``Y2`` in the
    first equation, then in the second. A scalar applies to all four; the
    default is ``C0/(1 - lambda_hat)``.
    """
    if constants is None:
        constants = contraction_constants(cfg)
    if caps is None:
        caps = constants.cap
    if np.isscalar(caps):
        caps = (float(caps),) * 4
    caps = tuple(float(c) for c in caps)
    if len(caps) != 4 or any(c < 0 for c in caps):
        raise ValueError("caps must be four non-negative bounds")
    return _solve(cfg, grid or TimeGrid.for_config(cfg), caps, constants)


def equilibrium_prices(paths: ValuePaths, cfg: MarketConfig, tol: float | None = None) -> ValuePaths:
    """Fill quotes, the stopping node and the frozen price after it."""
    if tol is None:
        tol = 1e-9 * paths.cap
    hits = np.flatnonzero(paths.Y1 <= tol)
    tau = int(hits[0]) if hits.size else paths.n
    pbar = 0.5 * (paths.Va[tau] + paths.Vb[tau])
    C_up, C_down = cfg.extremal_ask.support_up, cfg.extremal_bid.support_down
    pa = np.full(paths.n + 1, pbar)
    pb = np.full(paths.n + 1, pbar)
    live = slice(0, tau)
    pa[live] = np.clip(0.5 * (C_up + paths.Va[live]), 0.0, C_up)
    pb[live] = np.clip(0.5 * (paths.Vb[live] - C_down), -C_down, 0.0)
    paths.pa, paths.pb = pa, pb
    paths.tau_hat_index, paths.pbar_at_tau = tau, float(pbar)
    return paths


def solve_equilibrium(cfg: MarketConfig, n: int | None = None,
                      constants: ContractionConstants | None = None) -> ValuePaths:
    return equilibrium_prices(solve_reflected_system(cfg, TimeGrid.for_config(cfg, n), constants), cfg)

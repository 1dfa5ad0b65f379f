"""Imbalance feedback on the extremal beliefs and the spoofing experiment.

The extremal jump rates become functions of the touch imbalance ``I``; an
equilibrium with feedback beliefs is a fixed point of

    rates -> (values, book) -> I -> rates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .lob import LOB, solve_book
from .model import BeliefParams, MarketConfig
from .rbsde import ValuePaths, solve_equilibrium

log = logging.getLogger(__name__)

BASE_RATES = (2.3, 1.0, 1.0, 2.3)


class ZeroAskQueue(ZeroDivisionError):
    pass


class FeedbackNonConvergence(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


def imbalance(lob: LOB) -> float:
    """Best-bid queue over best-ask queue, less one (touch atoms only)."""
    ask = lob.ask.touch_mass
    if ask <= 0.0:
        raise ZeroAskQueue("empty best-ask queue")
    return lob.bid.touch_mass / ask - 1.0


def rates_from_imbalance(I: float, s: float, base: tuple[float, ...] = BASE_RATES):
    """``(lambda+ ask, lambda- ask, lambda+ bid, lambda- bid)``."""
    up, down = math.exp(I * s), math.exp(-I * s)
    return (base[0] * up, base[1] * down, base[2] * up, base[3] * down)


def config_with_rates(cfg: MarketConfig, rates) -> MarketConfig:
    a, b = cfg.extremal_ask, cfg.extremal_bid
    return cfg.replace(
        extremal_ask=BeliefParams(rates[0], rates[1], a.support_up, a.support_down),
        extremal_bid=BeliefParams(rates[2], rates[3], b.support_up, b.support_down),
    )


@dataclass
class FeedbackStep:
    step: int
    I_in: float
    rates: tuple[float, float, float, float]
    Va0: float
    Vb0: float
    bid_queue: float
    ask_queue: float
    I_out: float
    tau_hat_index: int
    paths: ValuePaths | None = field(default=None, repr=False)
    lob: LOB | None = field(default=None, repr=False)

    @property
    def degenerate(self) -> bool:
        return self.tau_hat_index == 0

    def to_dict(self) -> dict:
        return {
            "step": self.step, "I_in": self.I_in, "rates": list(self.rates),
            "Va0": self.Va0, "Vb0": self.Vb0, "bid_queue": self.bid_queue,
            "ask_queue": self.ask_queue, "I_out": self.I_out,
            "tau_hat_index": self.tau_hat_index, "degenerate": self.degenerate,
        }


@dataclass
class FeedbackState:
    I: float
    sensitivity: float
    rates: tuple[float, float, float, float]
    step: int = 0
    history: list[FeedbackStep] = field(default_factory=list)
    converged: bool = False

    @property
    def degenerate(self) -> bool:
        return bool(self.history) and self.history[-1].degenerate

    @property
    def degeneracy_step(self) -> int | None:
        for h in self.history:
            if h.degenerate:
                return h.step
        return None

    def to_dict(self) -> dict:
        return {
            "I": self.I, "sensitivity": self.sensitivity, "rates": list(self.rates),
            "step": self.step, "converged": self.converged, "degenerate": self.degenerate,
            "degeneracy_step": self.degeneracy_step,
            "history": [h.to_dict() for h in self.history],
        }


def inner_equilibrium(cfg: MarketConfig, rates, exogenous_bid=None) -> tuple[ValuePaths, LOB]:
    """Values, touches and both book sides at time zero for fixed rates."""
    local = config_with_rates(cfg, rates)
    paths = solve_equilibrium(local)
    return paths, solve_book(local, paths, exogenous_bid=exogenous_bid)


def _step(cfg, k, I_in, s, base, exogenous_bid) -> FeedbackStep:
    rates = rates_from_imbalance(I_in, s, base)
    paths, lob = inner_equilibrium(cfg, rates, exogenous_bid)
    return FeedbackStep(
        step=k, I_in=I_in, rates=rates, Va0=float(paths.Va[0]), Vb0=float(paths.Vb[0]),
        bid_queue=lob.bid.touch_mass, ask_queue=lob.ask.touch_mass, I_out=imbalance(lob),
        tau_hat_index=paths.tau_hat_index, paths=paths, lob=lob,
    )


def solve_feedback_equilibrium(cfg: MarketConfig, s: float = 2.6, I_init: float = 0.0,
                               tol: float = 1e-6, max_outer: int = 100, damping: float = 1.0,
                               base: tuple[float, ...] = BASE_RATES,
                               keep_artifacts: bool = False) -> FeedbackState:
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    state = FeedbackState(I=I_init, sensitivity=s, rates=rates_from_imbalance(I_init, s, base))
    I = I_init
    for k in range(1, max_outer + 1):
        rec = _step(cfg, k, I, s, base, None)
        if not keep_artifacts and k > 1:
            state.history[-1].paths = state.history[-1].lob = None
        state.history.append(rec)
        state.step = k
        log.info("feedback step %d: I %.9g -> %.9g", k, I, rec.I_out)
        if abs(rec.I_out - I) < tol:
            state.I, state.rates, state.converged = rec.I_out, rec.rates, True
            return state
        I = I + damping * (rec.I_out - I)
        state.I, state.rates = I, rates_from_imbalance(I, s, base)
    raise FeedbackNonConvergence(f"imbalance not settled after {max_outer} outer steps", state)


def spoof_experiment(cfg: MarketConfig, s: float = 2.6, spoof_mass: float = 0.05,
                     n_steps: int = 5, start: FeedbackState | None = None,
                     persist: bool = True, base: tuple[float, ...] = BASE_RATES,
                     **feedback_kw) -> FeedbackState:
    """Add ``spoof_mass`` at the best bid of a feedback equilibrium and iterate.

    Step 0 is the equilibrium book plus the spoof order. With ``persist``
    false the order is withdrawn after the first re-equilibration.
    """
    if start is None:
        start = solve_feedback_equilibrium(cfg, s, base=base, keep_artifacts=True, **feedback_kw)
    last = start.history[-1]
    if last.lob is None:
        last = _step(cfg, 0, start.I, s, base, None)
    spoof = [(0, spoof_mass)] if spoof_mass > 0.0 else None
    lob0 = LOB(**{**last.lob.__dict__, "bid": last.lob.bid.with_exogenous(0, spoof_mass)}) \
        if spoof else last.lob
    I = imbalance(lob0)
    out = FeedbackState(I=I, sensitivity=s, rates=last.rates)
    out.history.append(FeedbackStep(
        step=0, I_in=last.I_in, rates=last.rates, Va0=last.Va0, Vb0=last.Vb0,
        bid_queue=lob0.bid.touch_mass, ask_queue=lob0.ask.touch_mass, I_out=I,
        tau_hat_index=last.tau_hat_index, paths=last.paths, lob=lob0))
    for k in range(1, n_steps + 1):
        present = spoof if (persist or k == 1) else None
        rec = _step(cfg, k, I, s, base, present)
        out.history.append(rec)
        out.step, I = k, rec.I_out
        out.I, out.rates = I, rec.rates
        log.info("spoof step %d: I=%.6g Va0=%.6g Vb0=%.6g", k, I, rec.Va0, rec.Vb0)
    out.converged = abs(out.history[-1].I_out - out.history[-1].I_in) < feedback_kw.get("tol", 1e-6)
    return out

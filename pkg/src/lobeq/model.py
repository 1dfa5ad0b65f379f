"""Belief signals, demand elasticity and market configuration.

Every agent's view of the next potential market order is a two-sided uniform
jump law: with rate ``lambda_plus`` a buy shock uniform on ``(0, support_up]``
and with rate ``lambda_minus`` a sell shock uniform on ``[-support_down, 0)``.
The helpers below are written against numpy arrays so that the book solver can
evaluate a whole belief grid at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class BeliefParams:
    lambda_plus: float
    lambda_minus: float
    support_up: float
    support_down: float

    def __post_init__(self):
        for name in ("lambda_plus", "lambda_minus", "support_up", "support_down"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive and finite, got {value!r}")

    @property
    def rate(self) -> float:
        return self.lambda_plus + self.lambda_minus

    @property
    def up_share(self) -> float:
        return self.lambda_plus / self.rate

    @property
    def down_share(self) -> float:
        return self.lambda_minus / self.rate

    def mirrored(self) -> "BeliefParams":
        """Image under x -> -x: buy and sell sides swap."""
        return BeliefParams(self.lambda_minus, self.lambda_plus, self.support_down, self.support_up)

    def scaled(self, factor: float) -> "BeliefParams":
        return BeliefParams(self.lambda_plus * factor, self.lambda_minus * factor,
                            self.support_up, self.support_down)


@dataclass(frozen=True)
class DensityStats:
    f: float
    F_plus: float
    F_minus: float
    hazard_plus: float
    hazard_minus: float


# Array kernels. ``share`` is lambda_plus/lambda (or lambda_minus/lambda),
# ``support`` the matching support bound; all arguments broadcast.

def upper_tail(share, support, p):
    """Mass of jumps strictly above ``max(p, 0)``."""
    return share * np.clip(1.0 - np.maximum(p, 0.0) / support, 0.0, 1.0)


def lower_tail(share, support, p):
    """Mass of jumps below ``min(p, 0)``."""
    return share * np.clip(1.0 + np.minimum(p, 0.0) / support, 0.0, 1.0)


def upper_tail_integral(share, support, a, b):
    """Exact ``int_a^b upper_tail(u) du`` for ``a <= b``.

    Uses the antiderivative of the clamped-affine tail, so kinks at 0 and at
    the support edge need no special handling.
    """
    return share * (_tail_antiderivative(support, b) - _tail_antiderivative(support, a))


def _tail_antiderivative(support, v):
    v = np.asarray(v, dtype=float)
    inside = np.clip(v, 0.0, support)
    return np.minimum(v, 0.0) + inside - inside * inside / (2.0 * support)


def eval_density_stats(b: BeliefParams, p: float) -> DensityStats:
    if 0.0 < p <= b.support_up:
        f = b.up_share / b.support_up
    elif -b.support_down <= p < 0.0:
        f = b.down_share / b.support_down
    else:
        f = 0.0
    return DensityStats(
        f=f,
        F_plus=float(upper_tail(b.up_share, b.support_up, p)),
        F_minus=float(lower_tail(b.down_share, b.support_down, p)),
        hazard_plus=max(b.support_up - max(p, 0.0), 0.0),
        hazard_minus=max(b.support_down + min(p, 0.0), 0.0),
    )


@dataclass(frozen=True)
class DemandCurve:
    """Linear external demand ``D(p) = -slope * p``."""

    slope: float

    def __post_init__(self):
        if not (math.isfinite(self.slope) and self.slope > 0):
            raise ConfigError(f"demand slope must be positive, got {self.slope!r}")

    def demand(self, p):
        return -self.slope * p

    def inverse(self, q):
        return -q / self.slope

    def inverse_modulus(self, r: float) -> float:
        return r / self.slope


def demand_maps(d: DemandCurve, p: float, q: float) -> tuple[float, float]:
    return d.demand(p), d.inverse(q)


@dataclass(frozen=True)
class MarketConfig:
    extremal_ask: BeliefParams
    extremal_bid: BeliefParams
    belief_count: int = 500
    dispersion_a: float = 0.5
    dispersion_b: float = 10.0
    extremal_mass: float = 0.1
    continuum_mass: float = 1.0
    demand: DemandCurve = field(default_factory=lambda: DemandCurve(0.2))
    horizon: float = 20.0
    time_steps: int = 20000
    price_cap: float | None = None
    price_grid_points: int = 2000

    def __post_init__(self):
        if int(self.belief_count) != self.belief_count or self.belief_count < 1:
            raise ConfigError("belief_count must be an integer >= 1")
        if int(self.time_steps) != self.time_steps or self.time_steps < 1:
            raise ConfigError("time_steps must be an integer >= 1")
        if int(self.price_grid_points) != self.price_grid_points or self.price_grid_points < 2:
            raise ConfigError("price_grid_points must be an integer >= 2")
        if not (self.extremal_mass > 0 and self.continuum_mass > 0):
            raise ConfigError("masses must be positive")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.dispersion_a <= 0 or self.dispersion_b < 0:
            raise ConfigError("dispersion a must be positive and b non-negative")
        if self.price_cap is None:
            object.__setattr__(self, "price_cap", float(math.ceil(self.max_support() + 0.5)))
        if self.price_cap < self.max_support():
            raise ConfigError(
                f"price_cap {self.price_cap} below largest support bound {self.max_support()}")

    # belief grids ---------------------------------------------------------

    def belief_levels(self) -> np.ndarray:
        """Continuum belief magnitudes ``i/K``; bid beliefs are their negatives."""
        return np.arange(self.belief_count) / self.belief_count

    def ask_grid(self) -> dict[str, np.ndarray]:
        """Continuum ask beliefs. Rates match the extremal ask agent."""
        up = self.dispersion_a + self.dispersion_b * self.belief_levels()
        b = self.extremal_ask
        return _grid(b.lambda_plus, b.lambda_minus, up, np.full_like(up, b.support_down))

    def bid_grid(self) -> dict[str, np.ndarray]:
        """Continuum bid beliefs ``beta = -i/K`` with ``C^- = a - b*beta``."""
        down = self.dispersion_a + self.dispersion_b * self.belief_levels()
        b = self.extremal_bid
        return _grid(b.lambda_plus, b.lambda_minus, np.full_like(down, b.support_up), down)

    def max_support(self) -> float:
        top = self.dispersion_a + self.dispersion_b * (self.belief_count - 1) / self.belief_count
        return max(top, self.extremal_ask.support_up, self.extremal_ask.support_down,
                   self.extremal_bid.support_up, self.extremal_bid.support_down)

    @property
    def dt(self) -> float:
        return self.horizon / self.time_steps

    def replace(self, **changes) -> "MarketConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        if "price_cap" not in changes and cap_was_auto(self):
            data["price_cap"] = None
        data.update(changes)
        return MarketConfig(**data)

    def mirrored(self) -> bool:
        """True when the bid side is the exact mirror image of the ask side."""
        return self.extremal_bid == self.extremal_ask.mirrored()

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "extremal_ask": asdict(self.extremal_ask),
            "extremal_bid": asdict(self.extremal_bid),
            "belief_count": self.belief_count,
            "dispersion": {"a": self.dispersion_a, "b": self.dispersion_b},
            "extremal_mass": self.extremal_mass,
            "continuum_mass": self.continuum_mass,
            "demand": {"slope": self.demand.slope},
            "horizon": self.horizon,
            "time_steps": self.time_steps,
            "price_cap": self.price_cap,
            "price_grid_points": self.price_grid_points,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MarketConfig":
        allowed = {"extremal_ask", "extremal_bid", "belief_count", "dispersion",
                   "extremal_mass", "continuum_mass", "demand", "horizon",
                   "time_steps", "price_cap", "price_grid_points"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
        for required in ("extremal_ask", "extremal_bid"):
            if required not in data:
                raise ConfigError(f"missing field: {required}")
        kwargs: dict[str, Any] = {}
        for side in ("extremal_ask", "extremal_bid"):
            kwargs[side] = _belief_from_dict(data[side], side)
        if "dispersion" in data:
            disp = _strict(data["dispersion"], {"a", "b"}, "dispersion")
            kwargs["dispersion_a"] = float(disp["a"])
            kwargs["dispersion_b"] = float(disp["b"])
        if "demand" in data:
            kwargs["demand"] = DemandCurve(float(_strict(data["demand"], {"slope"}, "demand")["slope"]))
        for name in ("belief_count", "time_steps", "price_grid_points"):
            if name in data:
                value = data[name]
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{name} must be an integer")
                kwargs[name] = value
        for name in ("extremal_mass", "continuum_mass", "horizon", "price_cap"):
            if name in data and data[name] is not None:
                kwargs[name] = float(data[name])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "MarketConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)


def cap_was_auto(cfg: MarketConfig) -> bool:
    return cfg.price_cap == float(math.ceil(cfg.max_support() + 0.5))


def _grid(lp, lm, up, down) -> dict[str, np.ndarray]:
    n = len(up)
    lp = np.full(n, lp, dtype=float)
    lm = np.full(n, lm, dtype=float)
    rate = lp + lm
    return {"lambda_plus": lp, "lambda_minus": lm, "support_up": np.asarray(up, float),
            "support_down": np.asarray(down, float), "up_share": lp / rate,
            "down_share": lm / rate, "rate": rate}


def _strict(obj: Any, keys: set[str], where: str) -> dict[str, Any]:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(obj) - keys
    if unknown:
        raise ConfigError(f"{where}: unknown field(s): {', '.join(sorted(unknown))}")
    missing = keys - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing field(s): {', '.join(sorted(missing))}")
    return obj


def _belief_from_dict(obj: Any, where: str) -> BeliefParams:
    obj = _strict(obj, {"lambda_plus", "lambda_minus", "support_up", "support_down"}, where)
    try:
        return BeliefParams(**{k: float(v) for k, v in obj.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def baseline_config(**overrides) -> MarketConfig:
    """The worked example: bullish ask, bearish bid, K=500, T=20."""
    cfg = MarketConfig(
        extremal_ask=BeliefParams(2.5, 1.0, 0.5, 0.5),
        extremal_bid=BeliefParams(1.0, 2.5, 0.5, 0.5),
        belief_count=500,
        dispersion_a=0.5,
        dispersion_b=10.0,
        extremal_mass=0.1,
        continuum_mass=1.0,
        demand=DemandCurve(0.2),
        horizon=20.0,
        time_steps=20000,
        price_cap=11.0,
        price_grid_points=2000,
    )
    return cfg.replace(**overrides) if overrides else cfg


# assumption checks --------------------------------------------------------

@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    witness: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list[AssumptionCheck]
    grid_points: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "grid_points": self.grid_points,
                "checks": [asdict(c) for c in self.checks]}


_REL = 1e-12


def check_assumptions(cfg: MarketConfig) -> AssumptionReport:
    """Evaluate the standing assumptions for ``cfg``.

    Grid-based checks use the same ``price_grid_points`` resolution on
    ``[0, price_cap]`` as the book solver.
    """
    ext_a, ext_b = cfg.extremal_ask, cfg.extremal_bid
    ask, bid = cfg.ask_grid(), cfg.bid_grid()
    m = cfg.price_grid_points
    pos = np.linspace(0.0, cfg.price_cap, m + 1)
    checks: list[AssumptionCheck] = []

    rates = np.concatenate([ask["rate"], bid["rate"], [ext_a.rate, ext_b.rate]])
    densities = np.concatenate([
        ask["up_share"] / ask["support_up"], ask["down_share"] / ask["support_down"],
        bid["up_share"] / bid["support_up"], bid["down_share"] / bid["support_down"],
        [ext_a.up_share / ext_a.support_up, ext_a.down_share / ext_a.support_down,
         ext_b.up_share / ext_b.support_up, ext_b.down_share / ext_b.support_down]])
    bound = float(max(rates.max(), densities.max()))
    checks.append(AssumptionCheck("bounded_intensities", math.isfinite(bound), bound,
                                  "max of all rates and density values"))

    top = cfg.max_support()
    checks.append(AssumptionCheck("bounded_support", top <= cfg.price_cap * (1 + _REL), top,
                                  f"largest support bound vs price cap {cfg.price_cap}"))

    shares = np.array([ext_a.up_share, ext_b.up_share])
    checks.append(AssumptionCheck("density_regular", bool(np.all((shares > 0) & (shares < 1))),
                                  float(shares.min()), "0 < F+(0) < 1, f(0) = 0 by convention"))

    # hazard of the uniform law is C - p: strictly decreasing, zero at the edge
    worst = -math.inf
    for b in (ext_a, ext_b):
        inner = pos[(pos > 0) & (pos < b.support_up)]
        h = np.array([eval_density_stats(b, p).hazard_plus for p in inner])
        if h.size > 1:
            worst = max(worst, float(np.max(np.diff(h))))
    checks.append(AssumptionCheck("hazard_monotone", worst < 0, worst,
                                  "largest increment of F+/f on the interior grid"))

    ratio = _belief_ratio(ext_a, ext_b)
    checks.append(AssumptionCheck("belief_range", math.isfinite(ratio), ratio,
                                  "bound C on lambda and density ratios of extremal beliefs"))

    checks.append(_dominance_check(cfg, ask, bid, pos))
    checks.append(_hazard_order_check(cfg, ask, bid, pos))

    k = cfg.demand.slope
    need_a = max(k * ext_a.support_up, k * ext_b.support_up)
    need_b = max(k * ext_a.support_down, k * ext_b.support_down)
    worst_size = max(need_a - cfg.extremal_mass, need_b - cfg.extremal_mass)
    checks.append(AssumptionCheck(
        "demand_size", worst_size <= _REL * cfg.extremal_mass, max(need_a, need_b),
        f"largest extremal demand {max(need_a, need_b):.6g} vs extremal mass {cfg.extremal_mass:.6g}"))

    checks.append(AssumptionCheck("demand_inverse_modulus", k > 0, 1.0 / k,
                                  "|D^-1(x) - D^-1(y)| = |x - y| / k"))
    return AssumptionReport(checks, m)


def _belief_ratio(a: BeliefParams, b: BeliefParams) -> float:
    """Smallest C with 1/C <= lambda f ratios <= C; inf if the supports differ."""
    if not (np.isclose(a.support_up, b.support_up) and np.isclose(a.support_down, b.support_down)):
        return math.inf
    ratios = [a.rate / b.rate,
              (a.up_share / a.support_up) / (b.up_share / b.support_up),
              (a.down_share / a.support_down) / (b.down_share / b.support_down)]
    return float(max(max(r, 1.0 / r) for r in ratios))


def _dominance_check(cfg, ask, bid, pos) -> AssumptionCheck:
    a0, b0 = cfg.extremal_ask, cfg.extremal_bid
    neg = -pos
    up_a0 = a0.lambda_plus * upper_tail(1.0, a0.support_up, pos)
    dn_a0 = a0.lambda_minus * lower_tail(1.0, a0.support_down, neg)
    up_b0 = b0.lambda_plus * upper_tail(1.0, b0.support_up, pos)
    dn_b0 = b0.lambda_minus * lower_tail(1.0, b0.support_down, neg)
    col = (slice(None), None)
    up_a = ask["lambda_plus"][col] * upper_tail(1.0, ask["support_up"][col], pos)
    dn_a = ask["lambda_minus"][col] * lower_tail(1.0, ask["support_down"][col], neg)
    up_b = bid["lambda_plus"][col] * upper_tail(1.0, bid["support_up"][col], pos)
    dn_b = bid["lambda_minus"][col] * lower_tail(1.0, bid["support_down"][col], neg)
    slack = min(float(np.min(up_a - up_a0)), float(np.min(up_b0 - up_b)),
                float(np.min(dn_a0 - dn_a)), float(np.min(dn_b - dn_b0)))
    return AssumptionCheck("intensity_dominance", slack >= -_REL, slack,
                           "smallest slack of the four tail-intensity inequalities on the grid")


def _hazard_order_check(cfg, ask, bid, pos) -> AssumptionCheck:
    # F+/f of the uniform law on (0, C]: C - p inside, 0 beyond the support
    a0, b0 = cfg.extremal_ask, cfg.extremal_bid
    col = (slice(None), None)
    h_a0 = np.maximum(a0.support_up - pos, 0.0)
    h_a = np.maximum(ask["support_up"][col] - pos, 0.0)
    h_b0 = np.maximum(b0.support_down - pos, 0.0)
    h_b = np.maximum(bid["support_down"][col] - pos, 0.0)
    slack = min(float(np.min(h_a - h_a0)), float(np.min(h_b - h_b0)))
    return AssumptionCheck("hazard_order", slack >= -_REL, slack,
                           "smallest slack of the hazard-ordering inequalities on the grid")

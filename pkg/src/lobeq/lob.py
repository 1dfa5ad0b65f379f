"""Book shape beyond the touch.

Each continuum agent posts one limit order at an offset from the touch. Its
score against the aggregate book is

    F(q) = (q + pa - pb) * F+(q + pa + M(q)/k) + int_0^q F+(u + pa + M(u)/k) du

with ``M(q)`` the book mass strictly in front of offset ``q``. The book is the
fixed point of simultaneous best responses. Bid books are handled as ask
books after the reflection ``x -> -x``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import MarketConfig, upper_tail, upper_tail_integral

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class BookSide:
    side: str
    touch_price: float
    offsets: np.ndarray
    extremal_atom: float
    agent_mass: float
    assignment: np.ndarray
    demand_slope: float
    exogenous_orders: list[tuple[int, float]] = field(default_factory=list)
    certificate: float = 0.0
    iterations: int = 0
    converged: bool = True
    mode: str = "synchronous"

    def level_masses(self) -> np.ndarray:
        mass = np.bincount(self.assignment, minlength=len(self.offsets)) * self.agent_mass
        mass[0] += self.extremal_atom
        for j, q in self.exogenous_orders:
            mass[j] += q
        return mass

    def cumulative_below(self) -> np.ndarray:
        """``M[j]``: mass at offsets strictly below ``offsets[j]``."""
        mass = self.level_masses()
        return np.concatenate([[0.0], np.cumsum(mass[:-1])])

    @property
    def total_mass(self) -> float:
        return (self.extremal_atom + self.agent_mass * len(self.assignment)
                + sum(q for _, q in self.exogenous_orders))

    @property
    def touch_mass(self) -> float:
        return float(self.level_masses()[0])

    @property
    def sign(self) -> float:
        return 1.0 if self.side == "ask" else -1.0

    def prices(self) -> np.ndarray:
        """Absolute price of every offset node."""
        return self.touch_price + self.sign * self.offsets

    def agent_prices(self) -> np.ndarray:
        return self.prices()[self.assignment]

    def with_exogenous(self, offset_index: int, mass: float) -> "BookSide":
        out = BookSide(**{**self.__dict__, "exogenous_orders": list(self.exogenous_orders)})
        out.exogenous_orders.append((offset_index, mass))
        return out

    def plateaus(self) -> list[tuple[int, int, int]]:
        """Runs ``(first agent, last agent, offset index)`` of equal assignment."""
        runs, start = [], 0
        a = self.assignment
        for i in range(1, len(a) + 1):
            if i == len(a) or a[i] != a[start]:
                runs.append((start, i - 1, int(a[start])))
                start = i
        return runs


# scores -------------------------------------------------------------------

def score_matrix(share, support, cum_below, offsets, pa, pb, slope) -> np.ndarray:
    """Fill scores of every belief (rows) at every offset (columns).

    ``share`` and ``support`` are the upward jump share and support bound of
    each belief in ask orientation; ``cum_below`` is one row shared by all
    beliefs or one row per belief. The integral is exact: on each cell the
    mass in front is constant and the tail is clamped-affine.
    """
    share = np.atleast_1d(np.asarray(share, float))[:, None]
    support = np.atleast_1d(np.asarray(support, float))[:, None]
    shift = pa + cum_below / slope
    front = (offsets + pa - pb) * upper_tail(share, support, offsets + shift)
    cell_shift = shift[..., 1:]
    cells = upper_tail_integral(share, support, offsets[:-1] + cell_shift, offsets[1:] + cell_shift)
    integral = np.concatenate([np.zeros((share.shape[0], 1)), np.cumsum(cells, axis=1)], axis=1)
    return front + integral


def mollify(scores: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """``sup_j' F(j') - |q_j' - q_j|`` along the last axis."""
    left = np.maximum.accumulate(scores + offsets, axis=-1) - offsets
    right = np.flip(np.maximum.accumulate(np.flip(scores - offsets, -1), axis=-1), -1) + offsets
    return np.maximum(np.maximum(left, right), scores)


def _oriented_beliefs(side: str, cfg: MarketConfig):
    if side == "ask":
        g = cfg.ask_grid()
        return g["up_share"], g["support_up"]
    if side == "bid":
        g = cfg.bid_grid()
        return g["down_share"], g["support_down"]
    raise ValueError(f"side must be 'ask' or 'bid', got {side!r}")


def _oriented_touches(side: str, pa: float, pb: float) -> tuple[float, float]:
    return (pa, pb) if side == "ask" else (-pb, -pa)


def agent_cum_below(book: BookSide, alpha: int | None = None) -> np.ndarray:
    """Mass in front of each offset as seen by agent ``alpha``.

    An agent that moves takes its own order with it, so its own mass is
    removed from the levels above its current offset. With ``alpha`` None the
    result holds one row per agent.
    """
    cum = book.cumulative_below()
    if book.agent_mass == 0.0 or len(book.assignment) == 0:
        return cum if alpha is not None else np.broadcast_to(cum, (len(book.assignment), cum.size))
    idx = np.arange(cum.size)
    if alpha is not None:
        return cum - book.agent_mass * (idx > book.assignment[alpha])
    return cum[None, :] - book.agent_mass * (idx[None, :] > book.assignment[:, None])


def _agent_row(alpha, book, pa, pb, cfg):
    share, support = _oriented_beliefs(book.side, cfg)
    opa, opb = _oriented_touches(book.side, pa, pb)
    cum = agent_cum_below(book, alpha) if alpha < len(book.assignment) else book.cumulative_below()
    return score_matrix(share[alpha], support[alpha], cum, book.offsets, opa, opb,
                        book.demand_slope)[0]


def fill_score(alpha: int, j: int, book: BookSide, pa: float, pb: float, cfg: MarketConfig) -> float:
    return float(_agent_row(alpha, book, pa, pb, cfg)[j])


def fill_scores(book: BookSide, pa: float, pb: float, cfg: MarketConfig) -> np.ndarray:
    """Scores of every agent (rows) at every offset, each against the book without itself."""
    share, support = _oriented_beliefs(book.side, cfg)
    opa, opb = _oriented_touches(book.side, pa, pb)
    return score_matrix(share, support, agent_cum_below(book), book.offsets, opa, opb,
                        book.demand_slope)


def mollified_fill_score(alpha: int, j: int, book: BookSide, pa: float, pb: float,
                         cfg: MarketConfig) -> float:
    return float(mollify(_agent_row(alpha, book, pa, pb, cfg), book.offsets)[j])


def best_response(alpha: int, book: BookSide, pa: float, pb: float, cfg: MarketConfig) -> int:
    """Lowest offset attaining the maximal score."""
    return int(np.argmax(_agent_row(alpha, book, pa, pb, cfg)))


def regret(scores: np.ndarray, assignment: np.ndarray) -> float:
    if len(assignment) == 0:
        return 0.0
    chosen = scores[np.arange(len(assignment)), assignment]
    return float(np.max(scores.max(axis=1) - chosen))


# fixed point ---------------------------------------------------------------

def empty_book(side: str, cfg: MarketConfig, pa: float, pb: float,
               exogenous: list[tuple[int, float]] | None = None,
               grid_points: int | None = None) -> BookSide:
    m = grid_points or cfg.price_grid_points
    return BookSide(
        side=side,
        touch_price=pa if side == "ask" else pb,
        offsets=np.linspace(0.0, cfg.price_cap, m + 1),
        extremal_atom=cfg.extremal_mass,
        agent_mass=cfg.continuum_mass / cfg.belief_count,
        assignment=np.zeros(cfg.belief_count, dtype=np.int64),
        demand_slope=cfg.demand.slope,
        exogenous_orders=list(exogenous or []),
    )


def solve_book_side(side: str, cfg: MarketConfig, pa: float, pb: float,
                    exogenous: list[tuple[int, float]] | None = None,
                    initial: np.ndarray | None = None, max_iter: int = 500,
                    grid_points: int | None = None, mode: str = "synchronous") -> BookSide:
    """Best-response iteration for one side of the book.

    Synchronous rounds until the assignment repeats; a repeat other than a
    fixed point switches to agent-by-agent updates in ascending belief order.
    """
    book = empty_book(side, cfg, pa, pb, exogenous, grid_points)
    if initial is not None:
        book.assignment = np.asarray(initial, dtype=np.int64).copy()
    score = _scorer(book, cfg, pa, pb)

    best = (np.inf, book.assignment.copy())
    if mode == "sequential":
        book.mode = "sequential"
        return _sequential(book, score, max_iter, 0, best)
    seen = {book.assignment.tobytes()}
    for it in range(1, max_iter + 1):
        scores = score(book)
        new = np.argmax(scores, axis=1)
        cert = regret(scores, book.assignment)
        if cert < best[0]:
            best = (cert, book.assignment.copy())
        if np.array_equal(new, book.assignment):
            book.certificate, book.iterations = cert, it
            return book
        book.assignment = new
        key = new.tobytes()
        if key in seen:
            log.info("synchronous best responses cycle after %d rounds; going sequential", it)
            book.mode = "sequential"
            return _sequential(book, score, max_iter, it, best)
        seen.add(key)
    return _give_up(book, best, max_iter, score)


def _scorer(book, cfg, pa, pb):
    share, support = _oriented_beliefs(book.side, cfg)
    opa, opb = _oriented_touches(book.side, pa, pb)

    def score(b, alpha=None):
        if alpha is None:
            return score_matrix(share, support, agent_cum_below(b), b.offsets, opa, opb,
                                b.demand_slope)
        return score_matrix(share[alpha], support[alpha], agent_cum_below(b, alpha), b.offsets,
                            opa, opb, b.demand_slope)[0]
    return score


def _sequential(book, score, max_iter, used, best):
    for sweep in range(1, max_iter + 1):
        changed = False
        for i in range(len(book.assignment)):
            row = score(book, i)
            j = int(np.argmax(row))
            old = book.assignment[i]
            if j != old and row[j] > row[old]:
                book.assignment[i] = j
                changed = True
        scores = score(book)
        cert = regret(scores, book.assignment)
        if cert < best[0]:
            best = (cert, book.assignment.copy())
        if not changed:
            book.certificate, book.iterations = cert, used + sweep
            return book
    return _give_up(book, best, used + max_iter, score)


def _give_up(book, best, iterations, score):
    book.assignment = best[1]
    book.certificate = regret(score(book), book.assignment)
    book.iterations, book.converged = iterations, False
    log.warning("book iteration did not converge in %d rounds; best regret %.3g",
                iterations, book.certificate)
    return book


# clearing -----------------------------------------------------------------

def walk_up(levels, masses, x: float, slope: float, top: float | None = None) -> float:
    """``sup{p < top : slope*(x - p) > mass at levels below p}``.

    ``levels`` must be sorted ascending; ``top`` defaults to the highest level.
    """
    levels = np.asarray(levels, float)
    masses = np.asarray(masses, float)
    if top is None:
        top = float(levels[-1])
    below = 0.0
    edge = -np.inf
    for level, mass in zip(levels, masses):
        if mass <= 0.0:
            continue
        reach = x - below / slope
        if reach <= level:
            return min(max(reach, edge), top)
        below += mass
        edge = level
    return min(max(x - below / slope, edge), top)


def walk_up_many(levels, masses, x, slope: float, top: float | None = None) -> np.ndarray:
    """Vectorized :func:`walk_up` over an array of shocks ``x``."""
    levels = np.asarray(levels, float)
    masses = np.asarray(masses, float)
    keep = masses > 0.0
    lv, ms = levels[keep], masses[keep]
    top = float(levels[-1]) if top is None else top
    below = np.concatenate([[0.0], np.cumsum(ms)])
    reach_bound = lv + below[:-1] / slope
    x = np.asarray(x, float)
    j = np.searchsorted(reach_bound, x, side="left")
    edge = np.concatenate([[-np.inf], lv])[j]
    return np.minimum(np.maximum(x - below[j] / slope, edge), top)


def clearing_price_ask(book: BookSide, x: float) -> float:
    """Deepest ask level reached by a buy shock with reservation price ``x``."""
    return walk_up(book.prices(), book.level_masses(), x, book.demand_slope)


def clearing_price_bid(book: BookSide, x: float) -> float:
    return -walk_up(-book.prices(), book.level_masses(), -x, book.demand_slope)


def censored_clearing_price(book: BookSide, x: float) -> float:
    """Clearing price reported only when it reaches the touch, else 0."""
    if book.side == "ask":
        p = clearing_price_ask(book, x)
        return p if p >= book.touch_price else 0.0
    p = clearing_price_bid(book, x)
    return p if p <= book.touch_price else 0.0


# assembly -----------------------------------------------------------------

@dataclass
class LOB:
    ask: BookSide
    bid: BookSide
    theta_a: float
    theta_b: float
    stop_a: float
    stop_b: float

    @property
    def imbalance(self) -> float:
        return self.bid.touch_mass / self.ask.touch_mass - 1.0

    def rows(self):
        """``(side, price, mass, origin)`` for every order in the book."""
        for book in (self.ask, self.bid):
            prices = book.prices()
            yield book.side, float(prices[0]), book.extremal_atom, "extremal"
            for i, j in enumerate(book.assignment):
                yield book.side, float(prices[j]), book.agent_mass, f"belief:{i}"
            for j, q in book.exogenous_orders:
                yield book.side, float(prices[j]), q, "exogenous"


def assemble_lob(ask: BookSide, bid: BookSide, paths, node: int = 0) -> LOB:
    if ask.touch_price < bid.touch_price:
        raise ValueError(f"ask touch {ask.touch_price} below bid touch {bid.touch_price}")
    return LOB(ask=ask, bid=bid, theta_a=ask.total_mass, theta_b=bid.total_mass,
               stop_a=float(paths.Va[node]), stop_b=float(paths.Vb[node]))


def solve_book(cfg: MarketConfig, paths, node: int = 0, exogenous_bid=None,
               exogenous_ask=None, grid_points: int | None = None) -> LOB:
    pa, pb = float(paths.pa[node]), float(paths.pb[node])
    ask = solve_book_side("ask", cfg, pa, pb, exogenous_ask, grid_points=grid_points)
    bid = solve_book_side("bid", cfg, pa, pb, exogenous_bid, grid_points=grid_points)
    return assemble_lob(ask, bid, paths, node)

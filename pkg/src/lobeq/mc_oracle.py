"""Monte-Carlo replay of the payoff rules against simulated jump streams.

Paths are drawn in fixed-size batches, each with its own Philox stream
spawned from the root seed, so estimates do not depend on how batches are
scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lob import BookSide, walk_up_many
from .model import BeliefParams
from .rbsde import ValuePaths

BATCH = 1 << 16
RNG_ALGORITHM = "numpy.random.Philox"


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class JumpPath:
    times: np.ndarray
    sizes: np.ndarray
    seed: int


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int | None = None

    def to_dict(self, config_hash: str | None = None) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n_paths": self.n_paths,
                "seed": self.seed, "config_hash": config_hash, "rng": RNG_ALGORITHM}

    def agrees(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr


def _sizes(rng, b: BeliefParams, n: int) -> np.ndarray:
    up = rng.random(n) < b.up_share
    mag = 1.0 - rng.random(n)  # (0, 1]
    return np.where(up, b.support_up * mag, -b.support_down * mag)


def simulate_price_path(b: BeliefParams, T: float, seed: int) -> JumpPath:
    rng = _rng(seed)
    n = rng.poisson(b.rate * T)
    times = np.sort(rng.uniform(0.0, T, n))
    return JumpPath(times=times, sizes=_sizes(rng, b, n), seed=seed)


def simulate_jump_counts(b: BeliefParams, T: float, n_paths: int, seed: int) -> np.ndarray:
    return _rng(seed).poisson(b.rate * T, n_paths)


def _estimate(payoffs: np.ndarray, seed) -> McEstimate:
    n = payoffs.size
    mean = float(np.mean(payoffs))
    std = float(np.std(payoffs, ddof=1)) if n > 1 else 0.0
    return McEstimate(mean=mean, stderr=std / float(np.sqrt(n)), n_paths=n, seed=seed)


def _run(n_paths: int, seed: int, batch_fn) -> McEstimate:
    n_batches = -(-n_paths // BATCH)
    children = np.random.SeedSequence(seed).spawn(n_batches)
    out = []
    for i, child in enumerate(children):
        size = min(BATCH, n_paths - i * BATCH)
        out.append(batch_fn(_rng(child), size))
    return _estimate(np.concatenate(out), seed)


def _replay(rng, size, b, paths: ValuePaths, on_jump) -> np.ndarray:
    """Shared event loop: exponential spacings, node-left price lookup.

    ``on_jump(x, pa, pb)`` returns ``(stops, payoff)`` arrays for the live
    paths receiving a jump of size ``x``.
    """
    dt, n = paths.dt, paths.n
    t_stop = paths.tau_hat_index * dt
    pay = np.full(size, paths.pbar_at_tau)
    live = np.arange(size)
    t = np.zeros(size)
    while live.size:
        t = t + rng.exponential(1.0 / b.rate, live.size)
        going = t < t_stop
        live, t = live[going], t[going]
        if not live.size:
            break
        node = np.minimum((t / dt).astype(np.int64), n - 1)
        x = _sizes(rng, b, live.size)
        stops, value = on_jump(x, paths.pa[node], paths.pb[node])
        pay[live[stops]] = value[stops]
        live, t = live[~stops], t[~stops]
    return pay


def mc_two_player_value(paths: ValuePaths, side: str, b: BeliefParams, n_paths: int,
                        seed: int) -> McEstimate:
    """Value of the extremal long (``ask``) or short (``bid``) agent at time 0.

    The long agent is paid its quote on an up-cross and ``2 pb`` on a
    down-cross; the short agent mirrors this.
    """
    if paths.pa is None:
        raise ValueError("paths need equilibrium prices")
    if side not in ("ask", "bid"):
        raise ValueError(f"side must be 'ask' or 'bid', got {side!r}")
    long = side == "ask"

    def on_jump(x, pa, pb):
        up, down = x > pa, x < pb
        if long:
            value = np.where(up, pa, 2.0 * pb)
        else:
            value = np.where(down, pb, 2.0 * pa)
        return up | down, value

    if paths.tau_hat_index == 0:
        return McEstimate(mean=float(paths.pbar_at_tau), stderr=0.0, n_paths=n_paths, seed=seed)
    return _run(n_paths, seed, lambda rng, size: _replay(rng, size, b, paths, on_jump))


def mc_limit_order_value(belief: BeliefParams, book: BookSide, offset_index: int,
                         paths: ValuePaths, n_paths: int, seed: int,
                         price: float | None = None) -> McEstimate:
    """Value of a long agent resting one sell order in a static ask book.

    The order sits at ``book.prices()[offset_index]`` unless ``price`` is
    given. An up-jump reaching the touch ends the game: the order fills if
    the clearing walk reaches it, otherwise the agent marks ``pb`` plus the
    clearing price. A down-cross of the bid pays ``2 pb``.
    """
    if book.side != "ask":
        raise ValueError("limit-order replay runs on the ask book; mirror bid problems first")
    z = float(book.prices()[offset_index]) if price is None else float(price)
    levels, masses = book.prices(), book.level_masses()
    top = float(levels[-1])

    def on_jump(x, pa, pb):
        hit = x >= pa
        lc = walk_up_many(levels, masses, x, book.demand_slope, top)
        value = np.where(hit, np.where(lc >= z, z, pb + lc), 2.0 * pb)
        return hit | (x < pb), value

    if paths.tau_hat_index == 0:
        return McEstimate(mean=float(paths.pbar_at_tau), stderr=0.0, n_paths=n_paths, seed=seed)
    return _run(n_paths, seed, lambda rng, size: _replay(rng, size, belief, paths, on_jump))

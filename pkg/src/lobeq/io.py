"""CSV and JSON writers shared by the command line and the tests."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from .lob import LOB
from .model import MarketConfig
from .rbsde import ValuePaths


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return "%.17g" % float(x)


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_values_csv(path: Path, paths: ValuePaths) -> Path:
    return write_csv(path, ("t", "Y1", "Y2", "Va", "Vb", "pa", "pb", "K"), paths.rows())


def write_book_csv(path: Path, lob: LOB) -> Path:
    return write_csv(path, ("side", "price", "mass", "origin"), lob.rows())


def strategy_rows(lob: LOB, cfg: MarketConfig):
    levels = cfg.belief_levels()
    for book, sign in ((lob.ask, 1.0), (lob.bid, -1.0)):
        prices = book.agent_prices()
        for i in range(len(levels)):
            yield sign * levels[i] + 0.0, book.side, prices[i]


def write_strategy_csv(path: Path, lob: LOB, cfg: MarketConfig) -> Path:
    return write_csv(path, ("alpha", "side", "optimal_price"), strategy_rows(lob, cfg))


def write_json(path: Path, data: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_plain) + "\n")
    return path


def _plain(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def config_hash(cfg: MarketConfig, extra: dict | None = None) -> str:
    payload = {"config": cfg.to_dict(), "extra": extra or {}}
    blob = json.dumps(payload, sort_keys=True, default=_plain).encode()
    return hashlib.sha256(blob).hexdigest()


def baseline_path() -> Path:
    return Path(str(resources.files("lobeq") / "data" / "baseline.json"))

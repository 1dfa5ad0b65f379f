"""Equilibrium limit order books from a continuum-player stopping game."""

from .feedback import (FeedbackState, imbalance, rates_from_imbalance, solve_feedback_equilibrium,
                       spoof_experiment)
from .kernels import contraction_constants, generator, optimal_offsets
from .lob import (LOB, BookSide, assemble_lob, best_response, clearing_price_ask, fill_score,
                  mollified_fill_score, solve_book, solve_book_side)
from .mc_oracle import mc_limit_order_value, mc_two_player_value, simulate_price_path
from .model import (BeliefParams, DemandCurve, MarketConfig, baseline_config, check_assumptions,
                    demand_maps, eval_density_stats)
from .rbsde import (TimeGrid, ValuePaths, equilibrium_prices, solve_capped_system,
                    solve_equilibrium, solve_reflected_system)

__version__ = "0.1.0"

__all__ = [
    "BeliefParams", "BookSide", "DemandCurve", "FeedbackState", "LOB", "MarketConfig",
    "TimeGrid", "ValuePaths", "assemble_lob", "baseline_config", "best_response",
    "check_assumptions", "clearing_price_ask", "contraction_constants", "demand_maps",
    "equilibrium_prices", "eval_density_stats", "fill_score", "generator", "imbalance",
    "mc_limit_order_value", "mc_two_player_value", "mollified_fill_score", "optimal_offsets",
    "rates_from_imbalance", "simulate_price_path", "solve_book", "solve_book_side",
    "solve_capped_system", "solve_equilibrium", "solve_feedback_equilibrium",
    "solve_reflected_system", "spoof_experiment",
]

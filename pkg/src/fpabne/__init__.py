"""Equilibrium computation for first-price auctions with discrete bids and
subjective piecewise-polynomial priors."""

from .auction import (
    AuctionInstance,
    StrategyProfile,
    best_response,
    brute_force_win_prob,
    tie_table,
    utility,
    verify_epsilon_bne,
    win_prob,
)
from .distributions import PiecewiseCdf, cdf_eval, continuity_delta, lipschitz_bound, validate_cdf

__all__ = [
    "AuctionInstance",
    "StrategyProfile",
    "PiecewiseCdf",
    "best_response",
    "brute_force_win_prob",
    "cdf_eval",
    "continuity_delta",
    "lipschitz_bound",
    "tie_table",
    "utility",
    "validate_cdf",
    "verify_epsilon_bne",
    "win_prob",
]

"""Engagement games: producers choosing embedded content under a recommender's serving rule."""

from .game import (
    GameError,
    GameInstance,
    ServingRule,
    StrategyProfile,
    UserPopulation,
    cached_opponent_sums,
    producer_utility,
    serve_probabilities,
    total_utilities,
)
from .dynamics import (
    DynamicsConfig,
    DynamicsResult,
    best_basis_response,
    brute_force_ne_enumeration,
    run_best_response_dynamics,
    verify_pure_ne_on_basis,
)

__all__ = [
    "GameError",
    "GameInstance",
    "ServingRule",
    "StrategyProfile",
    "UserPopulation",
    "cached_opponent_sums",
    "producer_utility",
    "serve_probabilities",
    "total_utilities",
    "DynamicsConfig",
    "DynamicsResult",
    "best_basis_response",
    "brute_force_ne_enumeration",
    "run_best_response_dynamics",
    "verify_pure_ne_on_basis",
]

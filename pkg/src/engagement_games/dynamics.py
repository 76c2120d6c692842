"""Best-response dynamics over the standard basis, plus a brute-force NE oracle.

Randomness: every run derives its streams from ``numpy.random.SeedSequence``
with the run seed as entropy. Initial strategies come from spawn key ``(0,)``;
the permutation of pass ``t`` (1-based) comes from spawn key ``(1, t)``. All
generators are PCG64, so traces are reproducible across platforms.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .game import (
    GameError,
    GameInstance,
    StrategyProfile,
    UserPopulation,
    ServingRule,
    _cache_from_counts,
    basis_utilities,
    cached_opponent_sums,
    candidate_utility,
)

NE_TOL = 1e-12
BRUTE_FORCE_LIMIT = 10**6
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class DynamicsConfig:
    max_iters: int = 500
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise GameError("max_iters must be >= 1")


@dataclass
class DynamicsResult:
    converged: bool
    iterations: int
    profile: StrategyProfile
    trace: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "basis": [int(f) for f in self.profile.basis],
            "trace": [list(map(int, ev)) for ev in self.trace],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _generator(seed: int, *spawn_key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))


def _pick(utilities: np.ndarray, current: int) -> int:
    best = utilities.max()
    if utilities[current] == best:
        return current
    return int(np.argmax(utilities))


def best_basis_response(
    i: int, profile: StrategyProfile, users: UserPopulation, rule: ServingRule
) -> tuple[int, float]:
    """Best standard-basis response of producer ``i`` and its utility.

    Exact ties keep the producer's current feature when it is a maximizer,
    otherwise the lowest maximizing index is returned.
    """
    if not profile.is_basis:
        raise GameError("best_basis_response needs a basis profile")
    cache = cached_opponent_sums(profile, users, rule, i)
    u = basis_utilities(cache, users)
    f = _pick(u, int(profile.basis[i]))
    return f, float(u[f])


def _feature_utilities(users, counts, feature, rule):
    """Basis utilities for a producer currently on ``feature`` given global counts."""
    opp = counts.copy()
    opp[feature] -= 1
    return basis_utilities(_cache_from_counts(users, opp, rule), users)


def run_best_response_dynamics(game: GameInstance, config: DynamicsConfig) -> DynamicsResult:
    users, rule, n, d = game.users, game.rule, game.n, game.d
    basis = _generator(config.seed, 0).integers(0, d, size=n)
    counts = np.bincount(basis, minlength=d)
    trace = []
    converged = False
    iterations = 0
    while iterations < config.max_iters:
        iterations += 1
        perm = _generator(config.seed, 1, iterations).permutation(n)
        # state is fixed until the first update, so producers sharing a feature share a response
        memo: dict[int, tuple[int, float, float]] = {}
        updated = False
        for i in perm:
            cur = int(basis[i])
            if cur not in memo:
                u = _feature_utilities(users, counts, cur, rule)
                f = _pick(u, cur)
                memo[cur] = (f, u[f], u[cur])
            f, u_best, u_cur = memo[cur]
            if u_best > u_cur:
                basis[i] = f
                counts[cur] -= 1
                counts[f] += 1
                trace.append((iterations, int(i), cur, f))
                updated = True
                break
        if not updated:
            converged = True
            break
    profile = StrategyProfile.from_basis(basis, d)
    if converged and not verify_pure_ne_on_basis(profile, game):
        raise AssertionError("dynamics reported convergence on a profile that is not an equilibrium")
    return DynamicsResult(converged, iterations, profile, trace)


def verify_pure_ne_on_basis(profile: StrategyProfile, game: GameInstance, tol: float = NE_TOL) -> bool:
    """True iff no producer gains more than ``tol`` by moving to any basis vector."""
    if not profile.is_basis:
        raise GameError("verify_pure_ne_on_basis needs a basis profile")
    if profile.n != game.n or profile.d != game.d:
        raise GameError(f"profile (n={profile.n}, d={profile.d}) does not match game (n={game.n}, d={game.d})")
    counts = profile.counts()
    for f in np.nonzero(counts)[0]:
        u = _feature_utilities(game.users, counts, int(f), game.rule)
        if u.max() > u[f] + tol:
            return False
    return True


def verify_pure_ne(profile: StrategyProfile, game: GameInstance, tol: float = NE_TOL) -> bool:
    """Basis-deviation check for profiles in either form.

    Compares each producer's current utility against every basis vector; by
    convexity of the utility in the producer's own strategy, a best response is
    always attained on the basis.
    """
    if profile.is_basis:
        return verify_pure_ne_on_basis(profile, game, tol)
    if profile.n != game.n or profile.d != game.d:
        raise GameError(f"profile (n={profile.n}, d={profile.d}) does not match game (n={game.n}, d={game.d})")
    for i in range(profile.n):
        cache = cached_opponent_sums(profile, game.users, game.rule, i)
        current = candidate_utility(profile.matrix[i], cache, game.users)
        if basis_utilities(cache, game.users).max() > current + tol:
            return False
    return True


def brute_force_ne_enumeration(game: GameInstance, limit: Optional[int] = BRUTE_FORCE_LIMIT) -> list[StrategyProfile]:
    """All basis profiles that are pure NE, in lexicographic order."""
    total = game.d**game.n
    if limit is not None and total > limit:
        raise GameError(f"brute force over d^n = {total} profiles exceeds the limit of {limit}")
    found = []
    for combo in itertools.product(range(game.d), repeat=game.n):
        profile = StrategyProfile.from_basis(combo, game.d)
        if verify_pure_ne_on_basis(profile, game):
            found.append(profile)
    return found

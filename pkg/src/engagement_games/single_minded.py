"""Closed-form equilibria for single-minded users under the linear rule.

With ``m_f`` users sitting exactly on ``e_f`` and ``n_f`` producers on
``e_f``, a producer on feature f earns ``m_f / n_f``. All comparisons below
are done by integer cross-multiplication.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .game import GameError, GameInstance, ServingRule, StrategyProfile, UserPopulation


def _as_counts(values: Sequence[int], name: str) -> tuple[int, ...]:
    out = []
    for v in values:
        if int(v) != v:
            raise GameError(f"{name} entries must be integers, got {v!r}")
        out.append(int(v))
    return tuple(out)


@dataclass(frozen=True)
class SingleMindedPopulation:
    m: tuple[int, ...]

    def __post_init__(self):
        m = _as_counts(self.m, "m")
        if not m:
            raise GameError("m must have at least one feature")
        if any(v <= 0 for v in m):
            raise GameError(f"every m_f must be positive, got {list(m)}")
        object.__setattr__(self, "m", m)

    @property
    def d(self) -> int:
        return len(self.m)

    def to_users(self) -> UserPopulation:
        """Explicit population: m_f copies of e_f for every f."""
        rows = np.repeat(np.eye(self.d), self.m, axis=0)
        return UserPopulation(rows)

    def game(self, n: int) -> GameInstance:
        return GameInstance(self.to_users(), n, ServingRule.linear())


@dataclass(frozen=True)
class CountProfile:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = _as_counts(self.counts, "counts")
        if any(v < 0 for v in counts):
            raise GameError(f"counts must be non-negative, got {list(counts)}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    def to_basis_profile(self) -> StrategyProfile:
        return StrategyProfile.from_basis(np.repeat(np.arange(len(self.counts)), self.counts), len(self.counts))

    @classmethod
    def from_basis_profile(cls, profile: StrategyProfile) -> "CountProfile":
        return cls(tuple(int(c) for c in profile.counts()))


def _validate(m: SingleMindedPopulation, counts: CountProfile) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if len(m.m) != len(counts.counts):
        raise GameError(f"dimension mismatch: m has {len(m.m)} features, counts has {len(counts.counts)}")
    return m.m, counts.counts


def single_minded_equilibrium_check(m: SingleMindedPopulation, counts: CountProfile) -> bool:
    """``n_f / m_f <= (n_g + 1) / m_g`` for every pair of features."""
    mm, nn = _validate(m, counts)
    return all(nf * mg <= (ng + 1) * mf for nf, mf in zip(nn, mm) for ng, mg in zip(nn, mm))


def single_minded_brute_deviation_check(m: SingleMindedPopulation, counts: CountProfile) -> bool:
    """No occupied-feature producer gains by moving: ``m_f/n_f >= m_g/(n_g+1)``."""
    mm, nn = _validate(m, counts)
    for f, (nf, mf) in enumerate(zip(nn, mm)):
        if nf == 0:
            continue
        for g, (ng, mg) in enumerate(zip(nn, mm)):
            if g != f and mf * (ng + 1) < mg * nf:
                return False
    return True


def equilibrium_slack(m: SingleMindedPopulation, counts: CountProfile) -> Fraction:
    """Largest violation of the pairwise condition, clamped at zero."""
    mm, nn = _validate(m, counts)
    worst = max(Fraction(nf, mf) - Fraction(ng + 1, mg) for nf, mf in zip(nn, mm) for ng, mg in zip(nn, mm))
    return max(worst, Fraction(0))


@dataclass(frozen=True)
class ProportionalResult:
    counts: CountProfile
    exact: bool
    slack: Fraction


def proportional_profile(m: SingleMindedPopulation, n: int) -> ProportionalResult:
    """Producers split in proportion to ``m`` (largest remainder, ties to lowest index)."""
    if n < 0:
        raise GameError("n must be >= 0")
    total = sum(m.m)
    quotas = [divmod(mf * n, total) for mf in m.m]
    counts = [q for q, _ in quotas]
    left = n - sum(counts)
    order = sorted(range(m.d), key=lambda f: (-quotas[f][1], f))
    for f in order[:left]:
        counts[f] += 1
    profile = CountProfile(tuple(counts))
    exact = all(r == 0 for _, r in quotas)
    return ProportionalResult(profile, exact, equilibrium_slack(m, profile))


def report(m: SingleMindedPopulation, counts: CountProfile) -> dict:
    return {
        "m": list(m.m),
        "counts": list(counts.counts),
        "is_equilibrium": single_minded_equilibrium_check(m, counts),
        "slack": float(equilibrium_slack(m, counts)),
    }

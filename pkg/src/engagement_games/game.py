"""Core model of the engagement game.

Users are non-negative preference vectors on the simplex, producers pick
content vectors, and a serving rule (linear-proportional or softmax) decides
how often each producer is shown to each user. A producer's engagement
utility weights that probability by the alignment ``c . s_i``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

ROW_NORM_TOL = 1e-12


class GameError(ValueError):
    """Invalid game input (bad shape, negative weight, non-finite value, ...)."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UserPopulation:
    """K users with L1-normalized non-negative preference rows (K x d)."""

    weights: np.ndarray
    strictly_positive: bool = field(init=False)
    spans_space: bool = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise GameError(f"user weights must be a non-empty 2-D array, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise GameError("user weights contain non-finite values")
        if np.any(w < 0):
            rows = np.unique(np.nonzero(w < 0)[0])
            raise GameError(f"user weights must be non-negative (rows {rows[:5].tolist()})")
        sums = w.sum(axis=1)
        if np.any(sums == 0):
            rows = np.nonzero(sums == 0)[0]
            raise GameError(f"all-zero user rows cannot be normalized (rows {rows[:5].tolist()})")
        if np.any(np.abs(sums - 1.0) > ROW_NORM_TOL):
            w = w / sums[:, None]
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "strictly_positive", bool(w.min() > 0))
        object.__setattr__(self, "spans_space", bool(np.linalg.matrix_rank(w) == w.shape[1]))
        if not self.strictly_positive:
            logger.debug("user population has zero entries")
        if not self.spans_space:
            logger.debug("user population does not span R^d")

    @classmethod
    def from_array(cls, weights, *, warn: bool = True) -> "UserPopulation":
        """Build from raw rows, renormalizing to L1 = 1 (with a warning if any row moved)."""
        w = np.asarray(weights, dtype=np.float64)
        if warn and w.ndim == 2 and w.size and np.all(np.isfinite(w)) and np.all(w >= 0):
            sums = w.sum(axis=1)
            off = np.abs(sums - 1.0) > ROW_NORM_TOL
            if np.any(off & (sums > 0)):
                warnings.warn(
                    f"{int(off.sum())} user rows were not L1-normalized; rescaled to sum 1",
                    stacklevel=2,
                )
        return cls(w)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def feature_totals(self) -> np.ndarray:
        """Total user weight per feature, sum_k c_k(f)."""
        return np.array([math.fsum(col) for col in self.weights.T])

    @property
    def transposed(self) -> np.ndarray:
        # d x K contiguous copy so feature-wise reductions use pairwise summation
        cached = self.__dict__.get("_transposed")
        if cached is None:
            cached = np.ascontiguousarray(self.weights.T)
            cached.setflags(write=False)
            object.__setattr__(self, "_transposed", cached)
        return cached


@dataclass(frozen=True)
class ServingRule:
    kind: str
    tau: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("linear", "softmax"):
            raise GameError(f"unknown serving rule {self.kind!r}")
        if self.kind == "softmax":
            if self.tau is None or not math.isfinite(self.tau) or self.tau <= 0:
                raise GameError(f"softmax temperature must be a positive finite number, got {self.tau}")
            object.__setattr__(self, "tau", float(self.tau))
        elif self.tau is not None:
            raise GameError("the linear rule takes no temperature")

    @classmethod
    def linear(cls) -> "ServingRule":
        return cls("linear")

    @classmethod
    def softmax(cls, tau: float) -> "ServingRule":
        return cls("softmax", tau)

    @property
    def is_softmax(self) -> bool:
        return self.kind == "softmax"

    def label(self) -> str:
        return "linear" if self.kind == "linear" else f"softmax(tau={self.tau:g})"


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """Joint producer action, either as feature indices or as an n x d matrix.

    Build with :meth:`from_basis` or :meth:`from_matrix`.
    """

    n: int
    d: int
    basis: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None

    @classmethod
    def from_basis(cls, indices: Sequence[int], d: int) -> "StrategyProfile":
        idx = np.asarray(indices)
        if idx.ndim != 1 or idx.size < 1:
            raise GameError("a basis profile needs at least one producer")
        if not np.issubdtype(idx.dtype, np.integer):
            if not np.all(np.equal(np.mod(idx, 1), 0)):
                raise GameError("basis indices must be integers")
        idx = idx.astype(np.int64)
        if d < 1 or np.any(idx < 0) or np.any(idx >= d):
            raise GameError(f"basis indices must lie in [0, {d})")
        idx.setflags(write=False)
        return cls(n=int(idx.size), d=int(d), basis=idx)

    @classmethod
    def from_matrix(cls, matrix) -> "StrategyProfile":
        s = np.array(matrix, dtype=np.float64, copy=True)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise GameError(f"strategy matrix must be a non-empty 2-D array, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise GameError("strategy matrix contains non-finite values")
        if np.any(s < 0):
            raise GameError("strategy entries must be non-negative")
        norms = s.sum(axis=1)
        if np.any(norms > 1 + ROW_NORM_TOL):
            raise GameError(f"strategy rows must have L1 norm <= 1 (max {norms.max()!r})")
        over = norms > 1
        s[over] /= norms[over, None]
        s.setflags(write=False)
        return cls(n=s.shape[0], d=s.shape[1], matrix=s)

    @property
    def is_basis(self) -> bool:
        return self.basis is not None

    def to_matrix(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        s = np.zeros((self.n, self.d))
        s[np.arange(self.n), self.basis] = 1.0
        return s

    def counts(self) -> np.ndarray:
        """Number of producers on each feature (basis profiles only)."""
        if self.basis is None:
            raise GameError("counts are only defined for basis profiles")
        return np.bincount(self.basis, minlength=self.d)

    def to_json(self) -> dict:
        if self.basis is not None:
            return {"n": self.n, "d": self.d, "basis": [int(f) for f in self.basis]}
        return {"n": self.n, "d": self.d, "matrix": self.matrix.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "StrategyProfile":
        try:
            n, d = int(obj["n"]), int(obj["d"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GameError(f"profile JSON needs integer 'n' and 'd': {exc}") from None
        if "basis" in obj:
            profile = cls.from_basis(obj["basis"], d)
        elif "matrix" in obj:
            profile = cls.from_matrix(obj["matrix"])
        else:
            raise GameError("profile JSON needs a 'basis' or 'matrix' entry")
        if (profile.n, profile.d) != (n, d):
            raise GameError(f"profile declares n={n}, d={d} but holds n={profile.n}, d={profile.d}")
        return profile


@dataclass(frozen=True, eq=False)
class GameInstance:
    users: UserPopulation
    n: int
    rule: ServingRule

    def __post_init__(self):
        if int(self.n) < 1:
            raise GameError("a game needs at least one producer")
        object.__setattr__(self, "n", int(self.n))

    @property
    def d(self) -> int:
        return self.users.d


def load_profile(path: Union[str, Path]) -> StrategyProfile:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"{path}: invalid JSON ({exc})") from None
    return StrategyProfile.from_json(obj)


def save_profile(profile: StrategyProfile, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(profile.to_json()) + "\n")


# ---------------------------------------------------------------------------
# Serving probabilities and utilities
# ---------------------------------------------------------------------------


def _check_dims(users_d: int, profile: StrategyProfile) -> None:
    if users_d != profile.d:
        raise GameError(f"dimension mismatch: users have d={users_d}, profile has d={profile.d}")


def _serve_rows(inner: np.ndarray, rule: ServingRule) -> np.ndarray:
    """Serving probabilities for a (K, n) matrix of inner products c_k . s_j."""
    if rule.is_softmax:
        z = (inner - inner.max(axis=1, keepdims=True)) / rule.tau
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    totals = inner.sum(axis=1, keepdims=True)
    out = np.zeros_like(inner)
    np.divide(inner, totals, out=out, where=(inner > 0) & (totals > 0))
    return out


def serve_probabilities(c, profile: StrategyProfile, rule: ServingRule) -> np.ndarray:
    """Probability that each producer is shown to a user with preferences ``c``.

    Softmax uses max-subtraction; the linear rule gives probability 0 to any
    producer with zero alignment, and all zeros if nobody aligns.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1:
        raise GameError("user vector must be 1-D")
    _check_dims(c.size, profile)
    if not np.all(np.isfinite(c)):
        raise GameError("user vector contains non-finite values")
    if np.any(c < 0):
        raise GameError("user vector must be non-negative")
    inner = profile.to_matrix() @ c
    return _serve_rows(inner[None, :], rule)[0]


def _engagement(users: UserPopulation, profile: StrategyProfile, rule: ServingRule) -> np.ndarray:
    """K x n matrix of p_i(c_k, s) * (c_k . s_i)."""
    _check_dims(users.d, profile)
    inner = users.weights @ profile.to_matrix().T
    return _serve_rows(inner, rule) * inner


def producer_utility(i: int, profile: StrategyProfile, users: UserPopulation, rule: ServingRule) -> float:
    if not 0 <= i < profile.n:
        raise GameError(f"producer index {i} out of range for n={profile.n}")
    return math.fsum(_engagement(users, profile, rule)[:, i])


def producer_utilities(profile: StrategyProfile, users: UserPopulation, rule: ServingRule) -> np.ndarray:
    eng = np.ascontiguousarray(_engagement(users, profile, rule).T)
    return np.array([math.fsum(row) for row in eng])


def total_utilities(profile: StrategyProfile, users: UserPopulation, rule: ServingRule) -> tuple[float, float]:
    """Return ``(U_p, U_u)``, each summed in its own order.

    U_p adds users within each producer first; U_u adds producers within each
    user first. Both sums are correctly rounded (fsum).
    """
    eng = _engagement(users, profile, rule)
    per_producer = [math.fsum(col) for col in np.ascontiguousarray(eng.T)]
    per_user = [math.fsum(row) for row in eng]
    return math.fsum(per_producer), math.fsum(per_user)


# ---------------------------------------------------------------------------
# Opponent caches: utility of every basis vector for one producer in O(K d)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OpponentCache:
    """Per-user opponent aggregates for one producer.

    Linear rule: ``sums[k] = sum_{j != i} c_k . s_j``.
    Softmax: ``max_exponent[k]`` is the largest opponent inner product and
    ``exp_sums[k] = sum_{j != i} exp((c_k . s_j - max_exponent[k]) / tau)``.
    With no opponents every array is zero.
    """

    rule: ServingRule
    sums: Optional[np.ndarray] = None
    max_exponent: Optional[np.ndarray] = None
    exp_sums: Optional[np.ndarray] = None


def _cache_from_counts(users: UserPopulation, counts: np.ndarray, rule: ServingRule) -> OpponentCache:
    c = users.weights
    if not rule.is_softmax:
        return OpponentCache(rule, sums=c @ counts.astype(np.float64))
    occupied = np.nonzero(counts > 0)[0]
    if occupied.size == 0:
        zeros = np.zeros(users.K)
        return OpponentCache(rule, max_exponent=zeros, exp_sums=zeros.copy())
    sub = c[:, occupied]
    m = sub.max(axis=1)
    e = np.exp((sub - m[:, None]) / rule.tau) @ counts[occupied].astype(np.float64)
    return OpponentCache(rule, max_exponent=m, exp_sums=e)


def cached_opponent_sums(
    profile: StrategyProfile, users: UserPopulation, rule: ServingRule, i: int
) -> OpponentCache:
    _check_dims(users.d, profile)
    if not 0 <= i < profile.n:
        raise GameError(f"producer index {i} out of range for n={profile.n}")
    if profile.is_basis:
        counts = profile.counts()
        counts[profile.basis[i]] -= 1
        return _cache_from_counts(users, counts, rule)
    inner = users.weights @ np.delete(profile.matrix, i, axis=0).T
    if not rule.is_softmax:
        return OpponentCache(rule, sums=inner.sum(axis=1))
    if inner.shape[1] == 0:
        zeros = np.zeros(users.K)
        return OpponentCache(rule, max_exponent=zeros, exp_sums=zeros.copy())
    m = inner.max(axis=1)
    return OpponentCache(rule, max_exponent=m, exp_sums=np.exp((inner - m[:, None]) / rule.tau).sum(axis=1))


def _utility_terms(x: np.ndarray, cache: OpponentCache) -> np.ndarray:
    """Per-user engagement for candidate inner products ``x`` (broadcast over users)."""
    rule = cache.rule
    if not rule.is_softmax:
        denom = x + cache.sums
        out = np.zeros(np.broadcast(x, denom).shape)
        np.divide(x * x, denom, out=out, where=x > 0)
        return out
    m = cache.max_exponent
    top = np.maximum(x, m)
    own = np.exp((x - top) / rule.tau)
    rest = cache.exp_sums * np.exp((m - top) / rule.tau)
    return x * own / (own + rest)


def basis_utilities(cache: OpponentCache, users: UserPopulation) -> np.ndarray:
    """Utility of playing ``e_f`` against the cached opponents, for every f."""
    return _utility_terms(users.transposed, cache).sum(axis=1)


def candidate_utility(s, cache: OpponentCache, users: UserPopulation) -> float:
    """Utility of an arbitrary content vector ``s`` against the cached opponents."""
    x = users.weights @ np.asarray(s, dtype=np.float64)
    return math.fsum(_utility_terms(x, cache))

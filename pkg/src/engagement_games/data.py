"""User populations: simplex samplers, ratings loading, NMF embeddings, CSV I/O."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .game import GameError, UserPopulation

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DataError(ValueError):
    """Malformed input data (ratings or users files)."""


# ---------------------------------------------------------------------------
# Synthetic populations
# ---------------------------------------------------------------------------


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _simplex_rows(rng: np.random.Generator, K: int, d: int) -> np.ndarray:
    # normalized unit exponentials == flat Dirichlet == uniform on the simplex
    e = rng.standard_exponential((K, d))
    return e / e.sum(axis=1, keepdims=True)


def sample_uniform_population(K: int, d: int, seed: int) -> UserPopulation:
    if K < 1 or d < 1:
        raise GameError("K and d must be >= 1")
    return UserPopulation(_simplex_rows(_rng(seed), K, d))


def sample_skewed_population(K: int, d: int, seed: int) -> tuple[UserPopulation, np.ndarray]:
    """Uniform users re-weighted by sorted simplex weights ``w``, then renormalized.

    Returns the population and ``w`` (ascending).
    """
    if K < 1 or d < 1:
        raise GameError("K and d must be >= 1")
    rng = _rng(seed)
    w = np.sort(_simplex_rows(rng, 1, d)[0])
    c = _simplex_rows(rng, K, d) * w
    return UserPopulation(c / c.sum(axis=1, keepdims=True)), w


# ---------------------------------------------------------------------------
# Users CSV
# ---------------------------------------------------------------------------


def save_population(users: UserPopulation, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(users.d)])
        for row in users.weights:
            writer.writerow([format(float(v), ".17g") for v in row])


def load_population(path: PathLike) -> UserPopulation:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty users file") from None
        expected = [f"f{j}" for j in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise DataError(f"{path}: header must be f0,...,f{{d-1}}, got {header[:4]}...")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparsable value") from None
    if not rows:
        raise DataError(f"{path}: no user rows")
    try:
        return UserPopulation.from_array(np.array(rows))
    except GameError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Ratings
# ---------------------------------------------------------------------------


@dataclass
class RatingsTable:
    """Deduplicated (user, item, rating) triples with dense index maps."""

    users: list[str]
    items: list[str]
    user_idx: np.ndarray
    item_idx: np.ndarray
    ratings: np.ndarray
    duplicates: int = 0
    rows_read: int = 0
    user_index: dict = field(init=False, repr=False)
    item_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.user_index = {u: k for k, u in enumerate(self.users)}
        self.item_index = {it: k for k, it in enumerate(self.items)}

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def __len__(self) -> int:
        return len(self.ratings)

    def triples(self) -> list[tuple[str, str, float]]:
        return [
            (self.users[u], self.items[i], float(r))
            for u, i, r in zip(self.user_idx, self.item_idx, self.ratings)
        ]

    def to_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.ratings, (self.user_idx, self.item_idx)), shape=(self.n_users, self.n_items)
        )

    @classmethod
    def from_triples(cls, triples) -> "RatingsTable":
        latest: dict[tuple[str, str], float] = {}
        rows = 0
        for user, item, rating in triples:
            rows += 1
            rating = float(rating)
            if not math.isfinite(rating) or rating < 0:
                raise DataError(f"rating {rating!r} for ({user}, {item}) must be finite and >= 0")
            latest.pop((user, item), None)  # keep insertion order of the last occurrence
            latest[(user, item)] = rating
        return cls._build(latest, rows)

    @classmethod
    def _build(cls, latest: dict, rows: int) -> "RatingsTable":
        if not latest:
            raise DataError("no ratings")
        users: dict[str, int] = {}
        items: dict[str, int] = {}
        ui, ii, rr = [], [], []
        for (user, item), rating in latest.items():
            ui.append(users.setdefault(user, len(users)))
            ii.append(items.setdefault(item, len(items)))
            rr.append(rating)
        return cls(
            users=list(users),
            items=list(items),
            user_idx=np.array(ui, dtype=np.int64),
            item_idx=np.array(ii, dtype=np.int64),
            ratings=np.array(rr, dtype=np.float64),
            duplicates=rows - len(latest),
            rows_read=rows,
        )


def load_ratings_csv(
    path: PathLike, user_col: str = "user", item_col: str = "item", rating_col: str = "rating"
) -> RatingsTable:
    """Read a ratings CSV; a repeated (user, item) pair keeps its last rating."""
    latest: dict[tuple[str, str], float] = {}
    rows = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in (user_col, item_col, rating_col) if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            lineno = reader.line_num
            try:
                rating = float(row[rating_col])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: unparsable rating {row[rating_col]!r}") from None
            if not math.isfinite(rating) or rating < 0:
                raise DataError(f"{path}:{lineno}: rating {rating!r} must be finite and >= 0")
            key = (row[user_col], row[item_col])
            latest.pop(key, None)
            latest[key] = rating
            rows += 1
    if not latest:
        raise DataError(f"{path}: no rating rows")
    table = RatingsTable._build(latest, rows)
    logger.info(
        "%s: %d rows, %d users, %d items, %d duplicates",
        path, rows, table.n_users, table.n_items, table.duplicates,
    )
    return table


# ---------------------------------------------------------------------------
# NMF
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NmfConfig:
    rank: int
    iterations: int = 200
    seed: int = 0
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.rank < 1:
            raise GameError("NMF rank must be >= 1")
        if self.iterations < 1:
            raise GameError("NMF iterations must be >= 1")
        if not self.epsilon > 0:
            raise GameError("NMF epsilon must be > 0")


@dataclass
class NmfResult:
    W: np.ndarray
    H: np.ndarray
    losses: list[float]


def _predict(rows, cols, W, H) -> np.ndarray:
    return np.einsum("ij,ij->i", np.take(W, rows, axis=0), np.take(H, cols, axis=0))


def _pattern(major, minor, values, n_major, n_minor) -> sp.csr_matrix:
    indptr = np.concatenate([[0], np.cumsum(np.bincount(major, minlength=n_major))])
    return sp.csr_matrix((values, minor, indptr), shape=(n_major, n_minor))


def _sq_error(observed, pred) -> float:
    resid = observed - pred
    return float(resid @ resid)


def nmf_factorize(ratings: RatingsTable, config: NmfConfig) -> NmfResult:
    """Masked Lee-Seung multiplicative updates: R ~ W H^T on observed entries only.

    ``losses[t]`` is the squared error over observed entries after ``t``
    updates (``losses[0]`` is the initial loss).
    """
    if len(ratings) == 0:
        raise DataError("no ratings to factorize")
    if config.rank > min(ratings.n_users, ratings.n_items):
        raise GameError(
            f"rank {config.rank} exceeds min(#users, #items) = {min(ratings.n_users, ratings.n_items)}"
        )
    # fixed sparsity patterns for R and R^T (explicit zero ratings kept); only data changes per step
    rows, cols = ratings.user_idx, ratings.item_idx
    by_user = np.lexsort((cols, rows))
    by_item = np.lexsort((rows, cols))
    rows, cols = rows[by_user], cols[by_user]
    observed = ratings.ratings[by_user]
    # position of each item-major entry within the user-major ordering
    to_t = np.argsort(by_user)[by_item]
    r = _pattern(rows, cols, observed, ratings.n_users, ratings.n_items)
    rt = _pattern(cols[to_t], rows[to_t], observed[to_t], ratings.n_items, ratings.n_users)
    p = r.copy()
    pt = rt.copy()
    rng = np.random.default_rng(config.seed)
    eps = config.epsilon
    W = np.maximum(rng.uniform(0.0, 1.0, (ratings.n_users, config.rank)), eps)
    H = np.maximum(rng.uniform(0.0, 1.0, (ratings.n_items, config.rank)), eps)

    pred = _predict(rows, cols, W, H)
    losses = [_sq_error(observed, pred)]
    for t in range(config.iterations):
        p.data = pred
        W = np.maximum(W * (r @ H) / np.maximum(p @ H, eps), eps)
        pt.data = _predict(rows, cols, W, H)[to_t]
        H = np.maximum(H * (rt @ W) / np.maximum(pt @ W, eps), eps)
        pred = _predict(rows, cols, W, H)
        losses.append(_sq_error(observed, pred))
        logger.debug("nmf iter %d loss %.12g", t + 1, losses[-1])
    return NmfResult(W, H, losses)


def nmf_user_embeddings(
    ratings: RatingsTable, config: NmfConfig, log_path: Optional[PathLike] = None
) -> UserPopulation:
    """User factor rows of an NMF of the ratings, L1-normalized."""
    result = nmf_factorize(ratings, config)
    if log_path is not None:
        write_nmf_log(result.losses, log_path)
    sums = result.W.sum(axis=1)
    if np.any(sums <= 0):
        bad = [ratings.users[k] for k in np.nonzero(sums <= 0)[0][:5]]
        raise DataError(f"users with an all-zero factor row after training: {bad}")
    return UserPopulation(result.W / sums[:, None])


def write_nmf_log(losses, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "loss"])
        for t, loss in enumerate(losses):
            writer.writerow([t, format(loss, ".17g")])

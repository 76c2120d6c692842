"""Experiment harness: single instances, full sweeps and their summaries."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import (
    NmfConfig,
    load_population,
    load_ratings_csv,
    nmf_user_embeddings,
    sample_skewed_population,
    sample_uniform_population,
)
from .dynamics import DynamicsConfig, run_best_response_dynamics
from .game import GameError, GameInstance, ServingRule, StrategyProfile, UserPopulation, total_utilities

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RESULT_COLUMNS = [
    "dataset", "rule", "tau", "n", "d", "embed_seed", "run_seed", "converged", "iterations",
    "distinct_features", "entropy", "avg_prod_utility", "avg_user_utility", "total_utility",
    "producer_fractions", "user_weights", "error",
]

DEFAULT_EMBED_SEEDS = (13, 17, 19, 23, 29)


def specialization_metrics(profile: StrategyProfile) -> tuple[int, float, np.ndarray]:
    """Distinct occupied features, entropy of the producer split, and the split itself."""
    counts = profile.counts()
    fractions = counts / profile.n
    occupied = fractions[counts > 0]
    entropy = -math.fsum(occupied * np.log(occupied))
    return int((counts > 0).sum()), max(entropy, 0.0), fractions


@dataclass
class EquilibriumReport:
    producer_fractions: np.ndarray
    user_weights: np.ndarray
    distinct_features: int
    entropy: float
    avg_prod_utility: float
    total_prod_utility: float
    avg_user_utility: float
    total_user_utility: float
    converged: bool
    iterations: int
    profile: Optional[StrategyProfile] = field(default=None, repr=False)


def run_instance(game: GameInstance, config: DynamicsConfig) -> EquilibriumReport:
    """Run the dynamics once and describe the final profile (converged or not)."""
    result = run_best_response_dynamics(game, config)
    distinct, entropy, fractions = specialization_metrics(result.profile)
    u_p, u_u = total_utilities(result.profile, game.users, game.rule)
    if abs(u_p - u_u) > 1e-9 * max(abs(u_p), abs(u_u), 1e-300):
        raise AssertionError(f"total producer utility {u_p!r} differs from total user utility {u_u!r}")
    if abs(math.fsum(fractions) - 1.0) > 1e-12:
        raise AssertionError("producer fractions do not sum to 1")
    return EquilibriumReport(
        producer_fractions=fractions,
        user_weights=game.users.feature_totals / game.users.K,
        distinct_features=distinct,
        entropy=entropy,
        avg_prod_utility=u_p / game.n,
        total_prod_utility=u_p,
        avg_user_utility=u_u / game.users.K,
        total_user_utility=u_u,
        converged=result.converged,
        iterations=result.iterations,
        profile=result.profile,
    )


# ---------------------------------------------------------------------------
# Sweep specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UsersSource:
    """Where a dataset's users come from.

    ``kind`` is ``uniform`` / ``skewed`` (generated with ``K`` users per embed
    seed), ``file`` (a fixed users CSV) or ``ratings`` (NMF of a ratings CSV,
    one factorization per embed seed and dimension).
    """

    name: str
    kind: str
    K: int = 10_000
    path: Optional[str] = None
    user_col: str = "user"
    item_col: str = "item"
    rating_col: str = "rating"
    nmf_iters: int = 200

    @classmethod
    def from_json(cls, obj: dict) -> "UsersSource":
        obj = dict(obj)
        if "dist" in obj:
            kind = obj.pop("dist")
        elif "file" in obj:
            kind, obj["path"] = "file", obj.pop("file")
        elif "ratings" in obj:
            kind, obj["path"] = "ratings", obj.pop("ratings")
        else:
            kind = obj.pop("kind", None)
        if kind not in ("uniform", "skewed", "file", "ratings"):
            raise GameError(f"unknown users source {kind!r}")
        name = obj.pop("name", kind if kind in ("uniform", "skewed") else Path(obj.get("path", kind)).stem)
        obj.pop("kind", None)
        return cls(name=name, kind=kind, **obj)

    def population(self, d: int, embed_seed: int) -> UserPopulation:
        if self.kind == "uniform":
            return sample_uniform_population(self.K, d, embed_seed)
        if self.kind == "skewed":
            return sample_skewed_population(self.K, d, embed_seed)[0]
        if self.kind == "file":
            users = load_population(self.path)
            if users.d != d:
                raise GameError(f"{self.path} has d={users.d}, sweep asked for d={d}")
            return users
        ratings = load_ratings_csv(self.path, self.user_col, self.item_col, self.rating_col)
        return nmf_user_embeddings(ratings, NmfConfig(rank=d, iterations=self.nmf_iters, seed=embed_seed))


def _parse_rule(obj) -> ServingRule:
    if isinstance(obj, ServingRule):
        return obj
    if obj == "linear":
        return ServingRule.linear()
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return ServingRule.softmax(float(obj))
    if isinstance(obj, dict):
        return ServingRule(obj.get("kind", "softmax"), obj.get("tau"))
    raise GameError(f"cannot parse serving rule {obj!r}")


@dataclass(frozen=True)
class SweepSpec:
    producers: tuple[int, ...]
    dims: tuple[int, ...]
    rules: tuple[ServingRule, ...]
    datasets: tuple[UsersSource, ...]
    embed_seeds: tuple[int, ...] = DEFAULT_EMBED_SEEDS
    run_seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    max_iters: int = 500

    def __post_init__(self):
        for name in ("producers", "dims", "rules", "datasets", "embed_seeds", "run_seeds"):
            if not getattr(self, name):
                raise GameError(f"sweep spec field {name!r} must be non-empty")
        if self.max_iters < 1:
            raise GameError("max_iters must be >= 1")

    @classmethod
    def from_json(cls, obj: dict) -> "SweepSpec":
        if "datasets" in obj:
            datasets = tuple(UsersSource.from_json(o) for o in obj["datasets"])
        elif "users" in obj:
            datasets = (UsersSource.from_json(obj["users"]),)
        else:
            raise GameError("sweep spec needs 'users' or 'datasets'")
        if "run_seeds" in obj:
            run_seeds = tuple(int(s) for s in obj["run_seeds"])
        else:
            run_seeds = tuple(range(1, int(obj.get("runs", 5)) + 1))
        return cls(
            producers=tuple(int(n) for n in obj["producers"]),
            dims=tuple(int(d) for d in obj["dims"]),
            rules=tuple(_parse_rule(r) for r in obj["rules"]),
            datasets=datasets,
            embed_seeds=tuple(int(s) for s in obj.get("embed_seeds", DEFAULT_EMBED_SEEDS)),
            run_seeds=run_seeds,
            max_iters=int(obj.get("max_iters", 500)),
        )

    @classmethod
    def load(cls, path: PathLike) -> "SweepSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Sweep execution
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _instance_row(task) -> dict:
    dataset, weights, rule, n, d, embed_seed, run_seed, max_iters = task
    row = {
        "dataset": dataset, "rule": rule.kind, "tau": "" if rule.tau is None else repr(rule.tau),
        "n": n, "d": d, "embed_seed": embed_seed, "run_seed": run_seed,
    }
    try:
        if isinstance(weights, Exception):
            raise weights
        report = run_instance(GameInstance(UserPopulation(weights), n, rule), DynamicsConfig(max_iters, run_seed))
    except Exception as exc:  # recorded in-row, the sweep keeps going
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        return {c: _fmt(row.get(c, "")) for c in RESULT_COLUMNS}
    row.update(
        converged=report.converged,
        iterations=report.iterations,
        distinct_features=report.distinct_features,
        entropy=report.entropy,
        avg_prod_utility=report.avg_prod_utility,
        avg_user_utility=report.avg_user_utility,
        total_utility=report.total_prod_utility,
        producer_fractions=";".join(_fmt(v) for v in report.producer_fractions),
        user_weights=";".join(_fmt(v) for v in report.user_weights),
        error="",
    )
    return {c: _fmt(row[c]) for c in RESULT_COLUMNS}


def _tasks(spec: SweepSpec):
    for source in spec.datasets:
        seeds = spec.embed_seeds if source.kind != "file" else (0,)
        populations = {}
        for d in spec.dims:
            for es in seeds:
                try:
                    populations[d, es] = np.asarray(source.population(d, es).weights)
                except Exception as exc:
                    populations[d, es] = exc
        for rule in spec.rules:
            for n in spec.producers:
                for d in spec.dims:
                    for es in seeds:
                        for rs in spec.run_seeds:
                            yield (source.name, populations[d, es], rule, n, d, es, rs, spec.max_iters)


def run_sweep(spec: SweepSpec, out_dir: PathLike, workers: int = 1) -> Path:
    """Run the full cross-product and write ``results.csv`` plus summaries into ``out_dir``.

    Rows follow the sweep's cross-product order regardless of ``workers``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = list(_tasks(spec))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_instance_row, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        rows = [_instance_row(t) for t in tasks]
    results = out / "results.csv"
    write_rows(results, RESULT_COLUMNS, rows)
    write_summaries(rows, out)
    logger.info("wrote %d rows to %s", len(rows), results)
    return results


def write_rows(path: PathLike, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row[c]) for c in columns})


def read_results(path: PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mean_stderr(values) -> tuple[float, float]:
    """Mean and sample-std / sqrt(count); stderr is nan below two values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _rule_key(row):
    return row["dataset"], row["rule"], row["tau"]


def convergence_table(rows) -> list[dict]:
    groups: dict = {}
    for row in rows:
        tally = groups.setdefault(_rule_key(row), [0, 0])
        tally[1] += 1
        tally[0] += row["converged"] == "1"
    return [
        {"dataset": k[0], "rule": k[1], "tau": k[2], "converged": c, "total": t}
        for k, (c, t) in groups.items()
    ]


def _aggregate(rows, column, by) -> list[dict]:
    groups: dict = {}
    for row in rows:
        if row["converged"] != "1":
            continue
        key = _rule_key(row) + tuple(int(row[b]) for b in by)
        groups.setdefault(key, []).append(float(row[column]))
    out = []
    for key in sorted(groups, key=lambda k: (k[:3], k[3:])):
        mean, se = mean_stderr(groups[key])
        rec = {"dataset": key[0], "rule": key[1], "tau": key[2]}
        rec.update(zip(by, key[3:]))
        rec.update({f"mean_{column}": mean, f"stderr_{column}": se, "count": len(groups[key])})
        out.append(rec)
    return out


def iteration_table(rows) -> list[dict]:
    """Mean/stderr iterations of converged runs per (rule, d, n)."""
    return _aggregate(rows, "iterations", ("d", "n"))


def utility_table(rows) -> list[dict]:
    """Mean/stderr average producer utility of converged runs per (rule, d, n)."""
    return _aggregate(rows, "avg_prod_utility", ("d", "n"))


def write_summaries(rows, out: Path) -> None:
    for name, table in (
        ("convergence.csv", convergence_table(rows)),
        ("iterations.csv", iteration_table(rows)),
        ("utility.csv", utility_table(rows)),
    ):
        if table:
            write_rows(out / name, list(table[0]), table)
        else:
            (out / name).write_text("")

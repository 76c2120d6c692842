"""Command-line entry point (``engagement-games``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import charts, data, dynamics, harness, single_minded
from .game import GameInstance, ServingRule, load_profile

log = logging.getLogger("engagement_games")


def _rule(args) -> ServingRule:
    if args.rule == "linear":
        return ServingRule.linear()
    if args.tau is None:
        raise ValueError("--tau is required with --rule softmax")
    return ServingRule.softmax(args.tau)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def cmd_gen_users(args):
    if args.dist == "uniform":
        users = data.sample_uniform_population(args.users, args.dim, args.seed)
    else:
        users, w = data.sample_skewed_population(args.users, args.dim, args.seed)
        log.info("skew weights: %s", np.array2string(w, precision=4))
    data.save_population(users, args.out)
    return {"out": args.out, "K": users.K, "d": users.d}


def cmd_nmf(args):
    ratings = data.load_ratings_csv(args.ratings, args.user_col, args.item_col, args.rating_col)
    config = data.NmfConfig(rank=args.dim, iterations=args.iters, seed=args.seed, epsilon=args.epsilon)
    users = data.nmf_user_embeddings(ratings, config, log_path=args.log)
    data.save_population(users, args.out)
    return {
        "out": args.out, "rows": ratings.rows_read, "users": ratings.n_users, "items": ratings.n_items,
        "duplicates": ratings.duplicates, "strictly_positive": users.strictly_positive,
    }


def cmd_run(args):
    users = data.load_population(args.users)
    game = GameInstance(users, args.producers, _rule(args))
    config = dynamics.DynamicsConfig(args.max_iters, args.seed)
    result = dynamics.run_best_response_dynamics(game, config)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(result.dumps() + "\n")
    metrics = harness.specialization_metrics(result.profile)
    return {
        "converged": result.converged, "iterations": result.iterations,
        "distinct_features": metrics[0], "entropy": metrics[1],
        "basis": [int(f) for f in result.profile.basis],
    }


def cmd_sweep(args):
    spec = harness.SweepSpec.load(args.spec)
    path = harness.run_sweep(spec, args.out, workers=args.workers)
    return {"results": str(path), "convergence": harness.convergence_table(harness.read_results(path))}


def cmd_verify(args):
    users = data.load_population(args.users)
    profile = load_profile(args.profile)
    game = GameInstance(users, profile.n, _rule(args))
    return {"is_equilibrium": dynamics.verify_pure_ne(profile, game), "n": profile.n, "d": profile.d}


def cmd_single_minded(args):
    m = single_minded.SingleMindedPopulation(tuple(_int_list(args.m)))
    if args.counts is not None:
        counts = single_minded.CountProfile(tuple(_int_list(args.counts)))
    else:
        counts = single_minded.proportional_profile(m, args.construct).counts
    return single_minded.report(m, counts)


def cmd_plot(args):
    written = charts.emit_charts(args.results, args.out)
    return {"charts": [str(p) for p in written]}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="engagement-games", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def rule_args(sp, required=False):
        sp.add_argument("--rule", choices=["linear", "softmax"], default="linear", required=required)
        sp.add_argument("--tau", type=float)

    g = sub.add_parser("gen-users", help="sample a synthetic user population")
    g.add_argument("--dist", choices=["uniform", "skewed"], default="uniform")
    g.add_argument("--users", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_users)

    g = sub.add_parser("nmf", help="user embeddings from a ratings CSV")
    g.add_argument("--ratings", required=True)
    g.add_argument("--user-col", default="user")
    g.add_argument("--item-col", default="item")
    g.add_argument("--rating-col", default="rating")
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--iters", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epsilon", type=float, default=1e-9)
    g.add_argument("--log", help="write the per-iteration loss as CSV iter,loss")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_nmf)

    g = sub.add_parser("run", help="best-response dynamics on one game")
    g.add_argument("--users", required=True)
    g.add_argument("--producers", type=int, required=True)
    rule_args(g)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--max-iters", type=int, default=500)
    g.add_argument("--out")
    g.set_defaults(func=cmd_run)

    g = sub.add_parser("sweep", help="run a JSON sweep spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_sweep)

    g = sub.add_parser("verify", help="check a profile for a pure NE")
    g.add_argument("--users", required=True)
    g.add_argument("--profile", required=True)
    rule_args(g)
    g.set_defaults(func=cmd_verify)

    g = sub.add_parser("single-minded", help="equilibrium check for single-minded users")
    g.add_argument("--m", required=True, help="comma-separated user counts per feature")
    group = g.add_mutually_exclusive_group(required=True)
    group.add_argument("--counts", help="comma-separated producer counts per feature")
    group.add_argument("--construct", type=int, metavar="N", help="build the proportional profile for N producers")
    g.set_defaults(func=cmd_single_minded)

    g = sub.add_parser("plot", help="render SVG charts from a results CSV")
    g.add_argument("--results", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        out = args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())

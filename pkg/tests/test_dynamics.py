import itertools
import json

import numpy as np
import pytest

from engagement_games.dynamics import (
    DynamicsConfig,
    best_basis_response,
    brute_force_ne_enumeration,
    run_best_response_dynamics,
    verify_pure_ne,
    verify_pure_ne_on_basis,
)
from engagement_games.game import (
    GameError,
    GameInstance,
    ServingRule,
    StrategyProfile,
    UserPopulation,
    producer_utility,
)
from engagement_games.single_minded import (
    CountProfile,
    SingleMindedPopulation,
    single_minded_equilibrium_check,
)

LIN = ServingRule.linear()


def single_minded_users(m):
    return SingleMindedPopulation(tuple(m)).to_users()


def direct_is_ne(profile, game, tol=1e-12):
    """Independent NE check through full utility evaluation of every deviation."""
    for i in range(profile.n):
        base = producer_utility(i, profile, game.users, game.rule)
        for f in range(profile.d):
            dev = profile.basis.copy()
            dev[i] = f
            if producer_utility(i, StrategyProfile.from_basis(dev, profile.d), game.users, game.rule) > base + tol:
                return False
    return True


class TestBestBasisResponse:
    def test_single_producer_total_weight(self):
        users = UserPopulation([[0.75, 0.25]] * 4)
        f, u = best_basis_response(0, StrategyProfile.from_basis([1], 2), users, LIN)
        assert f == 0 and u == pytest.approx(3.0)

    def test_single_minded_tie_keeps_current(self):
        users = single_minded_users((2, 1))
        # opponent on e1; m_1/n_1 = 2/2 ties with m_2/1 = 1
        assert best_basis_response(1, StrategyProfile.from_basis([0, 0], 2), users, LIN) == (0, 1.0)
        assert best_basis_response(1, StrategyProfile.from_basis([0, 1], 2), users, LIN) == (1, 1.0)

    def test_single_minded_strict(self):
        users = single_minded_users((3, 1))
        f, u = best_basis_response(1, StrategyProfile.from_basis([0, 1], 2), users, LIN)
        assert f == 0 and u == pytest.approx(1.5)

    def test_identical_users_tie_rule(self):
        users = UserPopulation([[0.5, 0.5]] * 3)
        for basis in ([1, 0], [0, 1], [1, 1]):
            prof = StrategyProfile.from_basis(basis, 2)
            for rule in (LIN, ServingRule.softmax(0.1)):
                assert best_basis_response(0, prof, users, rule)[0] == basis[0]
        users = UserPopulation([[0.5, 0.5, 0.0]] * 3)
        assert best_basis_response(0, StrategyProfile.from_basis([2, 1], 3), users, LIN)[0] == 0

    def test_needs_basis_profile(self):
        users = UserPopulation([[0.5, 0.5]])
        with pytest.raises(GameError):
            best_basis_response(0, StrategyProfile.from_matrix([[0.5, 0.5]]), users, LIN)


class TestDynamics:
    def test_single_producer(self):
        rng = np.random.default_rng(0)
        for seed in range(10):
            users = UserPopulation(rng.dirichlet(np.ones(4), size=30))
            for rule in (LIN, ServingRule.softmax(1.0)):
                res = run_best_response_dynamics(GameInstance(users, 1, rule), DynamicsConfig(500, seed))
                assert res.converged and res.iterations <= 2
                assert res.profile.basis[0] == int(np.argmax(users.weights.sum(axis=0)))

    def test_small_game_in_brute_force_set(self):
        rng = np.random.default_rng(42)
        users = UserPopulation(rng.dirichlet(np.ones(2), size=10))
        game = GameInstance(users, 3, LIN)
        ne = {tuple(p.basis) for p in brute_force_ne_enumeration(game)}
        for seed in range(20):
            res = run_best_response_dynamics(game, DynamicsConfig(500, seed))
            assert res.converged
            assert tuple(res.profile.basis) in ne

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        users = UserPopulation(rng.dirichlet(np.ones(5), size=200))
        game = GameInstance(users, 12, ServingRule.softmax(0.1))
        a = run_best_response_dynamics(game, DynamicsConfig(500, 7))
        b = run_best_response_dynamics(game, DynamicsConfig(500, 7))
        assert a.dumps() == b.dumps()
        c = run_best_response_dynamics(game, DynamicsConfig(500, 8))
        assert c.to_json()["trace"] != a.to_json()["trace"]

    def test_trace_is_monotone_and_bounded(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            users = UserPopulation(rng.dirichlet(np.ones(4), size=60))
            rule = LIN if trial % 2 else ServingRule.softmax(float(rng.choice([0.1, 1.0, 10.0])))
            game = GameInstance(users, 8, rule)
            cfg = DynamicsConfig(500, trial)
            res = run_best_response_dynamics(game, cfg)
            assert res.iterations <= cfg.max_iters
            # replay from the initial profile: one update per pass, each strictly improving
            basis = res.profile.basis.copy()
            for _, i, old, new in reversed(res.trace):
                assert basis[i] == new
                basis[i] = old
            per_pass = [ev[0] for ev in res.trace]
            assert len(per_pass) == len(set(per_pass))
            for _, i, old, new in res.trace:
                before = producer_utility(i, StrategyProfile.from_basis(basis, 4), users, rule)
                basis[i] = new
                after = producer_utility(i, StrategyProfile.from_basis(basis, 4), users, rule)
                assert after > before
            np.testing.assert_array_equal(basis, res.profile.basis)

    def test_non_convergence_returns_last_profile(self):
        rng = np.random.default_rng(3)
        users = UserPopulation(rng.dirichlet(np.ones(5), size=100))
        game = GameInstance(users, 30, LIN)
        res = run_best_response_dynamics(game, DynamicsConfig(1, 0))
        assert not res.converged and res.iterations == 1
        assert res.profile.n == 30 and len(res.trace) == 1

    def test_json(self):
        users = UserPopulation(np.eye(2))
        res = run_best_response_dynamics(GameInstance(users, 2, LIN), DynamicsConfig(10, 0))
        obj = json.loads(res.dumps())
        assert set(obj) == {"converged", "iterations", "basis", "trace"}
        assert obj["converged"] is True and sorted(obj["basis"]) == [0, 1]

    def test_config_validation(self):
        with pytest.raises(GameError):
            DynamicsConfig(0, 1)


class TestVerify:
    def test_all_users_on_one_feature(self):
        users = UserPopulation(np.tile([1.0, 0.0], (5, 1)))
        game = GameInstance(users, 2, LIN)
        assert not verify_pure_ne_on_basis(StrategyProfile.from_basis([0, 1], 2), game)
        assert verify_pure_ne_on_basis(StrategyProfile.from_basis([0, 0], 2), game)

    def test_single_producer_argmax(self):
        users = UserPopulation([[0.7, 0.3], [0.4, 0.6]])
        game = GameInstance(users, 1, ServingRule.softmax(1.0))
        assert verify_pure_ne_on_basis(StrategyProfile.from_basis([0], 2), game)
        assert not verify_pure_ne_on_basis(StrategyProfile.from_basis([1], 2), game)

    def test_agrees_with_direct_check(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            d, n = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            users = UserPopulation(rng.dirichlet(np.ones(d), size=int(rng.integers(2, 10))))
            rule = LIN if rng.random() < 0.5 else ServingRule.softmax(float(rng.choice([0.1, 1.0])))
            game = GameInstance(users, n, rule)
            for combo in itertools.product(range(d), repeat=n):
                prof = StrategyProfile.from_basis(combo, d)
                assert verify_pure_ne_on_basis(prof, game) == direct_is_ne(prof, game)

    def test_general_form(self):
        users = UserPopulation([[0.9, 0.1], [0.8, 0.2]])
        game = GameInstance(users, 2, LIN)
        assert verify_pure_ne(StrategyProfile.from_matrix([[1.0, 0.0], [1.0, 0.0]]), game)
        assert not verify_pure_ne(StrategyProfile.from_matrix([[0.5, 0.5], [1.0, 0.0]]), game)

    def test_shape_mismatch(self):
        game = GameInstance(UserPopulation(np.eye(2)), 2, LIN)
        with pytest.raises(GameError):
            verify_pure_ne_on_basis(StrategyProfile.from_basis([0, 1, 1], 2), game)


class TestBruteForce:
    def test_one_feature(self):
        game = GameInstance(UserPopulation([[1.0]] * 3), 2, LIN)
        assert [tuple(p.basis) for p in brute_force_ne_enumeration(game)] == [(0, 0)]

    def test_single_minded_matches_pairwise_condition(self):
        m = (2, 1)
        game = SingleMindedPopulation(m).game(3)
        got = [tuple(p.basis) for p in brute_force_ne_enumeration(game)]
        assert got == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
        expected = [
            c for c in itertools.product(range(2), repeat=3)
            if single_minded_equilibrium_check(SingleMindedPopulation(m), CountProfile(tuple(np.bincount(c, minlength=2))))
        ]
        assert got == expected

    def test_lexicographic(self):
        rng = np.random.default_rng(5)
        game = GameInstance(UserPopulation(rng.dirichlet(np.ones(3), size=12)), 3, LIN)
        got = [tuple(p.basis) for p in brute_force_ne_enumeration(game)]
        assert got == sorted(got)

    def test_guard(self):
        game = GameInstance(UserPopulation([[0.5, 0.5]]), 21, LIN)
        with pytest.raises(GameError):
            brute_force_ne_enumeration(game)

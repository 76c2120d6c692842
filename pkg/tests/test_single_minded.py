from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engagement_games.game import GameError
from engagement_games.single_minded import (
    CountProfile,
    SingleMindedPopulation,
    equilibrium_slack,
    proportional_profile,
    report,
    single_minded_brute_deviation_check,
    single_minded_equilibrium_check,
)

SM = SingleMindedPopulation
CP = CountProfile


@pytest.mark.parametrize(
    "m, counts, expected",
    [
        ((1, 1), (1, 1), True),
        ((2, 1), (2, 1), True),
        ((2, 1), (0, 3), False),
        ((5, 1), (1, 1), False),
        ((3,), (7,), True),
    ],
)
def test_examples(m, counts, expected):
    assert single_minded_equilibrium_check(SM(m), CP(counts)) is expected
    assert single_minded_brute_deviation_check(SM(m), CP(counts)) is expected


def test_boundary_equality_counts_as_equilibrium():
    # 2/2 == (0+1)/1: equality satisfies the condition
    assert single_minded_equilibrium_check(SM((2, 1)), CP((2, 0)))


def test_validation():
    with pytest.raises(GameError):
        SM((1, 0))
    with pytest.raises(GameError):
        single_minded_equilibrium_check(SM((1, 1)), CP((1, 1, 1)))
    with pytest.raises(GameError):
        CP((-1, 2))


class TestProportional:
    def test_exact(self):
        res = proportional_profile(SM((2, 1, 1)), 4)
        assert res.counts.counts == (2, 1, 1) and res.exact and res.slack == 0
        assert single_minded_equilibrium_check(SM((2, 1, 1)), res.counts)

    def test_zero_producers(self):
        res = proportional_profile(SM((3, 5)), 0)
        assert res.counts.counts == (0, 0)
        assert single_minded_equilibrium_check(SM((3, 5)), res.counts)

    def test_largest_remainder_ties(self):
        res = proportional_profile(SM((1, 1, 1)), 4)
        assert res.counts.counts == (2, 1, 1) and not res.exact

    def test_slack_value(self):
        # counts (2,1,1) for m=(1,1,1): worst pair is 2/1 - (1+1)/1 = 0
        assert equilibrium_slack(SM((1, 1, 1)), CP((2, 1, 1))) == 0
        assert equilibrium_slack(SM((2, 1)), CP((0, 3))) == Fraction(3, 1) - Fraction(1, 2)

    def test_report(self):
        assert report(SM((2, 1)), CP((2, 1))) == {"m": [2, 1], "counts": [2, 1], "is_equilibrium": True, "slack": 0.0}

    @settings(max_examples=200, deadline=None)
    @given(m=st.lists(st.integers(1, 40), min_size=1, max_size=6), n=st.integers(0, 60))
    def test_counts_sum_to_n(self, m, n):
        res = proportional_profile(SM(tuple(m)), n)
        assert res.counts.n == n
        total = sum(m)
        for mf, nf in zip(m, res.counts.counts):
            assert abs(nf - Fraction(mf * n, total)) < 1


@settings(max_examples=300, deadline=None)
@given(
    data=st.data(),
    d=st.integers(1, 6),
)
def test_checks_agree(data, d):
    m = data.draw(st.lists(st.integers(1, 50), min_size=d, max_size=d))
    counts = data.draw(st.lists(st.integers(0, 10), min_size=d, max_size=d))
    a = single_minded_equilibrium_check(SM(tuple(m)), CP(tuple(counts)))
    assert a == single_minded_brute_deviation_check(SM(tuple(m)), CP(tuple(counts)))
    assert a == (equilibrium_slack(SM(tuple(m)), CP(tuple(counts))) == 0)


def test_scale_invariance():
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = int(rng.integers(1, 6))
        m = tuple(int(v) for v in rng.integers(1, 20, d))
        counts = CP(tuple(int(v) for v in rng.integers(0, 8, d)))
        k = int(rng.integers(2, 6))
        scaled = SM(tuple(k * v for v in m))
        assert single_minded_equilibrium_check(SM(m), counts) == single_minded_equilibrium_check(scaled, counts)
        assert single_minded_brute_deviation_check(SM(m), counts) == single_minded_brute_deviation_check(scaled, counts)

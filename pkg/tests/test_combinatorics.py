import math

from fractions import Fraction

import numpy as np
import pytest

from npmoment.common import *
from npmoment.combinatorics import *


def test_log_binomial ():
    assert log_binomial(5, 2) == pytest.approx(math.log(10))
    assert log_binomial(0, 0) == pytest.approx(0.0, abs=1e-15)
    assert log_binomial(3, 5) == -np.inf
    assert log_binomial(3, -1) == -np.inf
    exact = math.lgamma(20001) - math.lgamma(101) - math.lgamma(19901)
    assert log_binomial(20000, 100) == pytest.approx(exact, rel=1e-10)


def test_log_binomial_table ():
    table = LogBinomialTable(10)
    assert np.exp(table.row(4)) == pytest.approx([1, 4, 6, 4, 1])
    assert table(6, 3) == pytest.approx(math.log(20))
    assert table(3, 4) == -np.inf
    with pytest.raises(PreconditionException):
        table.row(11)


@pytest.mark.parametrize("k, expected", [
    (1, Fraction(1)),
    (2, Fraction(5, 2)),
    (3, Fraction(33, 8)),
])
def test_zeta (k, expected):
    assert zeta(k, exact=True) == expected
    assert zeta(k) == float(expected)


def test_zeta_needs_k ():
    with pytest.raises(PreconditionException):
        zeta(0)


def test_incrementality_one_neighbour ():
    for s in range(2, 10001):
        assert incrementality(1, s) == 1.0 / (2 * s - 1)


def test_incrementality_small_case ():
    assert incrementality(2, 3) == pytest.approx(2.0 / 15.0, rel=1e-14)


def test_incrementality_limit ():
    s = 10000
    assert (2 * s - 1) * 4 * incrementality(2, s) == pytest.approx(2.5, abs=1e-3)


def test_incrementality_needs_s_at_least_k ():
    with pytest.raises(PreconditionException):
        incrementality(3, 2)


def test_sequences_match_exact_integers ():
    for k in range(1, 5):
        for s in range(max(k, 2), 30):
            sequences = incrementality_sequences(k, s)
            a, b = exact_sequences(k, s)
            expected = [Fraction(a_t, b_t) for a_t, b_t in zip(a, b)]
            assert sequences.ratio == pytest.approx([float(r) for r in expected], rel=1e-12)


def test_incrementality_bounds ():
    for k in range(1, 7):
        lower, upper = incrementality_bounds(k)
        for s in range(k, 201):
            total = incrementality_sequences(k, s).ratio_sum
            assert lower - 1e-12 <= total <= upper + 1e-12


def test_incrementality_converges_at_rate_one_over_s ():
    for k in range(1, 5):
        scaled = [
            abs(incrementality_sequences(k, s).ratio_sum - zeta(k)) * s
            for s in [10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000]
        ]
        assert max(scaled) < 50


@pytest.mark.parametrize("k, s, expected", [
    (1, 5, 1.0 / 9.0),
    (2, 3, 2.0 / 15.0),
])
def test_oracle (k, s, expected):
    assert incrementality_oracle(k, s) == pytest.approx(expected, abs=1e-8)


def test_oracle_matches_closed_form ():
    for k in range(1, 5):
        for s in range(max(k, 2), 51):
            assert incrementality_oracle(k, s) == pytest.approx(incrementality(k, s), rel=1e-6)


def test_oracle_needs_enough_points ():
    with pytest.raises(PreconditionException):
        incrementality_oracle(1, 5, quadrature_points=10)

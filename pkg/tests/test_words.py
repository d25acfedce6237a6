from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import uniform_bernoulli
from pnn.errors import DomainError
from pnn.words import (all_words, as_word, block_frequency, digit_frequency, empirical, format_word,
                       measure_distance, shift, truncate)

words3 = st.lists(st.integers(0, 2), min_size=1, max_size=40).map(tuple)


def test_as_word_forms():
    assert as_word("2103") == (2, 1, 0, 3)
    assert as_word("10,11,0") == (10, 11, 0)
    assert as_word((1, 2)) == (1, 2)
    assert as_word("") == ()
    with pytest.raises(DomainError):
        as_word("1a")


def test_format_round_trip():
    assert format_word((2, 1, 0)) == "210"
    assert format_word((10, 3), alphabet_size=12) == "10,3"
    assert as_word(format_word((10, 3), alphabet_size=12)) == (10, 3)


def test_shift_and_truncate():
    assert shift("2103", 1) == (1, 0, 3)
    assert shift("2103", 4) == ()
    assert truncate("2103", 2) == (2, 1)
    with pytest.raises(DomainError):
        shift("21", 3)


def test_empirical_examples():
    assert empirical("0012", 1)("0") == Fraction(2, 4)
    assert empirical("111", 1)("1") == 1
    assert empirical("0101", 2)("01") == Fraction(2, 4)
    with pytest.raises(DomainError):
        empirical("", 1)


def test_block_frequency_and_digits():
    assert block_frequency("0101", "01") == Fraction(1, 2)
    assert block_frequency("0101", "01", 2) == Fraction(1, 2)
    assert digit_frequency("0012", 0) == Fraction(1, 2)


def test_distance_examples():
    u = uniform_bernoulli(3, [Fraction(1, 3)] * 3)
    v = uniform_bernoulli(3, [Fraction(2, 3), 0, Fraction(1, 3)])
    assert measure_distance(u, v, K=1) == Fraction(1, 3)
    assert measure_distance(u, u, K=3) == 0
    assert measure_distance(u, v, K=3) == measure_distance(v, u, K=3)


@given(words3, st.integers(0, 40))
def test_shift_length(w, k):
    if k <= len(w):
        assert len(shift(w, k)) == len(w) - k


@given(words3)
def test_letter_frequencies_sum_to_one(w):
    e = empirical(w, 1, 3)
    assert sum(e(a) for a in [(0,), (1,), (2,)]) == 1


@given(words3, st.integers(1, 3))
def test_block_counts_sum(w, k):
    # windows that overhang are dropped, so length-k counts sum to n - k + 1
    e = empirical(w, 3, 3)
    total = sum(e.block_counts.get(b, 0) for b in all_words(3, k))
    assert total == max(0, len(w) - k + 1)


@given(words3, st.lists(st.integers(0, 2), min_size=1, max_size=3).map(tuple))
def test_empirical_matches_orbit_simulation(w, b):
    # T_n(w)([b]) by walking the shift orbit one step at a time
    n = len(w)
    hits, x = 0, w
    for _ in range(n):
        if x[:len(b)] == b:
            hits += 1
        x = x[1:]
    e = empirical(w, 3, 3)
    assert e(b) == Fraction(hits, n)
    assert block_frequency(w, b) == Fraction(hits, n)


probs3 = st.lists(st.integers(0, 20), min_size=3, max_size=3).filter(lambda v: sum(v) > 0).map(
    lambda v: [Fraction(x, sum(v)) for x in v])


@settings(max_examples=50)
@given(probs3, probs3, probs3)
def test_distance_is_a_pseudometric(p, q, r):
    a, b, c = (uniform_bernoulli(3, x) for x in (p, q, r))
    dab = measure_distance(a, b, K=3)
    assert dab >= 0
    assert dab == measure_distance(b, a, K=3)
    assert dab <= measure_distance(a, c, K=3) + measure_distance(c, b, K=3)

import math
from fractions import Fraction

import pytest

from oracles import silver_cylinder
from pnn import (entropy, enumerate_language, information_function, measure_pair, parry_measure,
                 parry_measure_eigen)
from pnn.errors import DomainError
from pnn.measures import (_suffix_counts, champernowne_blocks, collapse, generic_word_mu, generic_word_nu,
                          pushforward_mu, unrank)
from pnn.words import digit_frequency


@pytest.fixture(scope="module")
def silver_pair(silver):
    return measure_pair(silver)


@pytest.fixture(scope="module")
def n3_pair(n3):
    return measure_pair(n3)


def test_n3_nu_is_uniform(n3):
    nu = parry_measure(n3)
    assert nu("0") == Fraction(1, 3)
    assert nu("201") == Fraction(1, 27)


def test_silver_single_letters_exact(silver):
    nu = parry_measure(silver)
    assert nu("0") == pytest.approx(0.5, abs=1e-12)
    assert nu("1") == pytest.approx(math.sqrt(2) / 4, abs=1e-12)
    assert nu("2") == pytest.approx((2 - math.sqrt(2)) / 4, abs=1e-12)


def test_density_and_eigen_routes_agree(silver, tribonacci):
    for system in (silver, tribonacci):
        a, b = parry_measure(system), parry_measure_eigen(system)
        for n in range(1, 6):
            for w in enumerate_language(system.automaton, n):
                assert abs(a(w) - b(w)) <= 1e-9


def test_silver_matches_symbolic_integration(silver):
    nu = parry_measure(silver)
    for n in (1, 2, 3):
        lang = enumerate_language(silver.automaton, n)
        for w in lang:
            assert float(nu(w)) == pytest.approx(float(silver_cylinder(w, lang)), abs=1e-12)


def _consistency(m, system, n, exact):
    aut = system.automaton
    for w in enumerate_language(aut, n):
        right = sum((m(w + (a,)) for a in range(system.alphabet_size) if aut.accepts(w + (a,))),
                    Fraction(0) if exact else 0.0)
        left = sum((m((a,) + w) for a in range(system.alphabet_size) if aut.accepts((a,) + w)),
                   Fraction(0) if exact else 0.0)
        if exact:
            assert right == m(w) and left == m(w)
        else:
            assert abs(right - m(w)) <= 1e-9 and abs(left - m(w)) <= 1e-9


def test_kolmogorov_consistency_exact_n3(n3_pair, n3):
    for m in (n3_pair.nu, n3_pair.mu):
        assert m(()) == 1
        for n in range(0, 5):
            _consistency(m, n3, n, exact=True)


def test_kolmogorov_consistency_silver(silver_pair, silver):
    for m in (silver_pair.nu, silver_pair.mu):
        for n in range(0, 5):
            _consistency(m, silver, n, exact=False)


def test_mu_examples_n3(n3_pair):
    mu, nu = n3_pair.mu, n3_pair.nu
    assert [mu((a,)) for a in range(3)] == [Fraction(2, 3), 0, Fraction(1, 3)]
    assert mu("00") == Fraction(4, 9)
    assert (n3_pair.divergent_digit, n3_pair.convergent_digit) == (0, 2)
    assert mu("0") > nu("0") and mu("2") == nu("2") == Fraction(1, 3)


def test_silver_h1(silver_pair):
    nu, mu = silver_pair.nu, silver_pair.mu
    assert mu("0") == pytest.approx(0.5 + math.sqrt(2) / 4, abs=1e-12)
    assert mu("1") == 0
    assert mu("2") == pytest.approx(nu("2"), abs=1e-15)
    assert silver_pair.convergent_digit == 2


def test_pushforward_needs_three_letters(golden):
    with pytest.raises(DomainError):
        pushforward_mu(parry_measure(golden), golden)


def test_entropy_examples(n3_pair, silver_pair):
    expected = -(2 / 3) * math.log(2 / 3) - (1 / 3) * math.log(1 / 3)
    assert entropy(n3_pair.mu, 1) == pytest.approx(expected, abs=1e-12)
    assert entropy(n3_pair.nu, 4) == pytest.approx(math.log(3), abs=1e-12)
    # frozen regression value for the silver ratio at n = 10
    assert entropy(silver_pair.nu, 10) == pytest.approx(0.8928, abs=5e-4)


@pytest.mark.parametrize("which", ["n3", "silver"])
def test_nu_is_maximal(request, which):
    system = request.getfixturevalue(which)
    pair = measure_pair(system)
    for n in range(1, 7):
        assert entropy(pair.nu, n) >= entropy(pair.mu, n) - 1e-12


def test_information_function_n3(n3, n3_pair):
    e = information_function(n3_pair.nu, n3)
    assert e.lower_bound == pytest.approx(math.log(3))
    words = enumerate_language(n3.automaton, 4)
    assert e.defect(n3_pair.nu, words) == pytest.approx(0, abs=1e-12)


def test_information_function_silver(silver, silver_pair):
    e = information_function(silver_pair.nu, silver)
    assert e.lower_bound == pytest.approx(0.5348, abs=5e-4)
    defects = [e.defect(silver_pair.nu, enumerate_language(silver.automaton, n)) for n in (2, 5, 10)]
    assert defects[-1] <= 0.2
    assert defects == sorted(defects, reverse=True)
    # frozen regression values
    assert defects == pytest.approx([0.3466, 0.1386, 0.0693], abs=5e-4)


def test_information_expectation_tracks_entropy(silver, silver_pair):
    e = information_function(silver_pair.nu, silver)
    gaps = []
    for n in (2, 4, 8):
        words = enumerate_language(silver.automaton, n)
        gaps.append(abs(entropy(silver_pair.nu, n) - e.expectation(silver_pair.nu, words)))
    assert gaps == sorted(gaps, reverse=True)


def test_collapse_example():
    assert collapse("0120001021") == (0, 0, 2, 0, 0, 0, 0, 0, 2, 0)


def test_generic_words_lex_order(n3):
    assert generic_word_nu(n3, 9, order="lex") == (0, 1, 2, 0, 0, 0, 1, 0, 2)
    assert generic_word_mu(n3, 11, order="lex") == (0, 0, 2, 0, 0, 0, 0, 0, 2, 0, 0)


@pytest.mark.parametrize("name", ["n3", "silver"])
def test_scrambled_levels_are_permutations(request, name):
    system = request.getfixturevalue(name)
    blocks = champernowne_blocks(system)
    for n in range(1, 6):
        lang = enumerate_language(system.automaton, n)
        level = [next(blocks) for _ in lang]
        assert sorted(level) == lang


def test_unrank_inverts_enumeration(silver):
    aut = silver.automaton
    for n in range(1, 7):
        counts = _suffix_counts(aut, n)
        assert [unrank(aut, n, k, counts) for k in range(counts[n][0])] == enumerate_language(aut, n)


def test_generic_words_n3(n3):
    w = generic_word_nu(n3, 10_000)
    for a in range(3):
        assert abs(digit_frequency(w, a) - Fraction(1, 3)) <= 0.02
    m = generic_word_mu(n3, 10_000)
    for a, t in enumerate([Fraction(2, 3), 0, Fraction(1, 3)]):
        assert abs(digit_frequency(m, a) - t) <= 0.02


def test_generic_words_silver(silver, silver_pair):
    w = generic_word_nu(silver, 20_000)
    assert silver.automaton.accepts(w)
    m = generic_word_mu(silver, 20_000)
    assert silver.automaton.accepts(m)
    assert digit_frequency(m, 1) == 0
    for a in range(3):
        assert abs(digit_frequency(w, a) - silver_pair.nu((a,))) <= 0.02
        assert abs(digit_frequency(m, a) - silver_pair.mu((a,))) <= 0.02


@pytest.mark.parametrize("name", ["n3", "silver"])
def test_mu_has_no_atoms(request, name):
    # largest cylinder mass shrinks geometrically with the length
    system = request.getfixturevalue(name)
    mu = measure_pair(system).mu
    tops = [max(float(mu(w)) for w in enumerate_language(system.automaton, n)) for n in range(1, 9)]
    ratios = [b / a for a, b in zip(tops, tops[1:])]
    assert max(ratios) < 0.9
    assert tops[-1] < 0.3

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnn import GluingTable, enumerate_language, glue, glue_chain, is_admissible
from pnn.beta import LanguageAutomaton
from pnn.errors import DomainError, GluingError


def _language_upto(system, n):
    return [w for k in range(1, n + 1) for w in enumerate_language(system.automaton, k)]


def test_constants(n3, silver, golden, tribonacci):
    assert GluingTable(n3.automaton).C == 0
    assert GluingTable(silver.automaton).C == 1
    for s in (silver, golden, tribonacci):
        t = GluingTable(s.automaton)
        assert t.C <= s.automaton.n_states


def test_full_shift_glue_is_concatenation(n3):
    t = GluingTable(n3.automaton)
    assert glue("0", "12", t) == (0, 1, 2)


def test_silver_glue_examples(silver):
    t = GluingTable(silver.automaton)
    out = glue("2", "2", t)
    assert out == (2, 0, 2)
    assert is_admissible(out, silver)
    # already compatible: no connector
    assert glue("20", "2", t) == (2, 0, 2)


def test_glue_rejects_inadmissible(silver):
    t = GluingTable(silver.automaton)
    with pytest.raises(DomainError):
        glue("22", "0", t)


def test_not_strongly_connected_is_refused():
    aut = LanguageAutomaton(((0, 1), (1, -1)), 2)
    with pytest.raises(GluingError):
        GluingTable(aut)


@pytest.mark.parametrize("name", ["silver", "golden", "tribonacci"])
def test_glue_exhaustive(request, name):
    system = request.getfixturevalue(name)
    t = GluingTable(system.automaton)
    words = _language_upto(system, 5 if name == "silver" else 6)
    for a, b in itertools.product(words, repeat=2):
        out = glue(a, b, t)
        assert out[:len(a)] == a and out[len(out) - len(b):] == b
        assert len(out) - len(a) - len(b) <= t.C
        assert is_admissible(out, system)


def test_connectors_are_shortest_then_lex(silver):
    aut = silver.automaton
    t = GluingTable(aut)
    letters = range(aut.alphabet_size)
    for (q, target), path in t.paths.items():
        # brute force over all words up to the found length
        best = None
        for L in range(len(path) + 1):
            for v in itertools.product(letters, repeat=L):
                if aut.run(v, q) == target:
                    best = v
                    break
            if best is not None:
                break
        assert best == path


def test_glue_is_deterministic(silver):
    a, b = (2, 0, 1, 0, 2), (2, 0, 2)
    assert glue(a, b, GluingTable(silver.automaton)) == glue(a, b, GluingTable(silver.automaton))


def test_chain_accounting(silver):
    t = GluingTable(silver.automaton)
    words = [(2,), (2, 0), (1, 2), (2,), (0,)]
    out, lengths = glue_chain(words, t)
    assert len(out) == sum(map(len, words)) + sum(lengths)
    assert len(lengths) == len(words) - 1
    for k in range(1, len(out) + 1):
        assert is_admissible(out[:k], silver)


def test_rows_cover_every_pair(silver):
    t = GluingTable(silver.automaton)
    assert len(list(t.rows())) == silver.automaton.n_states ** 2


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 10 ** 6), min_size=1, max_size=12), st.integers(1, 6))
def test_chain_frequency_perturbation(picks, ell):
    from conftest import SILVER
    from pnn import load_system
    system = load_system(SILVER)
    t = GluingTable(system.automaton)
    lang = enumerate_language(system.automaton, ell)
    words = [lang[k % len(lang)] for k in picks]
    out, lengths = glue_chain(words, t)
    assert system.automaton.accepts(out)
    # connectors take up at most C/ell of the chained blocks
    k = len(words)
    assert sum(lengths) <= k * t.C
    assert sum(lengths) / (k * ell) <= t.C / ell

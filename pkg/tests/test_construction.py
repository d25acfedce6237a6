import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnn import (ConstructionConfig, ConstructionState, EpsilonPolicy, build_construction, gamma_family,
                 integer_system, is_admissible, parry_measure, sample_pnn_prefix)
from pnn.construction import Count, balanced_word
from pnn.errors import DomainError, PolicyError, ScheduleError
from pnn.words import digit_frequency

# Count ---------------------------------------------------------------------------

small = st.integers(1, 10 ** 6)
powers = st.lists(st.tuples(st.integers(2, 50), st.integers(0, 6)), max_size=3)


def _count(c, ps):
    out = Count(c)
    for b, e in ps:
        out = out * Count.power(b, e)
    return out


def _int(c, ps):
    return c * math.prod(b ** e for b, e in ps)


@settings(max_examples=200)
@given(small, powers, small, powers)
def test_count_matches_integers(c1, p1, c2, p2):
    a, b = _count(c1, p1), _count(c2, p2)
    x, y = _int(c1, p1), _int(c2, p2)
    assert a.compare(b) == (x > y) - (x < y)
    assert (a == b) == (x == y)
    assert (a * b).value() == x * y
    assert (a / b).value() == Fraction(x, y)
    assert (a + b).value() == x + y
    assert (a ** 2).value() == x * x
    assert float(a.log()) == pytest.approx(math.log(x))


def test_count_huge_comparison():
    # far beyond exact expansion: decided on the canonical factorisation and logs
    a = Count.power(3, 10 ** 6) * Count.of(2)
    b = Count.power(3, 10 ** 6)
    assert a.compare(b) == 1 and b.compare(a) == -1
    assert Count.power(9, 10 ** 5) == Count.power(3, 2 * 10 ** 5)


# Gamma families -------------------------------------------------------------------


def test_gamma_examples(n3):
    nu = parry_measure(n3)
    fam = gamma_family(n3, nu, 3, EpsilonPolicy(fixed=Fraction(1, 3)), tracked=(0, 1))
    assert fam.size == 25
    assert (0, 0, 0) not in fam.words and (1, 1, 1) not in fam.words
    assert fam.eta_n == pytest.approx(abs(math.log(25) / 3 - math.log(3)), abs=1e-12)
    assert fam.eta_n == pytest.approx(0.02565, abs=1e-5)
    assert gamma_family(n3, nu, 3, EpsilonPolicy(fixed=Fraction(1)), tracked=(0, 1)).size == 27


def test_gamma_empty_family_is_policy_error(n3):
    with pytest.raises(PolicyError):
        gamma_family(n3, parry_measure(n3), 1, EpsilonPolicy(fixed=Fraction(0)))


def test_gamma_default_policy(n3, silver):
    for system in (n3, silver):
        nu = parry_measure(system)
        for n in range(1, 8):
            fam = gamma_family(system, nu, n, EpsilonPolicy())
            assert fam.size >= 1
            assert all(system.automaton.accepts(w) for w in fam.words)
            assert fam.epsilon_n <= max(1.25 / math.sqrt(n), 1)


# balanced fixed word ------------------------------------------------------------


@given(st.lists(st.integers(0, 12), min_size=2, max_size=4).filter(lambda v: sum(v) > 0),
       st.integers(1, 300))
def test_balanced_word_discrepancy(weights, length):
    freqs = [Fraction(x, sum(weights)) for x in weights]
    w = balanced_word(freqs, length)
    for m in range(1, length + 1):
        for a, f in enumerate(freqs):
            assert abs(w[:m].count(a) - f * m) < len(freqs)


def test_balanced_omega_n3(n3_p1):
    assert n3_p1.omega[:6] == (0, 2, 0, 0, 2, 0)
    assert n3_p1.tracked == (0, 2)


# schedule --------------------------------------------------------------------------


def test_n3_schedules():
    # frozen regression values of the default schedule
    expected = {1: [1, 5, 44, 501, 6871, 109506],
                2: [1, 8, 102, 1696, 34114, 799547],
                3: [1, 10, 168, 3675, 97440, 3014550]}
    for p, ns in expected.items():
        assert build_construction(integer_system(3), p=p, stages=6).n_seq == ns


def test_schedule_shape(n3_p1, silver_p1):
    for state in (n3_p1, silver_p1):
        ns = state.n_seq
        assert ns[0] == 1
        assert all(a < b for a, b in zip(ns, ns[1:]))
        ratios = [r.lengths[0] / (r.n * r.j) for r in state.stages]
        assert ratios[0] == 0  # B_0^(1) holds only the empty word
        assert all(a >= b for a, b in zip(ratios[1:], ratios[2:]))


def test_rho_eta_envelope(n3_p1):
    # per-stage values wobble with the lattice of attainable frequencies;
    # only their decay is asserted
    rhos = [float(r.rho) for r in n3_p1.stages]
    etas = [r.eta for r in n3_p1.stages]
    assert max(rhos[-2:]) <= 0.5 and min(rhos) > 0
    assert etas[-1] < 0.001
    for j, r in enumerate(n3_p1.stages, start=1):
        assert r.eta <= 1 / j


def test_schedule_error_when_capped(n3):
    cfg = ConstructionConfig(p=1, stages=3, n_cap=1, policy=EpsilonPolicy(fixed=Fraction(1, 100)))
    with pytest.raises((ScheduleError, PolicyError)):
        ConstructionState(n3, cfg).build()


def test_bad_config(n3):
    with pytest.raises(DomainError):
        ConstructionState(n3, ConstructionConfig(p=0))
    with pytest.raises(DomainError):
        ConstructionState(n3, ConstructionConfig(growth="cubic"))


def test_exponential_growth_option(n3):
    st_ = build_construction(n3, p=1, stages=4, growth="exponential")
    assert st_.lemma_holds
    for r in st_.stages:
        assert r.n * r.j >= 2 ** r.j * r.lengths[0]


# block sets -----------------------------------------------------------------------


def test_stage_one_fixed_part(n3_p1):
    assert n3_p1.explicit_sets[0].words() == [()]
    assert n3_p1.explicit_sets[1].words() == [(0,)]


@pytest.mark.parametrize("which", ["n3_p1", "silver_p1"])
def test_explicit_sets_structure(request, which):
    state = request.getfixturevalue(which)
    idx = sorted(state.explicit_sets)
    C = state.C
    for n in idx:
        ws = state.explicit_sets[n].words()
        assert len({len(w) for w in ws}) == 1
        assert all(state.aut.accepts(w) for w in ws)
        assert len(set(ws)) == len(ws)
    for a, b in zip(idx, idx[1:]):
        parent = state.explicit_sets[a]
        child = state.explicit_sets[b]
        prefixes = set(parent.words())
        assert all(w[:parent.length] in prefixes for w in child.words())
        j, i = state.split_index(b)
        rec = state.stages[j - 1]
        if 1 <= i <= rec.n:
            assert len(child.words()) == len(parent.words())
        else:
            g = state.gamma(j).size
            assert len(child.words()) * (C + 1) >= len(parent.words()) * g


@pytest.mark.parametrize("which", ["n3_p1", "silver_p1"])
def test_cardinality_lemma(request, which):
    state = request.getfixturevalue(which)
    assert state.lemma
    assert state.lemma_holds


def test_silver_p2_lemma(silver):
    state = build_construction(silver, p=2, stages=4)
    assert state.lemma_holds and state.C_tilde == 1


def test_trace_shape(n3_p1):
    t = n3_p1.trace()
    assert t["C"] == 0 and t["trackedDigits"] == [0, 2]
    assert [s["n"] for s in t["stages"]] == n3_p1.n_seq
    assert t["stages"][0]["lengths"]["0"] == 0


# sampling --------------------------------------------------------------------------


def test_sample_annotations(n3_p1, n3_p1_sample):
    s = n3_p1_sample
    pos = 0
    for a in s.annotations:
        assert a.offset == pos
        pos += a.length
    assert pos == len(s.word) == n3_p1.length(6, 2 * n3_p1.stages[-1].n)
    blocks = s.decode()
    assert [b for kind, _, _, b in blocks if kind == "gamma"] == s.choices
    for kind, j, _, b in blocks:
        if kind == "fixed":
            assert b == n3_p1.omega[:j]
        else:
            assert b in n3_p1.gamma(j).words


def test_sample_checkpoints(n3_p1, n3_p1_sample):
    cps = n3_p1_sample.checkpoints
    fixed = {j: m for j, k, m in cps if k == 0}
    ends = {j: m for j, k, m in cps if k == 1}
    assert fixed[1] < ends[1] < fixed[2]
    w = n3_p1_sample.word
    for j, m in fixed.items():
        rho = n3_p1.stages[j - 1].rho
        for d in n3_p1.tracked:
            assert abs(digit_frequency(w[:m], d) - n3_p1.mu((d,))) <= 2 * rho


def test_silver_samples_admissible(silver, silver_p1):
    for sel, seed in (("deterministic", 0), ("random", 1), ("random", 2)):
        s = sample_pnn_prefix(silver_p1, selector=sel, seed=seed)
        assert silver.automaton.accepts(s.word)
        assert is_admissible(s.word[:2000], silver)
        assert len(s.word) == silver_p1.length(4, 2 * silver_p1.stages[-1].n)


def test_random_selector_is_seeded(silver_p1):
    a = sample_pnn_prefix(silver_p1, selector="random", seed=7)
    b = sample_pnn_prefix(silver_p1, selector="random", seed=7)
    c = sample_pnn_prefix(silver_p1, selector="random", seed=8)
    assert a.word == b.word
    assert a.word != c.word


def test_two_stage_boundaries(n3):
    state = build_construction(n3, p=1, stages=2)
    s = sample_pnn_prefix(state)
    cps = {(j, k): m for j, k, m in s.checkpoints}
    assert cps[1, 0] < cps[2, 0]
    assert all(is_admissible(s.word[:k], n3) for k in range(len(s.word)))


@pytest.mark.parametrize("which", ["n3_p1", "silver_p1"])
def test_class_summaries_match_listed_words(request, which):
    state = request.getfixturevalue(which)
    for n in sorted(state.explicit_sets):
        B = state.explicit_sets[n]
        assert int(B.cardinality) == len(B.words())
        for tm, cls in B.classes.items():
            for w in cls.words:
                assert state.aut.transition_map(w) == tm
                counts = tuple(w.count(d) for d in state.tracked)
                assert all(lo <= c <= hi for lo, c, hi in zip(cls.cmin, counts, cls.cmax))


def test_summary_cardinality_beyond_listing(n3_p1):
    # once words are no longer listed, counts still follow |B_i| = |B_{i-1}| |Gamma_j| on the full shift
    j = 3
    rec = n3_p1.stages[j - 1]
    first = n3_p1.flat_index(j, rec.n + 1)
    gap = float(n3_p1.log_card(first + 5) - n3_p1.log_card(first))
    assert gap == pytest.approx(5 * math.log(n3_p1.gamma(j).size), rel=1e-12)

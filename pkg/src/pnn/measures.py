"""The Parry measure, its pushforward under 1 -> 0, entropy, and the information function.

Cylinder values on an integer base are exact Fractions.  On an algebraic
base the density route integrates the piecewise-constant invariant density
with mpmath and the eigenvector route uses numpy; the two are kept as
independent evaluators so each can check the other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Union

import mpmath
import numpy as np

from .beta import BetaSystem, LanguageAutomaton, beta_orbit, enumerate_language
from .errors import DomainError, ModelError, UnsupportedSystemError
from .specification import GluingTable
from .words import Word, WordLike, as_word

Value = Union[Fraction, float]

DENSITY_DPS = 40


class CylinderMeasure:
    """A shift-invariant measure given by its values on cylinders."""

    def __init__(self, evaluator: Callable[[Word], Value], label: str, system: BetaSystem,
                 exact: bool):
        self._eval = evaluator
        self._cache: dict[Word, Value] = {}
        self.label = label
        self.system = system
        self.exact = exact
        self.alphabet_size = system.alphabet_size

    def __call__(self, w: WordLike) -> Value:
        w = as_word(w)
        v = self._cache.get(w)
        if v is None:
            v = self._eval(w) if w else (Fraction(1) if self.exact else 1.0)
            self._cache[w] = v
        return v

    def words(self, n: int) -> list[Word]:
        return enumerate_language(self.system.automaton, n)

    def __repr__(self) -> str:
        return f"CylinderMeasure({self.label}, {self.system!r})"


def _orbit_of_one(system: BetaSystem):
    """(u, v) lengths and the exact orbit points T^q 1 for each automaton state."""
    u, v = system.d_one.comparison()
    F = system.field
    points = [F.const(1)]
    for _, r in beta_orbit(1, system):
        if len(points) == len(u) + len(v):
            break
        points.append(r)
    return u, v, points


def parry_measure(system: BetaSystem) -> CylinderMeasure:
    """nu by integrating the invariant density over fundamental intervals."""
    if not system.is_parry:
        raise UnsupportedSystemError("Parry measure requires an eventually periodic expansion of 1")
    aut = system.automaton
    if system.is_integer:
        N = system.N

        def exact(w: Word) -> Fraction:
            return Fraction(1, N ** len(w)) if aut.accepts(w) else Fraction(0)

        return CylinderMeasure(exact, "nu", system, exact=True)

    u, v, points = _orbit_of_one(system)
    finite = system.d_one.kind == "finite"
    with mpmath.workdps(DENSITY_DPS):
        beta = system.field.approx(dps=DENSITY_DPS)
        c = [system.field.approx(p, dps=DENSITY_DPS) for p in points]
        if finite:
            # T^n 1 = 0 beyond the listed points; states cover exactly those points
            weights = [beta ** -n for n in range(len(c))]
        else:
            p = len(v)
            tail = 1 / (1 - beta ** -p)
            weights = [beta ** -n * (tail if n >= len(u) else 1) for n in range(len(c))]
        normaliser = sum(w * x for w, x in zip(weights, c))

    def density_mass(w: Word) -> float:
        q = aut.run(w)
        if q < 0:
            return 0.0
        with mpmath.workdps(DENSITY_DPS):
            a = sum((mpmath.mpf(d) * beta ** -(k + 1) for k, d in enumerate(w)), mpmath.mpf(0))
            b = a + beta ** -len(w) * c[q]
            total = sum((wt * max(min(b, cn) - a, 0) for wt, cn in zip(weights, c)), mpmath.mpf(0))
            return float(total / normaliser)

    return CylinderMeasure(density_mass, "nu", system, exact=False)


def perron_vectors(aut: LanguageAutomaton) -> tuple[float, np.ndarray, np.ndarray]:
    """Perron root and left/right eigenvectors normalised so that l . r = 1."""
    A = np.array(aut.adjacency(), dtype=float)
    vals, right = np.linalg.eig(A)
    k = int(np.argmax(vals.real))
    lam = float(vals[k].real)
    r = np.abs(right[:, k].real)
    valsT, left = np.linalg.eig(A.T)
    kt = int(np.argmax(valsT.real))
    l = np.abs(left[:, kt].real)
    r = r / r[aut.initial]
    l = l / float(l @ r)
    return lam, l, r


def parry_measure_eigen(system: BetaSystem) -> CylinderMeasure:
    """nu([w]) = lam^-n sum_q l_q r_{end(q, w)} from the automaton's Perron data."""
    aut = system.automaton
    lam, l, r = perron_vectors(aut)

    def mass(w: Word) -> float:
        if aut.run(w) < 0:
            return 0.0
        ends = aut.transition_map(w)
        s = sum(l[q] * r[e] for q, e in enumerate(ends) if e >= 0)
        return float(s / lam ** len(w))

    return CylinderMeasure(mass, "nu", system, exact=False)


def collapse(w: WordLike) -> Word:
    """Letterwise image under 1 -> 0."""
    return tuple(0 if a == 1 else a for a in as_word(w))


@dataclass(frozen=True)
class MeasurePair:
    nu: CylinderMeasure
    mu: CylinderMeasure
    divergent_digit: int
    convergent_digit: int


def pushforward_mu(nu: CylinderMeasure, system: BetaSystem) -> CylinderMeasure:
    """mu([w]) = sum of nu([u]) over admissible u with collapse(u) = w."""
    if system.alphabet_size < 3:
        raise DomainError("the pushforward needs at least three letters")
    if not nu("0") or not nu("1"):
        raise DomainError("nu must charge both letters 0 and 1")
    aut = system.automaton

    def mass(w: Word) -> Value:
        if 1 in w:
            return Fraction(0) if nu.exact else 0.0
        zeros = [k for k, a in enumerate(w) if a == 0]
        if not zeros:
            return nu(w)
        total: Value = Fraction(0) if nu.exact else 0.0
        base = list(w)
        for choice in itertools.product((0, 1), repeat=len(zeros)):
            for k, c in zip(zeros, choice):
                base[k] = c
            u = tuple(base)
            if aut.run(u) >= 0:
                total += nu(u)
        return total

    return CylinderMeasure(mass, "mu", system, exact=nu.exact)


def measure_pair(system: BetaSystem, nu: CylinderMeasure | None = None, tol: float = 1e-12) -> MeasurePair:
    """nu, mu and the digits (0, j*) with mu([0]) > nu([0]) and mu([j*]) = nu([j*])."""
    nu = nu or parry_measure(system)
    mu = pushforward_mu(nu, system)
    if not mu("0") > nu("0"):
        raise ModelError("mu does not exceed nu on letter 0")
    for j in range(2, system.alphabet_size):
        same = mu((j,)) == nu((j,)) if nu.exact else abs(mu((j,)) - nu((j,))) <= tol
        if same:
            return MeasurePair(nu, mu, 0, j)
    raise ModelError("no letter with mu = nu")


def _xlogx(x: Value) -> float:
    return float(x) * math.log(float(x)) if x else 0.0


def entropy(measure: Callable[[Word], Value], n: int, words: list[Word] | None = None) -> float:
    """-(1/n) sum over the length-n cylinder partition of m log m."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if words is None:
        words = measure.words(n)
    return -math.fsum(_xlogx(measure(w)) for w in words) / n


@dataclass
class InformationFunction:
    """e(w) = -log nu(w_1 | tail) with the tail reduced to its set of readable states.

    ``table[a, R]`` is nu(a | R) = L(R_a) / (lam L(R)) where L sums the left
    Perron vector over a state set and R_a is the set of states that read
    ``a`` into R.
    """

    automaton: LanguageAutomaton
    table: dict[tuple[int, frozenset], Value]
    lower_bound: float
    lam: float

    def conditional(self, a: int, tail: Word) -> Value:
        R = self.automaton.readable_from(tail)
        return self.table.get((a, R), 0)

    def value(self, a: int, tail: Word) -> float:
        p = self.conditional(a, tail)
        if not p:
            return math.inf
        return -math.log(float(p))

    def birkhoff(self, w: WordLike) -> float:
        """<e, T_n(w)> using the available tail of each shift of w."""
        w = as_word(w)
        return math.fsum(self.value(w[k], w[k + 1:]) for k in range(len(w))) / len(w)

    def expectation(self, measure: Callable[[Word], Value], words: list[Word]) -> float:
        return math.fsum(float(measure(w)) * self.value(w[0], w[1:]) for w in words)

    def defect(self, nu: Callable[[Word], Value], words: list[Word]) -> float:
        """max over words of |(1/n) log nu([w]) + <e, T_n(w)>|."""
        worst = 0.0
        for w in words:
            m = float(nu(w))
            if m <= 0:
                continue
            worst = max(worst, abs(math.log(m) / len(w) + self.birkhoff(w)))
        return worst


def information_function(nu: CylinderMeasure, system: BetaSystem) -> InformationFunction:
    aut = system.automaton
    n = aut.n_states
    everything = frozenset(range(n))
    # all readable-state sets of nonempty tails, closed under prepending a letter
    sets = {everything}
    frontier = [everything]
    while frontier:
        R = frontier.pop()
        for a in range(aut.alphabet_size):
            Ra = frozenset(q for q in range(n) if aut.delta[q][a] in R)
            if Ra and Ra not in sets:
                sets.add(Ra)
                frontier.append(Ra)

    table: dict[tuple[int, frozenset], Value] = {}
    if system.is_integer:
        N = system.N
        for R in sets:
            for a in range(aut.alphabet_size):
                table[a, R] = Fraction(1, N)
        lam = float(N)
    else:
        lam, l, _ = perron_vectors(aut)
        for R in sets:
            LR = sum(l[q] for q in R)
            for a in range(aut.alphabet_size):
                Ra = [q for q in range(n) if aut.delta[q][a] in R]
                p = sum(l[q] for q in Ra) / (lam * LR) if Ra else 0.0
                table[a, R] = float(p)
    for R in sets:
        total = sum(table[a, R] for a in range(aut.alphabet_size))
        if abs(float(total) - 1.0) > 1e-9:
            raise ModelError(f"conditional probabilities at {sorted(R)} sum to {float(total)}")
    # letters readable from the current readable set must carry positive mass
    for R in sets:
        for a in range(aut.alphabet_size):
            if any(aut.delta[q][a] in R for q in range(n)) and not table[a, R]:
                raise ModelError(f"zero conditional probability for letter {a}")
    positive = [float(p) for p in table.values() if p]
    lower = min(-math.log(p) for p in positive)
    return InformationFunction(aut, table, lower, lam)


def _suffix_counts(aut: LanguageAutomaton, n: int) -> list[list[int]]:
    """c[r][q] = number of words of length r readable from state q."""
    c = [[1] * aut.n_states]
    for r in range(1, n + 1):
        c.append([sum(c[r - 1][t] for t in aut.delta[q] if t >= 0) for q in range(aut.n_states)])
    return c


def unrank(aut: LanguageAutomaton, n: int, k: int, counts: list[list[int]]) -> Word:
    """The k-th admissible word of length n in lex order."""
    q = aut.initial
    out = []
    for pos in range(n):
        for a, t in enumerate(aut.delta[q]):
            if t < 0:
                continue
            m = counts[n - 1 - pos][t]
            if k < m:
                out.append(a)
                q = t
                break
            k -= m
    return tuple(out)


def _golden_stride(L: int) -> int:
    g = max(1, round(L * (math.sqrt(5) - 1) / 2))
    while math.gcd(g, L) != 1:
        g += 1
    return g


def champernowne_blocks(system: BetaSystem, order: str = "scrambled") -> Iterator[Word]:
    """Every admissible word, level by level from length 1.

    ``lex`` lists a level in lexicographic order.  ``scrambled`` visits ranks
    k*g mod |L_n| with g near |L_n|/golden ratio: still a permutation of the
    level, but a level cut short is already close to balanced, while a
    lexicographic level cut short is dominated by its smallest first letters.
    """
    if order not in ("lex", "scrambled"):
        raise DomainError(f"unknown order {order!r}")
    aut = system.automaton
    n = 1
    while True:
        if order == "lex":
            yield from enumerate_language(aut, n)
        else:
            counts = _suffix_counts(aut, n)
            L = counts[n][aut.initial]
            g = _golden_stride(L)
            for k in range(L):
                yield unrank(aut, n, k * g % L, counts)
        n += 1


def _glued_stream(blocks: Iterator[Word], table: GluingTable, length: int) -> Word:
    aut = table.automaton
    out: list[int] = []
    q = aut.initial
    for b in blocks:
        v = table.connector_for(q, b)
        piece = v + b
        out.extend(piece)
        q = aut.run(piece, q)
        if len(out) >= length:
            break
    return tuple(out[:length])


def generic_word_nu(system: BetaSystem, length: int, table: GluingTable | None = None,
                    order: str = "scrambled") -> Word:
    """Champernowne-style concatenation of the admissible language, glued where needed."""
    if length < 0:
        raise DomainError("length must be >= 0")
    table = table or GluingTable(system.automaton)
    return _glued_stream(champernowne_blocks(system, order), table, length)


def generic_word_mu(system: BetaSystem, length: int, table: GluingTable | None = None,
                    order: str = "scrambled") -> Word:
    """Letterwise collapse 1 -> 0 of the nu-generic word.

    Lowering a digit never breaks admissibility, so the image is admissible;
    the glued fallback only runs if that check fails.
    """
    if system.alphabet_size < 3:
        raise DomainError("the pushforward needs at least three letters")
    table = table or GluingTable(system.automaton)
    word = collapse(generic_word_nu(system, length, table, order))
    if system.automaton.accepts(word):
        return word
    return _glued_stream((collapse(b) for b in champernowne_blocks(system, order)), table, length)

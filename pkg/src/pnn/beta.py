"""Beta-expansions in exact arithmetic, the expansion of 1 and the language automaton.

Elements of Q(beta) are coefficient vectors over the power basis
1, beta, ..., beta^(d-1), reduced modulo the minimal polynomial.  Floors are
certified by evaluating on a rational isolating interval for beta, bisected
on demand; an exact equality test settles the case where the value is an
integer.  Integer bases are the degree-one case (minpoly x - N).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import mpmath

from .errors import DomainError, PrecisionError, UnsupportedSystemError
from .words import Word, WordLike, as_word

Elem = tuple[Fraction, ...]
RealLike = Union[int, Fraction, str, float]

MAX_BISECTIONS = 4000
DEFAULT_MAX_LEN = 64


def to_fraction(x: RealLike) -> Fraction:
    """Parse ``p/q``, a decimal string, an int, a Fraction or a float exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, float)):
        return Fraction(x)
    try:
        return Fraction(str(x).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise DomainError(f"not a rational number: {x!r}") from exc


def _poly_eval(coeffs: Sequence[int], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


class NumberField:
    """Q(beta) for a real root beta > 1 of an irreducible integer polynomial."""

    def __init__(self, minpoly: Sequence[int], interval: tuple[RealLike, RealLike]):
        self.minpoly = tuple(int(c) for c in minpoly)
        while len(self.minpoly) > 1 and self.minpoly[-1] == 0:
            self.minpoly = self.minpoly[:-1]
        self.degree = len(self.minpoly) - 1
        if self.degree < 1:
            raise DomainError("minimal polynomial must have degree >= 1")
        lo, hi = to_fraction(interval[0]), to_fraction(interval[1])
        if lo > hi:
            raise DomainError("isolating interval is reversed")
        self._lo, self._hi = lo, hi
        self._validate()

    def _validate(self) -> None:
        if self.degree == 1:
            root = Fraction(-self.minpoly[0], self.minpoly[1])
            if not self._lo <= root <= self._hi:
                raise DomainError(f"interval does not contain the root {root}")
            self._lo = self._hi = root
        else:
            import sympy

            x = sympy.Symbol("x")
            poly = sympy.Poly(list(reversed(self.minpoly)), x)
            if not poly.is_irreducible:
                raise DomainError(f"polynomial {self.minpoly} is reducible over Q")
            n_roots = poly.count_roots(sympy.Rational(self._lo), sympy.Rational(self._hi))
            if n_roots != 1:
                raise DomainError(f"interval contains {n_roots} roots, expected exactly 1")
            # sympy counts roots on the closed interval; push the bounds off any root
            if _poly_eval(self.minpoly, self._lo) == 0 or _poly_eval(self.minpoly, self._hi) == 0:
                raise DomainError("interval endpoint is a root")
        while self._hi > 1 >= self._lo and self._lo != self._hi:
            self.refine()
        if self._lo <= 1:
            raise DomainError("beta must exceed 1")

    @property
    def interval(self) -> tuple[Fraction, Fraction]:
        return self._lo, self._hi

    def refine(self) -> None:
        if self._lo == self._hi:
            return
        mid = (self._lo + self._hi) / 2
        f_lo = _poly_eval(self.minpoly, self._lo)
        f_mid = _poly_eval(self.minpoly, mid)
        if (f_lo < 0) == (f_mid < 0):
            self._lo = mid
        else:
            self._hi = mid

    # elements

    def const(self, c: RealLike) -> Elem:
        return (to_fraction(c),) + (Fraction(0),) * (self.degree - 1)

    def beta(self) -> Elem:
        if self.degree == 1:
            return (self._lo,)
        return (Fraction(0), Fraction(1)) + (Fraction(0),) * (self.degree - 2)

    def mul_beta(self, e: Elem) -> Elem:
        if self.degree == 1:
            return (e[0] * self._lo,)
        top = e[-1]
        out = [Fraction(0)] + list(e[:-1])
        if top:
            lead = self.minpoly[-1]
            for i in range(self.degree):
                out[i] -= top * Fraction(self.minpoly[i], lead)
        return tuple(out)

    def add_int(self, e: Elem, k: int) -> Elem:
        return (e[0] + k,) + e[1:]

    def as_int(self, e: Elem) -> Optional[int]:
        if any(e[1:]) or e[0].denominator != 1:
            return None
        return int(e[0])

    def enclose(self, e: Elem) -> tuple[Fraction, Fraction]:
        lo, hi = self._lo, self._hi
        a = b = Fraction(0)
        plo = phi = Fraction(1)
        for c in e:
            if c >= 0:
                a += c * plo
                b += c * phi
            else:
                a += c * phi
                b += c * plo
            plo *= lo
            phi *= hi
        return a, b

    def floor(self, e: Elem) -> int:
        k = self.as_int(e)
        if k is not None:
            return k
        for _ in range(MAX_BISECTIONS):
            a, b = self.enclose(e)
            fa, fb = math.floor(a), math.floor(b)
            if fa == fb:
                return fa
            self.refine()
        raise PrecisionError(f"could not certify a floor after {MAX_BISECTIONS} bisections")

    def compare(self, e: Elem, f: Elem) -> int:
        d = tuple(x - y for x, y in zip(e, f))
        if not any(d):
            return 0
        for _ in range(MAX_BISECTIONS):
            a, b = self.enclose(d)
            if a > 0:
                return 1
            if b < 0:
                return -1
            self.refine()
        raise PrecisionError("could not certify a sign")

    def approx(self, e: Elem | None = None, dps: int = 30) -> mpmath.mpf:
        """High-precision value of ``e`` (default: beta itself)."""
        bits = int(dps * 3.33) + 16
        while self._hi - self._lo > Fraction(1, 2 ** bits):
            self.refine()
        with mpmath.workdps(dps + 10):
            mid = (self._lo + self._hi) / 2
            x = mpmath.mpf(mid.numerator) / mid.denominator
            if e is None:
                return +x
            return sum((mpmath.mpf(c.numerator) / c.denominator * x ** i for i, c in enumerate(e)),
                       mpmath.mpf(0))


@dataclass(frozen=True)
class ExpansionOfOne:
    """Greedy expansion of 1: finite, eventually periodic, or undetected."""

    kind: str
    preperiod: Word = ()
    period: Word = ()

    @property
    def digits(self) -> Word:
        return self.preperiod + self.period if self.kind == "periodic" else self.period

    def comparison(self) -> tuple[Word, Word]:
        """(u, v) with u v^inf the quasi-greedy comparison sequence."""
        if self.kind == "finite":
            d = self.period
            return (), d[:-1] + (d[-1] - 1,)
        if self.kind == "periodic":
            return self.preperiod, self.period
        raise UnsupportedSystemError("expansion of 1 is not (detected to be) eventually periodic")

    def describe(self) -> str:
        if self.kind == "finite":
            return "finite " + "".join(map(str, self.period))
        if self.kind == "periodic":
            return "".join(map(str, self.preperiod)) + "(" + "".join(map(str, self.period)) + ")^inf"
        return "undetected"


@dataclass(frozen=True)
class LanguageAutomaton:
    """Deterministic follower automaton; every state is initial-reachable and accepting.

    ``delta[q][a]`` is the successor of state ``q`` on letter ``a`` or -1.
    """

    delta: tuple[tuple[int, ...], ...]
    alphabet_size: int
    initial: int = 0

    @property
    def n_states(self) -> int:
        return len(self.delta)

    def step(self, q: int, a: int) -> int:
        if not 0 <= a < self.alphabet_size:
            return -1
        return self.delta[q][a]

    def run(self, w: Sequence[int], q: int | None = None) -> int:
        """End state after reading ``w`` from ``q`` (default: initial), -1 if rejected."""
        q = self.initial if q is None else q
        for a in w:
            q = self.step(q, a)
            if q < 0:
                return -1
        return q

    def accepts(self, w: WordLike) -> bool:
        return self.run(as_word(w)) >= 0

    def transition_map(self, w: Sequence[int]) -> tuple[int, ...]:
        """End state from every start state (-1 where ``w`` is not readable)."""
        return tuple(self.run(w, q) for q in range(self.n_states))

    def readable_from(self, w: Sequence[int]) -> frozenset[int]:
        return frozenset(q for q, e in enumerate(self.transition_map(w)) if e >= 0)

    def letters(self, q: int) -> list[int]:
        return [a for a, t in enumerate(self.delta[q]) if t >= 0]

    def adjacency(self) -> list[list[int]]:
        m = [[0] * self.n_states for _ in range(self.n_states)]
        for q, row in enumerate(self.delta):
            for t in row:
                if t >= 0:
                    m[q][t] += 1
        return m


class BetaSystem:
    """A base beta > 1 with its digit alphabet and expansion-of-1 data."""

    def __init__(self, minpoly: Sequence[int], interval: tuple[RealLike, RealLike],
                 kind: str = "algebraic", max_len: int = DEFAULT_MAX_LEN):
        self.kind = kind
        self.field = NumberField(minpoly, interval)
        self.max_len = max_len
        self.floor_beta = self.field.floor(self.field.beta())
        # the integer base N uses {0..N-1}, not {0..floor(beta)}
        self.alphabet_size = self.floor_beta if kind == "integer" else self.floor_beta + 1
        self.d_one = expansion_of_one(self, max_len)

    @property
    def N(self) -> Optional[int]:
        return self.field.as_int(self.field.beta()) if self.kind == "integer" else None

    @property
    def is_integer(self) -> bool:
        return self.kind == "integer"

    @property
    def is_parry(self) -> bool:
        return self.d_one.kind != "undetected"

    def descriptor(self) -> dict:
        if self.is_integer:
            return {"kind": "integer", "N": self.N}
        lo, hi = self.field.interval
        return {"kind": "algebraic", "minpoly": list(self.field.minpoly),
                "interval": [str(lo), str(hi)]}

    def __repr__(self) -> str:
        if self.is_integer:
            return f"BetaSystem(N={self.N})"
        return f"BetaSystem(minpoly={list(self.field.minpoly)}, beta~{float(self.beta):.6f})"

    @cached_property
    def beta(self) -> mpmath.mpf:
        return self.field.approx(dps=40)

    @cached_property
    def automaton(self) -> LanguageAutomaton:
        return build_automaton(self)

    def comparison_stream(self, n: int) -> Word:
        u, v = self.d_one.comparison()
        out = list(u[:n])
        while len(out) < n:
            out.extend(v)
        return tuple(out[:n])


def integer_system(N: int) -> BetaSystem:
    if N < 2:
        raise DomainError("integer base must be >= 2")
    return BetaSystem([-N, 1], (N, N), kind="integer")


def algebraic_system(minpoly: Sequence[int], interval: tuple[RealLike, RealLike],
                     max_len: int = DEFAULT_MAX_LEN) -> BetaSystem:
    return BetaSystem(minpoly, interval, kind="algebraic", max_len=max_len)


def load_system(source: Union[dict, str, Path]) -> BetaSystem:
    """Build a system from a descriptor dict, a JSON string, or a JSON file path."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            source = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read system descriptor: {exc}") from exc
    elif isinstance(source, str):
        source = json.loads(source)
    if not isinstance(source, dict):
        raise DomainError("system descriptor must be a JSON object")
    kind = source.get("kind")
    try:
        if kind == "integer":
            return integer_system(int(source["N"]))
        if kind == "algebraic":
            lo, hi = source["interval"]
            return algebraic_system(source["minpoly"], (to_fraction(lo), to_fraction(hi)),
                                    max_len=int(source.get("maxLen", DEFAULT_MAX_LEN)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed system descriptor: {exc}") from exc
    raise DomainError(f"unknown system kind {kind!r}")


def beta_orbit(x: RealLike, system: BetaSystem) -> Iterator[tuple[int, Elem]]:
    """Yield (digit, remainder) pairs of the greedy algorithm started at ``x``."""
    F = system.field
    xf = to_fraction(x)
    if not 0 <= xf <= 1:
        raise DomainError(f"x={x} outside [0, 1]")
    r = F.const(xf)
    while True:
        t = F.mul_beta(r)
        d = F.floor(t)
        r = F.add_int(t, -d)
        yield d, r


def beta_expand(x: RealLike, system: BetaSystem, n: int) -> Word:
    """First ``n`` greedy digits of ``x`` in base beta.

    For an integer base and x = 1 the non-terminating expansion (N-1)^n is
    returned, since the greedy digit N is not in the alphabet.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    xf = to_fraction(x)
    if system.is_integer and xf == 1:
        return (system.N - 1,) * n
    out = []
    for d, _ in beta_orbit(xf, system):
        out.append(d)
        if len(out) == n:
            break
    return tuple(out)


def beta_value(w: Sequence[int], system: BetaSystem, dps: int = 30) -> mpmath.mpf:
    """sum_k w_k beta^-k."""
    with mpmath.workdps(dps):
        b = system.field.approx(dps=dps)
        return sum((mpmath.mpf(d) / b ** (k + 1) for k, d in enumerate(w)), mpmath.mpf(0))


def expansion_of_one(system: BetaSystem, max_len: int = DEFAULT_MAX_LEN) -> ExpansionOfOne:
    """Run the orbit of 1 exactly, detecting termination or an exact repeat."""
    if max_len < 1:
        raise DomainError("max_len must be >= 1")
    F = system.field
    seen: dict[Elem, int] = {F.const(1): 0}
    digits: list[int] = []
    r = F.const(1)
    for k in range(1, max_len + 1):
        t = F.mul_beta(r)
        d = F.floor(t)
        r = F.add_int(t, -d)
        digits.append(d)
        if not any(r):
            return ExpansionOfOne("finite", (), tuple(digits))
        if r in seen:
            m = seen[r]
            return ExpansionOfOne("periodic", tuple(digits[:m]), tuple(digits[m:]))
        seen[r] = k
    return ExpansionOfOne("undetected", (), tuple(digits))


def is_admissible(w: WordLike, system: BetaSystem) -> bool:
    """Every suffix of ``w`` is lexicographically <= the comparison stream.

    A suffix equal to a prefix of the comparison stream is allowed.
    """
    w = as_word(w)
    if any(not 0 <= a < system.alphabet_size for a in w):
        return False
    c = system.comparison_stream(len(w))
    for k in range(len(w)):
        s = w[k:]
        if s > c[:len(s)]:
            return False
    return True


def build_automaton(system: BetaSystem) -> LanguageAutomaton:
    u, v = system.d_one.comparison()
    s = u + v
    L = len(s)
    rows = []
    for i in range(L):
        row = []
        for a in range(system.alphabet_size):
            if a < s[i]:
                row.append(0)
            elif a == s[i]:
                row.append(i + 1 if i + 1 < L else len(u))
            else:
                row.append(-1)
        rows.append(tuple(row))
    return LanguageAutomaton(tuple(rows), system.alphabet_size)


def enumerate_language(automaton: LanguageAutomaton, n: int) -> list[Word]:
    """All accepted words of length ``n`` in lexicographic order."""
    if n < 0:
        raise DomainError("n must be >= 0")
    out: list[Word] = []

    def walk(q: int, prefix: list[int]) -> None:
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for a in range(automaton.alphabet_size):
            t = automaton.delta[q][a]
            if t >= 0:
                prefix.append(a)
                walk(t, prefix)
                prefix.pop()

    walk(automaton.initial, [])
    return out


def count_language(automaton: LanguageAutomaton, n: int) -> int:
    """|L_n| by dynamic programming over states (exact integer)."""
    counts = [0] * automaton.n_states
    counts[automaton.initial] = 1
    for _ in range(n):
        nxt = [0] * automaton.n_states
        for q, c in enumerate(counts):
            if c:
                for t in automaton.delta[q]:
                    if t >= 0:
                        nxt[t] += c
        counts = nxt
    return sum(counts)

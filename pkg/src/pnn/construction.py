"""The recursive block construction of particularly non-normal prefixes.

Block sets grow like exp(p * sum n_k k h), far beyond anything that can be
listed, so a set is kept as a summary: its common length and, for each
transition map of its words through the automaton, how many words share it
and the least/greatest count of each tracked digit.  Words in one class
glue identically to whatever follows, so every step of the recursion acts
on classes.  Small sets additionally keep their words.

Runs of identical steps on a single class are applied in closed form
(count * m^k), which is what makes deep stages on integer bases cheap.
"""

from __future__ import annotations

import bisect
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import mpmath
import sympy

from .beta import BetaSystem, LanguageAutomaton, enumerate_language
from .errors import ConstructionError, DomainError, PolicyError, ScheduleError
from .measures import CylinderMeasure, MeasurePair, generic_word_mu, measure_pair, perron_vectors
from .specification import GluingTable
from .words import Word, format_word

Real = Union[Fraction, float]

EXPLICIT_LIMIT = 20000
N_CAP = 10 ** 7
LOG_DPS = 60


# counts ---------------------------------------------------------------------


def _factor(n: int) -> dict[int, int]:
    if n < 2:
        return {}
    return {int(q): int(k) for q, k in sympy.factorint(n).items()}


class Count:
    """A positive rational kept as coeff * prod(base ** exp) with small bases.

    Repeated multiplication by the same family size only bumps an exponent,
    so |B| for deep stages never has to be written out in full.
    """

    __slots__ = ("coeff", "powers")

    def __init__(self, coeff: Union[int, Fraction] = 1, powers: Optional[dict[int, int]] = None):
        self.coeff = Fraction(coeff)
        self.powers = {b: e for b, e in (powers or {}).items() if e and b != 1}

    @classmethod
    def of(cls, n: int) -> "Count":
        return cls(1, {n: 1}) if n > 1 else cls(n)

    @classmethod
    def power(cls, base: int, exp: int) -> "Count":
        return cls(1, {base: exp})

    def __mul__(self, other: Union["Count", int]) -> "Count":
        if not isinstance(other, Count):
            other = Count(1, {other: 1}) if other > 1 else Count(other)
        powers = dict(self.powers)
        for b, e in other.powers.items():
            powers[b] = powers.get(b, 0) + e
        return Count(self.coeff * other.coeff, powers)

    def __truediv__(self, other: "Count") -> "Count":
        return self * Count(1 / other.coeff, {b: -e for b, e in other.powers.items()})

    def __pow__(self, k: int) -> "Count":
        return Count(self.coeff ** k, {b: e * k for b, e in self.powers.items()})

    def __add__(self, other: "Count") -> "Count":
        if self.powers == other.powers:
            return Count(self.coeff + other.coeff, self.powers)
        return Count(self.value() + other.value())

    def value(self) -> Fraction:
        if sum(abs(e) * b.bit_length() for b, e in self.powers.items()) > 4_000_000:
            raise ConstructionError("count too large to expand exactly")
        v = self.coeff
        for b, e in self.powers.items():
            v *= Fraction(b) ** e
        return v

    def log(self) -> mpmath.mpf:
        with mpmath.workdps(LOG_DPS):
            out = mpmath.log(self.coeff.numerator) - mpmath.log(self.coeff.denominator)
            for b, e in self.powers.items():
                out += e * mpmath.log(b)
            return out

    def _canonical(self) -> tuple[Fraction, dict[int, int]]:
        primes: dict[int, int] = {}

        def add(n: int, sign: int) -> None:
            for q, k in _factor(n).items():
                primes[q] = primes.get(q, 0) + sign * k

        rest = Fraction(1)
        for part, sign in ((self.coeff.numerator, 1), (self.coeff.denominator, -1)):
            if part.bit_length() <= 64:
                add(part, sign)
            else:
                rest *= Fraction(part) ** sign
        for b, e in self.powers.items():
            for q, k in _factor(b).items():
                primes[q] = primes.get(q, 0) + k * e
        return rest, {q: e for q, e in primes.items() if e}

    def compare(self, other: "Count") -> int:
        """Exact sign of self - other."""
        ca, pa = self._canonical()
        cb, pb = other._canonical()
        if ca == cb and pa == pb:
            return 0
        with mpmath.workdps(LOG_DPS):
            d = self.log() - other.log()
            if abs(d) > mpmath.mpf(10) ** -(LOG_DPS - 15):
                return 1 if d > 0 else -1
        # too close for logs: expand the ratio exactly
        ratio = (self / other).value()
        return (ratio > 1) - (ratio < 1)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Count) and self.compare(other) == 0

    def __hash__(self) -> int:
        return hash(float(self.log()))

    def __repr__(self) -> str:
        if not self.powers:
            return f"Count({self.coeff})"
        return f"Count({self.coeff} * {self.powers})"

    def __int__(self) -> int:
        v = self.value()
        if v.denominator != 1:
            raise ValueError("count is not an integer")
        return int(v)


# epsilon policy and Gamma families -------------------------------------------


@dataclass(frozen=True)
class EpsilonPolicy:
    """epsilon(n) = max(smallest epsilon giving a nonempty family, K / sqrt(n)).

    ``fixed`` replaces the rule by a constant threshold.
    """

    K: Fraction = Fraction(5, 4)
    fixed: Optional[Fraction] = None

    def admits(self, deviation: Real, n: int, floor: Real) -> bool:
        if self.fixed is not None:
            return deviation <= self.fixed
        if deviation <= floor:
            return True
        if isinstance(deviation, Fraction):
            return deviation * deviation * n <= self.K * self.K
        return deviation * deviation * n <= float(self.K * self.K) * (1 + 1e-12)

    def describe(self) -> dict:
        if self.fixed is not None:
            return {"rule": "fixed", "epsilon": str(self.fixed)}
        return {"rule": "max(min-nonempty, K/sqrt(n))", "K": str(self.K)}


@dataclass
class GammaGroup:
    """Family words sharing a readable-state set and transition map."""

    readable: frozenset
    transmap: tuple[int, ...]
    mult: int
    cmin: tuple[int, ...]
    cmax: tuple[int, ...]
    words: list[Word]


@dataclass
class GammaFamily:
    n: int
    words: list[Word]
    epsilon_n: Real
    eta_n: float
    threshold: dict
    groups: list[GammaGroup] = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return len(self.words)


def _tracked_counts(w: Sequence[int], tracked: Sequence[int]) -> tuple[int, ...]:
    return tuple(sum(1 for a in w if a == d) for d in tracked)


def _deviation(w: Word, targets: Sequence[Real], tracked: Sequence[int]) -> Real:
    n = len(w)
    exact = all(isinstance(t, Fraction) for t in targets)
    devs = []
    for d, t in zip(tracked, targets):
        c = sum(1 for a in w if a == d)
        devs.append(abs(Fraction(c, n) - t) if exact else abs(c / n - float(t)))
    return max(devs)


def topological_entropy(system: BetaSystem) -> float:
    if system.is_integer:
        return math.log(system.N)
    return float(mpmath.log(system.beta))


def gamma_family(system: BetaSystem, nu: CylinderMeasure, n: int,
                 policy: EpsilonPolicy | None = None,
                 tracked: Sequence[int] = (0, 2)) -> GammaFamily:
    """Admissible length-n words whose tracked digit frequencies are close to nu."""
    if n < 1:
        raise DomainError("n must be >= 1")
    policy = policy or EpsilonPolicy()
    aut = system.automaton
    targets = [nu((d,)) for d in tracked]
    language = enumerate_language(aut, n)
    devs = {w: _deviation(w, targets, tracked) for w in language}
    floor = min(devs.values()) if devs else 0
    kept = [w for w in language if policy.admits(devs[w], n, floor)]
    if not kept:
        raise PolicyError(f"Gamma(nu, {n}) is empty under {policy.describe()}")
    h = topological_entropy(system)
    eps = max(devs[w] for w in kept)
    eta = abs(math.log(len(kept)) / n - h)
    buckets: dict[tuple, GammaGroup] = {}
    for w in kept:
        tm = aut.transition_map(w)
        key = tm
        c = _tracked_counts(w, tracked)
        g = buckets.get(key)
        if g is None:
            buckets[key] = GammaGroup(frozenset(q for q, e in enumerate(tm) if e >= 0), tm, 1, c, c, [w])
        else:
            g.mult += 1
            g.cmin = tuple(map(min, g.cmin, c))
            g.cmax = tuple(map(max, g.cmax, c))
            g.words.append(w)
    groups = [buckets[k] for k in sorted(buckets)]
    return GammaFamily(n, kept, eps, eta, policy.describe(), groups)


# fixed-part source -----------------------------------------------------------


def balanced_word(freqs: Sequence[Real], length: int) -> Word:
    """Low-discrepancy word: each position takes the letter furthest behind its quota."""
    counts = [0] * len(freqs)
    out = []
    for k in range(length):
        best, gap = 0, None
        for a, f in enumerate(freqs):
            if not f:
                continue
            g = f * (k + 1) - counts[a]
            if gap is None or g > gap:
                best, gap = a, g
        counts[best] += 1
        out.append(best)
    return tuple(out)


# block sets -------------------------------------------------------------------


@dataclass
class BlockClass:
    count: Count
    cmin: tuple[int, ...]
    cmax: tuple[int, ...]
    words: Optional[list[Word]]


@dataclass
class BlockSet:
    """Summary of one B_i^(j): common length and classes keyed by transition map."""

    length: int
    classes: dict[tuple[int, ...], BlockClass]

    @property
    def cardinality(self) -> Count:
        total: Optional[Count] = None
        for c in self.classes.values():
            total = c.count if total is None else total + c.count
        return total if total is not None else Count(0)

    @property
    def explicit(self) -> bool:
        return all(c.words is not None for c in self.classes.values())

    def words(self) -> list[Word]:
        if not self.explicit:
            raise ConstructionError("block set is too large to list")
        return sorted(w for c in self.classes.values() for w in c.words)


@dataclass(frozen=True)
class Option:
    """A block that may be appended in a step (omega_j, or one Gamma group)."""

    readable: frozenset
    transmap: tuple[int, ...]
    mult: int
    length: int
    cmin: tuple[int, ...]
    cmax: tuple[int, ...]
    words: tuple[Word, ...]


@dataclass
class Segment:
    """Steps i0+1 .. i0+k of stage j, all alike: lengths, logs and y move linearly."""

    j: int
    kind: str
    i0: int
    k: int
    length0: int
    dlength: int
    logcard0: mpmath.mpf
    dlogcard: mpmath.mpf
    logy0: float
    dlogy: float

    def length_at(self, i: int) -> int:
        return self.length0 + (i - self.i0) * self.dlength


@dataclass
class StageRecord:
    j: int
    n: int
    rho: Real
    delta: Real
    epsilon: Real
    eta: float
    omega_j: Word
    lengths: dict[int, int] = field(default_factory=dict)


@dataclass
class LemmaCheck:
    j: int
    i: int
    lhs_log: float
    rhs_log: float
    holds: bool
    exact: bool


def linear_growth(j: int) -> float:
    return j + 3


def exponential_growth(j: int) -> float:
    return 2.0 ** j


GROWTH = {"linear": linear_growth, "exponential": exponential_growth}


@dataclass
class ConstructionConfig:
    p: int = 1
    stages: int = 4
    policy: EpsilonPolicy = field(default_factory=EpsilonPolicy)
    growth: str = "linear"
    omega: str = "balanced"
    explicit_limit: int = EXPLICIT_LIMIT
    n_cap: int = N_CAP

    def describe(self) -> dict:
        return {"p": self.p, "stages": self.stages, "epsilonPolicy": self.policy.describe(),
                "growth": self.growth, "omega": self.omega}


class ConstructionState:
    """Schedule, block-set summaries and per-step bookkeeping of one run."""

    def __init__(self, system: BetaSystem, config: ConstructionConfig | None = None,
                 pair: MeasurePair | None = None):
        self.system = system
        self.config = config or ConstructionConfig()
        if self.config.p < 1:
            raise DomainError("p must be >= 1")
        if self.config.stages < 1:
            raise DomainError("stages must be >= 1")
        if self.config.growth not in GROWTH:
            raise DomainError(f"unknown growth rule {self.config.growth!r}")
        self.pair = pair or measure_pair(system)
        self.nu, self.mu = self.pair.nu, self.pair.mu
        self.tracked = (self.pair.divergent_digit, self.pair.convergent_digit)
        self.aut: LanguageAutomaton = system.automaton
        self.table = GluingTable(self.aut)
        self.C = self.table.C
        self.C_tilde = max(self.C, 1)
        self.h = topological_entropy(system)
        self.omega = self._fixed_source(max(self.config.stages, 1))
        self.gammas: dict[int, GammaFamily] = {}
        self.stages: list[StageRecord] = []
        self.segments: list[Segment] = []
        self.lemma: list[LemmaCheck] = []
        self.explicit_sets: dict[int, BlockSet] = {}
        identity = tuple(range(self.aut.n_states))
        zero = (0,) * len(self.tracked)
        self.current = BlockSet(0, {identity: BlockClass(Count(1), zero, zero, [()])})
        self.explicit_sets[0] = self.current
        self.flat = 0
        self._lemma_prefix_log = mpmath.mpf(0)
        self._lemma_prefix_exact: Optional[Count] = Count(1)
        if system.is_integer:
            self._log_nu = None
        else:
            lam, l, r = perron_vectors(self.aut)
            self._lam, self._l, self._r = lam, l, r

    # setup

    def _fixed_source(self, length: int) -> Word:
        if self.config.omega == "balanced":
            freqs = [self.mu((a,)) for a in range(self.system.alphabet_size)]
            w = balanced_word(freqs, length)
            if self.aut.accepts(w):
                return w
        elif self.config.omega != "generic":
            raise DomainError(f"unknown fixed-part source {self.config.omega!r}")
        return generic_word_mu(self.system, length, self.table)

    def delta(self, n: int) -> Real:
        w = self.omega[:n]
        targets = [self.mu((d,)) for d in self.tracked]
        return _deviation(w, targets, self.tracked)

    def gamma(self, n: int) -> GammaFamily:
        if n not in self.gammas:
            self.gammas[n] = gamma_family(self.system, self.nu, n, self.config.policy, self.tracked)
        return self.gammas[n]

    def log_nu_class(self, transmap: tuple[int, ...], length: int) -> float:
        """log nu([x]) for any x with this transition map and length."""
        if self.system.is_integer:
            return -length * math.log(self.system.N)
        s = sum(self._l[q] * self._r[e] for q, e in enumerate(transmap) if e >= 0)
        return math.log(s) - length * math.log(self._lam)

    def log_y(self, blocks: BlockSet) -> float:
        return min(self.log_nu_class(t, blocks.length) for t in blocks.classes)

    # one step

    def _options_fixed(self, j: int) -> list[Option]:
        w = self.omega[:j]
        tm = self.aut.transition_map(w)
        c = _tracked_counts(w, self.tracked)
        return [Option(frozenset(q for q, e in enumerate(tm) if e >= 0), tm, 1, len(w), c, c, (w,))]

    def _options_gamma(self, j: int) -> list[Option]:
        fam = self.gamma(j)
        return [Option(g.readable, g.transmap, g.mult, j, g.cmin, g.cmax, tuple(g.words))
                for g in fam.groups]

    def _compose(self, tm: tuple[int, ...], v: Word, opt: Option) -> tuple[int, ...]:
        out = []
        for e in tm:
            if e >= 0:
                e = self.aut.run(v, e)
            out.append(opt.transmap[e] if e >= 0 else -1)
        return tuple(out)

    def _step(self, blocks: BlockSet, options: list[Option]) -> BlockSet:
        cand: dict[int, dict[tuple, BlockClass]] = defaultdict(dict)
        keep_words = blocks.explicit and int(blocks.cardinality) * sum(o.mult for o in options) <= self.config.explicit_limit
        init = self.aut.initial
        for tm, cls in blocks.classes.items():
            q = tm[init]
            for opt in options:
                v = self.table.connector(q, opt.readable)
                new_tm = self._compose(tm, v, opt)
                new_len = blocks.length + len(v) + opt.length
                vc = _tracked_counts(v, self.tracked)
                cmin = tuple(a + b + c for a, b, c in zip(cls.cmin, vc, opt.cmin))
                cmax = tuple(a + b + c for a, b, c in zip(cls.cmax, vc, opt.cmax))
                count = cls.count * opt.mult
                words = [b + v + g for b in cls.words for g in opt.words] if keep_words else None
                slot = cand[new_len]
                old = slot.get(new_tm)
                if old is None:
                    slot[new_tm] = BlockClass(count, cmin, cmax, words)
                else:
                    old.count = old.count + count
                    old.cmin = tuple(map(min, old.cmin, cmin))
                    old.cmax = tuple(map(max, old.cmax, cmax))
                    if old.words is not None and words is not None:
                        old.words.extend(words)
        if not cand:
            raise ConstructionError("block set became empty")
        best_len, best_total = None, None
        for length in sorted(cand):
            total = None
            for c in cand[length].values():
                total = c.count if total is None else total + c.count
            if best_total is None or total.compare(best_total) > 0:
                best_len, best_total = length, total
        return BlockSet(best_len, dict(sorted(cand[best_len].items())))

    def _uniform_factor(self, before: BlockSet, after: BlockSet) -> Optional[tuple]:
        """(multiplier, dcmin, dcmax) if ``after`` is ``before`` scaled on one fixed class."""
        if len(before.classes) != 1 or len(after.classes) != 1:
            return None
        (tb, cb), = before.classes.items()
        (ta, ca), = after.classes.items()
        if tb != ta:
            return None
        m = (ca.count / cb.count).value()
        if m.denominator != 1:
            return None
        return (int(m), tuple(a - b for a, b in zip(ca.cmin, cb.cmin)),
                tuple(a - b for a, b in zip(ca.cmax, cb.cmax)))

    def _run_segment(self, j: int, kind: str, i_start: int, steps: int, options: list[Option]) -> None:
        """Apply ``steps`` identical steps, fast-forwarding when the step is uniform."""
        done = 0
        while done < steps:
            before = self.current
            after = self._step(before, options)
            i = i_start + done + 1
            self._advance(j, kind, i - 1, 1, before, after)
            done += 1
            uni = self._uniform_factor(before, after)
            remaining = steps - done
            if uni and remaining > 0 and not (after.explicit and int(after.cardinality) * uni[0] <= self.config.explicit_limit):
                m, dmin, dmax = uni
                dlen = after.length - before.length
                (tm, cls), = after.classes.items()
                k = remaining
                jumped = BlockSet(after.length + k * dlen, {tm: BlockClass(
                    cls.count * Count.power(m, k) if m != 1 else cls.count,
                    tuple(a + k * d for a, d in zip(cls.cmin, dmin)),
                    tuple(a + k * d for a, d in zip(cls.cmax, dmax)), None)})
                self._advance(j, kind, i, k, after, jumped)
                done += k

    def _advance(self, j: int, kind: str, i0: int, k: int, before: BlockSet, after: BlockSet) -> None:
        rec = self.stages[-1]
        logc0, logc1 = before.cardinality.log(), after.cardinality.log()
        logy0, logy1 = self.log_y(before), self.log_y(after)
        dlen = (after.length - before.length) // k
        if before.length + k * dlen != after.length:
            raise ConstructionError("non-uniform lengths inside a fast-forwarded segment")
        self.segments.append(Segment(j, kind, i0, k, before.length, dlen,
                                     logc0, (logc1 - logc0) / k, logy0, (logy1 - logy0) / k))
        self.current = after
        self.flat += k
        for i in (i0 + k,) if k == 1 else (i0 + 1, i0 + k):
            rec.lengths[i] = before.length + (i - i0) * dlen
        if after.explicit:
            self.explicit_sets[self.flat] = after
        self._check_lemma(j, i0 + k, after)

    # lemma

    def _gamma_growth(self, k: int) -> tuple[Optional[Count], mpmath.mpf]:
        """exp(k (h - eta_k)) exactly when rational, and its log."""
        g = self.gamma(k).size
        with mpmath.workdps(LOG_DPS):
            kh = k * (mpmath.log(self.system.N) if self.system.is_integer else mpmath.log(self.system.beta))
            lg = mpmath.log(g)
            log_val = lg if lg <= kh else 2 * kh - lg
        if self.system.is_integer:
            Nk = self.system.N ** k
            exact = Count.of(g) if g <= Nk else Count.power(self.system.N, 2 * k) / Count.of(g)
            return exact, log_val
        return None, log_val

    def _lemma_rhs(self, j: int, i: int) -> tuple[Optional[Count], mpmath.mpf]:
        rec = self.stages[-1]
        exact = self._lemma_prefix_exact
        with mpmath.workdps(LOG_DPS):
            log_rhs = self._lemma_prefix_log
            extra = max(0, i - rec.n)
            if extra:
                g_exact, g_log = self._gamma_growth(j)
                log_rhs = log_rhs + extra * (g_log - mpmath.log(self.C_tilde))
                if exact is not None and g_exact is not None:
                    exact = exact * (g_exact / Count.of(self.C_tilde)) ** extra
                else:
                    exact = None
        return exact, log_rhs

    def _check_lemma(self, j: int, i: int, blocks: BlockSet) -> None:
        rec = self.stages[-1]
        card = blocks.cardinality
        if 1 <= i <= rec.n:
            b0 = self._stage_b0_card
            ok = card.compare(b0) == 0
            self.lemma.append(LemmaCheck(j, i, float(card.log()), float(b0.log()), ok, True))
            return
        exact, log_rhs = self._lemma_rhs(j, i)
        if exact is not None:
            ok = card.compare(exact) >= 0
        else:
            ok = card.log() >= log_rhs
        self.lemma.append(LemmaCheck(j, i, float(card.log()), float(log_rhs), bool(ok), exact is not None))

    def _close_stage_bound(self, j: int, n_j: int) -> None:
        p = self.config.p
        g_exact, g_log = self._gamma_growth(j)
        with mpmath.workdps(LOG_DPS):
            self._lemma_prefix_log += p * n_j * (g_log - mpmath.log(self.C_tilde))
        if self._lemma_prefix_exact is not None and g_exact is not None:
            self._lemma_prefix_exact = self._lemma_prefix_exact * (g_exact / Count.of(self.C_tilde)) ** (p * n_j)
        else:
            self._lemma_prefix_exact = None

    # schedule

    def _fixed_run(self, q: int, j: int, n: int):
        """Counts and length added by n glued copies of omega_j from end state q."""
        w = self.omega[:j]
        opt = self._options_fixed(j)[0]
        seen: dict[int, int] = {}
        states, adds = [], []
        s = q
        while s not in seen:
            seen[s] = len(states)
            v = self.table.connector(s, opt.readable)
            states.append(s)
            adds.append((len(v) + len(w), tuple(a + b for a, b in zip(_tracked_counts(v, self.tracked), opt.cmin))))
            s = opt.transmap[self.aut.run(v, s)]
        mu_start = seen[s]
        return adds, mu_start

    @staticmethod
    def _sum_adds(adds, start: int, n: int, width: int) -> tuple[int, tuple[int, ...]]:
        total_len, total = 0, [0] * width
        pre = min(n, start)
        for t in range(pre):
            total_len += adds[t][0]
            total = [a + b for a, b in zip(total, adds[t][1])]
        rest = n - pre
        if rest:
            cyc = adds[start:]
            cl = sum(a[0] for a in cyc)
            cc = [sum(a[1][d] for a in cyc) for d in range(width)]
            full, part = divmod(rest, len(cyc))
            total_len += full * cl
            total = [a + full * b for a, b in zip(total, cc)]
            for t in range(part):
                total_len += cyc[t][0]
                total = [a + b for a, b in zip(total, cyc[t][1])]
        return total_len, tuple(total)

    def choose_nj(self, j: int, rho: Real, n_prev: int) -> int:
        blocks = self.current
        growth = GROWTH[self.config.growth](j)
        lo = max(n_prev + 1, math.ceil(growth * blocks.length / j))
        targets = [self.mu((d,)) for d in self.tracked]
        exact = isinstance(rho, Fraction) and all(isinstance(t, Fraction) for t in targets)
        bound = 2 * rho
        runs = []
        for tm, cls in blocks.classes.items():
            adds, start = self._fixed_run(tm[self.aut.initial], j, 0)
            runs.append((cls, adds, start))
        width = len(self.tracked)
        for n in range(lo, lo + self.config.n_cap):
            ok = True
            for cls, adds, start in runs:
                add_len, add_c = self._sum_adds(adds, start, n, width)
                L = blocks.length + add_len
                for extreme in (cls.cmin, cls.cmax):
                    for d, t in enumerate(targets):
                        c = extreme[d] + add_c[d]
                        dev = abs(Fraction(c, L) - t) if exact else abs(c / L - float(t))
                        if dev > bound:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                return n
        raise ScheduleError(f"stage {j}: no n_j in [{lo}, {lo + self.config.n_cap}) meets 2*rho_j = {float(bound):.4g}")

    def build_stage(self, j: int) -> StageRecord:
        if j != len(self.stages) + 1:
            raise ConstructionError(f"stage {j} requested but {len(self.stages)} built")
        p = self.config.p
        fam = self.gamma(j)
        delta = self.delta(j)
        rho = max(fam.epsilon_n, delta)
        n_prev = self.stages[-1].n if self.stages else 0
        n_j = self.choose_nj(j, rho, n_prev)
        rec = StageRecord(j, n_j, rho, delta, fam.epsilon_n, fam.eta_n, self.omega[:j])
        rec.lengths[0] = self.current.length
        self.stages.append(rec)
        self._stage_b0_card = self.current.cardinality
        self._stage_b0_flat = self.flat
        if j == 1:
            self.lemma.append(LemmaCheck(1, 0, 0.0, 0.0, True, True))
        self._run_segment(j, "fixed", 0, n_j, self._options_fixed(j))
        self._run_segment(j, "gamma", n_j, p * n_j, self._options_gamma(j))
        self._close_stage_bound(j, n_j)
        return rec

    def build(self, stages: int | None = None) -> "ConstructionState":
        for j in range(len(self.stages) + 1, (stages or self.config.stages) + 1):
            self.build_stage(j)
        return self

    # queries

    @property
    def n_seq(self) -> list[int]:
        return [s.n for s in self.stages]

    def length(self, j: int, i: int) -> int:
        """l_i^(j); i = (p+1) n_j is the same set as B_0^(j+1)."""
        rec = self.stages[j - 1]
        if i in rec.lengths:
            return rec.lengths[i]
        for seg in self.segments:
            if seg.j == j and seg.i0 < i <= seg.i0 + seg.k:
                return seg.length_at(i)
        raise DomainError(f"index ({j}, {i}) not built")

    def flat_index(self, j: int, i: int) -> int:
        return (self.config.p + 1) * sum(s.n for s in self.stages[:j - 1]) + i

    def split_index(self, n: int) -> tuple[int, int]:
        """(j, i) with n = (p+1) sum_{k<j} n_k + i and 1 <= i <= (p+1) n_j."""
        if n < 1:
            raise DomainError("flat index must be >= 1")
        base = 0
        for rec in self.stages:
            span = (self.config.p + 1) * rec.n
            if n <= base + span:
                return rec.j, n - base
            base += span
        raise DomainError(f"flat index {n} beyond the built stages")

    @property
    def max_flat(self) -> int:
        return self.flat

    def segment_at(self, n: int) -> Segment:
        starts = self._segment_starts()
        k = bisect.bisect_right(starts, n - 1) - 1
        return self.segments[k]

    def _segment_starts(self) -> list[int]:
        if getattr(self, "_starts_cache", None) is None or len(self._starts_cache) != len(self.segments):
            out, acc = [], 0
            for seg in self.segments:
                out.append(acc)
                acc += seg.k
            self._starts_cache = out
        return self._starts_cache

    def flat_length(self, n: int) -> int:
        if n == 0:
            return 0
        seg, start = self._seg_and_start(n)
        return seg.length0 + (n - start) * seg.dlength

    def log_card(self, n: int) -> mpmath.mpf:
        if n == 0:
            return mpmath.mpf(0)
        seg, start = self._seg_and_start(n)
        return seg.logcard0 + (n - start) * seg.dlogcard

    def log_y_flat(self, n: int) -> float:
        if n == 0:
            return 0.0
        seg, start = self._seg_and_start(n)
        return seg.logy0 + (n - start) * seg.dlogy

    def _seg_and_start(self, n: int) -> tuple[Segment, int]:
        starts = self._segment_starts()
        k = bisect.bisect_right(starts, n - 1) - 1
        return self.segments[k], starts[k]

    def stage_end(self, j: int) -> int:
        """Flat index of B_0^(j+1)."""
        return self.flat_index(j, (self.config.p + 1) * self.stages[j - 1].n)

    def trace(self) -> dict:
        out = {"config": self.config.describe(), "system": self.system.descriptor(),
               "C": self.C, "entropy": self.h, "trackedDigits": list(self.tracked),
               "omegaPrefix": format_word(self.omega, self.system.alphabet_size), "stages": []}
        for rec in self.stages:
            lengths = {str(i): l for i, l in sorted(rec.lengths.items())}
            cards = [{"i": c.i, "logCard": c.lhs_log, "logBound": c.rhs_log, "holds": c.holds,
                      "exact": c.exact} for c in self.lemma if c.j == rec.j]
            out["stages"].append({
                "j": rec.j, "n": rec.n, "rho": float(rec.rho), "delta": float(rec.delta),
                "epsilon": float(rec.epsilon), "eta": rec.eta,
                "gammaSize": self.gamma(rec.j).size,
                "omega": format_word(rec.omega_j, self.system.alphabet_size),
                "lengths": lengths, "lemma": cards})
        return out

    @property
    def lemma_holds(self) -> bool:
        return all(c.holds for c in self.lemma)


def build_construction(system: BetaSystem, p: int = 1, stages: int = 4, **kwargs) -> ConstructionState:
    return ConstructionState(system, ConstructionConfig(p=p, stages=stages, **kwargs)).build()


# sampling -------------------------------------------------------------------


@dataclass(frozen=True)
class Annotation:
    offset: int
    length: int
    kind: str
    stage: int
    index: int


@dataclass
class PnnSample:
    word: Word
    annotations: list[Annotation]
    choices: list[Word]
    checkpoints: list[tuple[int, int, int]]

    def decode(self) -> list[tuple[str, int, int, Word]]:
        """Blocks read back from the word by their annotations (connectors skipped)."""
        w = self.word
        return [(a.kind, a.stage, a.index, w[a.offset:a.offset + a.length])
                for a in self.annotations if a.kind != "glue"]

    def connector_lengths(self) -> list[int]:
        return [a.length for a in self.annotations if a.kind == "glue"]


def _step_plan(state: ConstructionState, stages: int) -> Iterable[tuple[int, str, int, int]]:
    """(j, kind, i, target length) for every step of the first ``stages`` stages."""
    for seg in state.segments:
        if seg.j > stages:
            break
        for t in range(1, seg.k + 1):
            i = seg.i0 + t
            yield seg.j, seg.kind, i, seg.length_at(i)


def sample_pnn_prefix(state: ConstructionState, stages: int | None = None,
                      selector: str = "deterministic", seed: int = 0,
                      max_length: int | None = None) -> PnnSample:
    """One explicit element prefix, assembled block by block with its annotations.

    Every step must land on the kept length, so choices are restricted to
    blocks whose connector has the right length and from whose end state the
    remaining steps stay feasible.
    """
    stages = stages or len(state.stages)
    if stages > len(state.stages):
        raise DomainError(f"only {len(state.stages)} stages built")
    if selector not in ("deterministic", "random"):
        raise DomainError(f"unknown selector {selector!r}")
    rng = random.Random(seed)
    aut, table = state.aut, state.table
    plan = list(_step_plan(state, stages))
    options = {}
    for j in range(1, stages + 1):
        options[j, "fixed"] = [state.omega[:j]]
        options[j, "gamma"] = state.gamma(j).words
    single = aut.n_states == 1

    # backward feasibility over automaton states
    feasible: list[Optional[frozenset]] = [None] * (len(plan) + 1)
    if not single:
        everything = frozenset(range(aut.n_states))
        feasible[len(plan)] = everything
        prev_len = [0] + [t[3] for t in plan[:-1]]
        for t in range(len(plan) - 1, -1, -1):
            j, kind, i, target = plan[t]
            ok = set()
            for q in everything:
                for b in options[j, kind]:
                    v = table.connector_for(q, b)
                    if prev_len[t] + len(v) + len(b) != target:
                        continue
                    e = aut.run(v + b, q)
                    if e in feasible[t + 1]:
                        ok.add(q)
                        break
            feasible[t] = frozenset(ok)
        if aut.initial not in feasible[0]:
            raise ConstructionError("no element of the block sets extends through all steps")

    word: list[int] = []
    notes: list[Annotation] = []
    choices: list[Word] = []
    checkpoints: list[tuple[int, int, int]] = []
    q = aut.initial
    counter = 0
    for t, (j, kind, i, target) in enumerate(plan):
        cands = options[j, kind]
        if not single:
            good = []
            for b in cands:
                v = table.connector_for(q, b)
                if len(word) + len(v) + len(b) == target and aut.run(v + b, q) in feasible[t + 1]:
                    good.append(b)
            cands = good
        if kind == "gamma":
            b = cands[counter % len(cands)] if selector == "deterministic" else rng.choice(cands)
            counter += 1
            choices.append(b)
        else:
            b = cands[0]
        v = () if single else table.connector_for(q, b)
        if v:
            notes.append(Annotation(len(word), len(v), "glue", j, i))
            word.extend(v)
        notes.append(Annotation(len(word), len(b), kind, j, i))
        word.extend(b)
        if len(word) != target:
            raise ConstructionError(f"step ({j}, {i}) reached length {len(word)}, expected {target}")
        if not single:
            q = aut.run(v + b, q)
        n_j = state.stages[j - 1].n
        if kind == "fixed" and i == n_j:
            checkpoints.append((j, 0, len(word)))
        if kind == "gamma" and i == (state.config.p + 1) * n_j:
            checkpoints.append((j, 1, len(word)))
        if max_length is not None and len(word) >= max_length:
            break
    return PnnSample(tuple(word), notes, choices, checkpoints)

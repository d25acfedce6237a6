"""Finite words, the shift, empirical block frequencies and the truncated weak-* distance.

A word is a tuple of small non-negative ints.  Every public entry point also
accepts the ASCII serialization (``"2103"`` for alphabets up to 10 letters,
``"12,0,11"`` otherwise) and normalizes it through :func:`as_word`.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence, Union

from .errors import DomainError

Word = tuple[int, ...]
WordLike = Union[Word, Sequence[int], str]

EMPTY: Word = ()


def as_word(w: WordLike) -> Word:
    if isinstance(w, tuple) and all(isinstance(a, int) for a in w):
        return w
    if isinstance(w, str):
        s = w.strip()
        if not s:
            return ()
        if "," in s:
            return tuple(int(t) for t in s.split(","))
        if not s.isdigit():
            raise DomainError(f"not a digit string: {w!r}")
        return tuple(int(c) for c in s)
    return tuple(int(a) for a in w)


def format_word(w: Iterable[int], alphabet_size: int = 10) -> str:
    """Serialize a word; digits are concatenated for alphabets of size <= 10."""
    w = tuple(w)
    if alphabet_size <= 10:
        return "".join(map(str, w))
    return ",".join(map(str, w))


def check_alphabet(w: Word, alphabet_size: int) -> None:
    for a in w:
        if not 0 <= a < alphabet_size:
            raise DomainError(f"letter {a} outside alphabet of size {alphabet_size}")


def all_words(alphabet_size: int, n: int) -> Iterable[Word]:
    """Every word of length ``n`` in lexicographic order."""
    return itertools.product(range(alphabet_size), repeat=n)


def shift(w: WordLike, k: int = 1) -> Word:
    w = as_word(w)
    if k < 0 or k > len(w):
        raise DomainError(f"cannot shift a word of length {len(w)} by {k}")
    return w[k:]


def truncate(w: WordLike, n: int) -> Word:
    w = as_word(w)
    if n > len(w):
        raise DomainError(f"cannot truncate a word of length {len(w)} to {n}")
    return w[:n]


def letter_counts(w: Iterable[int], alphabet_size: int) -> tuple[int, ...]:
    c = Counter(w)
    return tuple(c.get(a, 0) for a in range(alphabet_size))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Block statistics of a finite word, i.e. the cylinder values of T_n.

    ``block_counts[b]`` is the number of windows ``0 <= i < n`` with
    ``w[i:i+|b|] == b``; windows that overhang the end are not counted, so the
    counts of length-k blocks sum to ``n - k + 1``.  Frequencies divide by n.
    """

    block_counts: dict[Word, int]
    sample_length: int
    max_block_length: int
    alphabet_size: int
    exact: bool = field(default=True, repr=False)

    def frequency(self, b: WordLike) -> Fraction:
        b = as_word(b)
        if not b:
            return Fraction(1)
        if len(b) > self.max_block_length:
            raise DomainError(f"block length {len(b)} exceeds K={self.max_block_length}")
        return Fraction(self.block_counts.get(b, 0), self.sample_length)

    __call__ = frequency

    def support(self, k: int) -> list[Word]:
        return sorted(b for b in self.block_counts if len(b) == k)


def empirical(w: WordLike, max_block_length: int = 1, alphabet_size: int | None = None) -> EmpiricalMeasure:
    w = as_word(w)
    if not w:
        raise DomainError("empirical measure of the empty word")
    if max_block_length < 1:
        raise DomainError("max_block_length must be >= 1")
    if alphabet_size is None:
        alphabet_size = max(2, max(w) + 1)
    check_alphabet(w, alphabet_size)
    n = len(w)
    counts: Counter = Counter()
    for k in range(1, max_block_length + 1):
        for i in range(n - k + 1):
            counts[w[i:i + k]] += 1
    return EmpiricalMeasure(dict(counts), n, max_block_length, alphabet_size)


def block_frequency(w: WordLike, b: WordLike, n: int | None = None) -> Fraction:
    """P_b(w, n): frequency of ``b`` among the first ``n`` windows of ``w``."""
    w, b = as_word(w), as_word(b)
    if n is None:
        n = len(w)
    if n < 1 or n > len(w):
        raise DomainError(f"n={n} outside 1..{len(w)}")
    k = len(b)
    hits = sum(1 for i in range(n) if w[i:i + k] == b)
    return Fraction(hits, n)


def digit_frequency(w: WordLike, digit: int) -> Fraction:
    w = as_word(w)
    if not w:
        raise DomainError("digit frequency of the empty word")
    return Fraction(w.count(digit), len(w))


MeasureLike = Callable[[Word], Union[Fraction, float]]


def measure_distance(
    a: MeasureLike,
    b: MeasureLike,
    K: int = 4,
    alphabet_size: int | None = None,
    words: Callable[[int], Iterable[Word]] | None = None,
) -> Union[Fraction, float]:
    """Truncated weak-* distance sum_{n<=K} 2^-n sum_{|w|=n} |a[w] - b[w]|.

    The total-variation term at level n is realized as the L1 distance over
    length-n cylinders.  ``words(n)`` may restrict the sum to an admissible
    language; by default all of A^n is used (inadmissible cylinders carry zero
    mass under both arguments anyway).
    """
    if K < 1:
        raise DomainError("K must be >= 1")
    if alphabet_size is None:
        alphabet_size = getattr(a, "alphabet_size", None) or getattr(b, "alphabet_size", None)
        if alphabet_size is None:
            raise DomainError("alphabet_size is required for plain callables")
    total: Union[Fraction, float] = Fraction(0)
    for n in range(1, K + 1):
        level = sum(
            (abs(a(w) - b(w)) for w in (words(n) if words else all_words(alphabet_size, n))),
            Fraction(0),
        )
        total += Fraction(1, 2 ** n) * level if isinstance(level, Fraction) else level / 2 ** n
    return total

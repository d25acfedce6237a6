"""Gluing admissible words with bounded connectors.

Connectors are shortest paths in the language automaton, ties broken
lexicographically.  ``C`` is the largest shortest-path length over all
ordered state pairs.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache
from typing import Iterable, Sequence

from .beta import LanguageAutomaton
from .errors import DomainError, GluingError
from .words import Word, WordLike, as_word


def _bfs_paths(aut: LanguageAutomaton, source: int) -> dict[int, Word]:
    # visiting letters in increasing order makes the first path found to each
    # state the lexicographically smallest among the shortest ones
    paths = {source: ()}
    queue = deque([source])
    while queue:
        q = queue.popleft()
        for a in range(aut.alphabet_size):
            t = aut.delta[q][a]
            if t >= 0 and t not in paths:
                paths[t] = paths[q] + (a,)
                queue.append(t)
    return paths


class GluingTable:
    def __init__(self, automaton: LanguageAutomaton):
        self.automaton = automaton
        n = automaton.n_states
        self.paths: dict[tuple[int, int], Word] = {}
        for q in range(n):
            found = _bfs_paths(automaton, q)
            if len(found) != n:
                missing = sorted(set(range(n)) - set(found))
                raise GluingError(f"states {missing} unreachable from state {q}; no specification")
            for t, path in found.items():
                self.paths[q, t] = path
        self.C = max(len(p) for p in self.paths.values())
        self._connector = lru_cache(maxsize=None)(self._connector_uncached)

    def _connector_uncached(self, q: int, targets: frozenset[int]) -> Word:
        if not targets:
            raise DomainError("right word is not admissible from any state")
        return min((self.paths[q, t] for t in targets), key=lambda p: (len(p), p))

    def connector(self, q: int, targets: frozenset[int]) -> Word:
        """Shortest-then-lex word leading from state ``q`` into ``targets``."""
        return self._connector(q, frozenset(targets))

    def connector_for(self, q: int, b: Sequence[int]) -> Word:
        return self.connector(q, self.automaton.readable_from(b))

    def rows(self) -> Iterable[tuple[int, int, Word]]:
        for (q, t), p in sorted(self.paths.items()):
            yield q, t, p


def build_gluing_table(automaton: LanguageAutomaton) -> GluingTable:
    return GluingTable(automaton)


def glue(a: WordLike, b: WordLike, table: GluingTable) -> Word:
    """a v b with the deterministic connector v, |v| <= C."""
    a, b = as_word(a), as_word(b)
    aut = table.automaton
    q = aut.run(a)
    if q < 0:
        raise DomainError(f"left word {a} is not admissible")
    if aut.run(b) < 0:
        raise DomainError(f"right word {b} is not admissible")
    return a + table.connector_for(q, b) + b


def glue_chain(words: Sequence[WordLike], table: GluingTable) -> tuple[Word, list[int]]:
    """Left fold of :func:`glue`; also returns the connector length of each join."""
    aut = table.automaton
    out: list[int] = []
    lengths: list[int] = []
    q = aut.initial
    for k, w in enumerate(words):
        w = as_word(w)
        if aut.run(w) < 0:
            raise DomainError(f"word {w} is not admissible")
        if k == 0:
            v: Word = ()
        else:
            v = table.connector_for(q, w)
            lengths.append(len(v))
        out.extend(v)
        out.extend(w)
        q = aut.run(v + w, q)
    return tuple(out), lengths

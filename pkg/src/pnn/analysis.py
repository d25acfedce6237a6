"""Frequency traces, limit-point detection and the dimension bookkeeping.

The divergence test reads the trace at the construction's own checkpoints
(the end of each fixed part and the end of each stage); a finite trace cannot
certify divergence any other way.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np

from .construction import ConstructionState, PnnSample
from .errors import DomainError
from .words import Word, as_word


@dataclass
class FrequencyTrace:
    """m -> P_digit(w, m) for 1 <= m <= M, stored as running counts."""

    digit: int
    counts: np.ndarray
    checkpoints: list[tuple[int, int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.counts)

    def value(self, m: int) -> Fraction:
        if not 1 <= m <= len(self.counts):
            raise DomainError(f"m={m} outside 1..{len(self.counts)}")
        return Fraction(int(self.counts[m - 1]), m)

    def values(self) -> np.ndarray:
        return self.counts / np.arange(1, len(self.counts) + 1)

    def at_checkpoints(self, kind: int) -> list[tuple[int, int, float]]:
        """(stage, m, value) at l_{n_j}^(j) (kind 0) or l_0^(j+1) (kind 1)."""
        return [(j, m, float(self.value(m))) for j, k, m in self.checkpoints
                if k == kind and m <= len(self.counts)]


def frequency_trace(w, digit: int, checkpoints: Sequence[tuple[int, int, int]] = ()) -> FrequencyTrace:
    arr = np.frombuffer(bytes(as_word(w)), dtype=np.uint8) if not isinstance(w, np.ndarray) else w
    if len(arr) == 0:
        raise DomainError("trace of the empty word")
    counts = np.cumsum(arr == digit, dtype=np.int64)
    return FrequencyTrace(digit, counts, list(checkpoints))


@dataclass
class ScanResult:
    status: str
    estimates: list[float]
    oscillation: float
    final_value: float
    stage: Optional[int] = None

    @property
    def convergent(self) -> bool:
        return self.status == "convergent"


def limit_point_scan(trace: FrequencyTrace, tol: float = 0.05, final_fraction: float = 0.2,
                     min_length: int = 100) -> ScanResult:
    """Compare the trace at the last fixed-part end and the last stage end.

    convergent: the two estimates agree within ``tol`` and the final window
    oscillates by at most ``tol``; divergent: the estimates differ by more
    than ``tol``; otherwise inconclusive.  Without checkpoints only the
    oscillation test is available.
    """
    M = len(trace)
    if M < min_length:
        return ScanResult("inconclusive", [], math.nan, float(trace.value(M)) if M else math.nan)
    vals = trace.values()
    start = max(0, int(M * (1 - final_fraction)) - 1)
    window = vals[start:]
    osc = float(window.max() - window.min())
    final = float(vals[-1])
    fixed = trace.at_checkpoints(0)
    ends = trace.at_checkpoints(1)
    if fixed and ends:
        # pair the deepest stage that has both checkpoints
        stages = sorted({j for j, _, _ in fixed} & {j for j, _, _ in ends})
        if stages:
            j = stages[-1]
            a = next(v for s, _, v in fixed if s == j)
            b = next(v for s, _, v in ends if s == j)
            if abs(a - b) > tol:
                return ScanResult("divergent", [a, b], osc, final, j)
            status = "convergent" if osc <= tol else "inconclusive"
            return ScanResult(status, [a, b], osc, final, j)
    if osc <= tol:
        return ScanResult("convergent", [final], osc, final)
    return ScanResult("inconclusive", [final], osc, final)


# connector and checkpoint bookkeeping ------------------------------------------


def connector_bound(sample: PnnSample, state: ConstructionState) -> float:
    """max over Gamma blocks of sum|v_i|/m - kC/((n_j+k-1)j); <= 0 when the bound holds."""
    C = state.C
    worst = -math.inf
    per_stage: dict[int, int] = {}
    glue_so_far: dict[int, int] = {}
    pending = 0
    for a in sample.annotations:
        if a.kind == "glue":
            pending += a.length
            continue
        if a.kind == "gamma":
            k = per_stage.get(a.stage, 0) + 1
            per_stage[a.stage] = k
            g = glue_so_far.get(a.stage, 0) + pending
            glue_so_far[a.stage] = g
            m = a.offset + a.length
            n_j = state.stages[a.stage - 1].n
            worst = max(worst, g / m - k * C / ((n_j + k - 1) * a.stage))
        pending = 0
    return worst


def checkpoint_certificates(sample: PnnSample, state: ConstructionState) -> list[tuple[int, float, float]]:
    """(stage, |P_{j*}(w, l_{n_j}^(j)) - nu([j*])|, 2 rho_j) per fixed-part end."""
    jstar = state.tracked[1]
    target = float(state.nu((jstar,)))
    arr = np.frombuffer(bytes(sample.word), dtype=np.uint8)
    csum = np.cumsum(arr == jstar)
    out = []
    for j, kind, m in sample.checkpoints:
        if kind == 0:
            out.append((j, abs(csum[m - 1] / m - target), 2 * float(state.stages[j - 1].rho)))
    return out


def length_ratios(state: ConstructionState) -> list[tuple[int, float, float]]:
    """(j, l_{n_j}^(j) / l_0^(j+1), p n_j j / l_0^(j+1)) per built stage."""
    p = state.config.p
    out = []
    for rec in state.stages:
        end = state.length(rec.j, (p + 1) * rec.n)
        out.append((rec.j, state.length(rec.j, rec.n) / end, p * rec.n * rec.j / end))
    return out


# dimension ledger ---------------------------------------------------------------


class DimensionLedger:
    """y_n, E_n and |B_n| along the flat index n = (p+1) sum_{k<j} n_k + i."""

    def __init__(self, state: ConstructionState):
        self.state = state
        self.p = state.config.p
        with mpmath.workdps(40):
            self._stage_terms = []
            logC = mpmath.log(state.C_tilde)
            for rec in state.stages:
                _, g = state._gamma_growth(rec.j)
                self._stage_terms.append(g - logC)

    def split(self, n: int) -> tuple[int, int]:
        if n == 0:
            return 1, 0
        return self.state.split_index(n)

    def index(self, j: int, i: int) -> int:
        return self.state.flat_index(j, i)

    @property
    def size(self) -> int:
        return self.state.max_flat

    def log_y(self, n: int) -> float:
        return self.state.log_y_flat(n)

    def log_card(self, n: int) -> float:
        return float(self.state.log_card(n))

    def log_E(self, n: int) -> float:
        j, i = self.split(n)
        with mpmath.workdps(40):
            total = mpmath.mpf(0)
            for rec, term in zip(self.state.stages[:j - 1], self._stage_terms):
                total += self.p * rec.n * term
            extra = max(0, i - self.state.stages[j - 1].n)
            total += extra * self._stage_terms[j - 1]
            return float(total)

    def rows(self, ns: Sequence[int] | None = None) -> list[dict]:
        if ns is None:
            ns = self.checkpoint_indices()
        out = []
        for n in ns:
            j, i = self.split(n)
            out.append({"n": n, "j": j, "i": i, "logY": self.log_y(n), "logE": self.log_E(n),
                        "logCard": self.log_card(n), "length": self.state.flat_length(n)})
        return out

    def checkpoint_indices(self) -> list[int]:
        """Segment endpoints: every quantity is linear in n between them."""
        out = {0}
        acc = 0
        for seg in self.state.segments:
            out.add(acc + 1)
            acc += seg.k
            out.add(acc)
        return sorted(out)


def dimension_ledger(state: ConstructionState) -> DimensionLedger:
    return DimensionLedger(state)


@dataclass
class DimensionEstimate:
    s_star: float
    target: float
    trend: list[tuple[int, int, float]]


def dimension_estimate(state: ConstructionState, depth: int | None = None) -> DimensionEstimate:
    """s* = log|B_n| / (-log y_n) at each stage end up to ``depth``."""
    depth = depth or len(state.stages)
    if depth < 1 or depth > len(state.stages):
        raise DomainError(f"depth must lie in 1..{len(state.stages)}")
    trend = []
    for j in range(1, depth + 1):
        n = state.stage_end(j)
        ly = state.log_y_flat(n)
        trend.append((j, n, float(state.log_card(n)) / -ly if ly else 0.0))
    p = state.config.p
    return DimensionEstimate(trend[-1][2], p / (p + 1), trend)


# covers ---------------------------------------------------------------------------

# single-block covers meet the bound with equality; allow for rounding in the logs
LOG_TOL = 1e-12


def cover_sum(cover: Sequence[Word], s: float, nu) -> float:
    if not 0 < s <= 1:
        raise DomainError("s must lie in (0, 1]")
    return math.fsum(float(nu(w)) ** s for w in cover)


@dataclass
class CoverCheck:
    N: int
    total: float
    witness: Optional[int]
    margin: float
    holds: bool


def explicit_indices(state: ConstructionState) -> list[int]:
    return sorted(state.explicit_sets)


def check_cover(state: ConstructionState, cover: Sequence[Word], s: float) -> CoverCheck:
    """Find n >= N with sum nu([w])^s >= E_n y_{n+1}^s for a cover of the deepest listed set."""
    cover = [as_word(w) for w in cover]
    if not cover:
        raise DomainError("empty cover")
    deepest = max(explicit_indices(state))
    cover_set = set(cover)
    lengths = sorted({len(w) for w in cover})
    for b in state.explicit_sets[deepest].words():
        if not any(b[:L] in cover_set for L in lengths if L <= len(b)):
            raise DomainError(f"cover misses block {b}")
    ledger = DimensionLedger(state)
    nu = state.nu
    top = max(float(nu(w)) for w in cover)
    N = 0
    while N + 1 <= state.max_flat and math.exp(ledger.log_y(N + 1)) > top:
        N += 1
    total = cover_sum(cover, s, nu)
    log_total = math.log(total)
    best, best_margin = None, -math.inf
    for n in range(N, state.max_flat):
        margin = log_total - (ledger.log_E(n) + s * ledger.log_y(n + 1))
        if margin > best_margin:
            best, best_margin = n, margin
        if margin >= -LOG_TOL:
            return CoverCheck(N, total, n, margin, True)
    return CoverCheck(N, total, best, best_margin, False)


def random_cover(state: ConstructionState, rng: random.Random, refine: float = 0.5,
                 base: int | None = None) -> list[Word]:
    """A prefix-refinement cover: start from some listed B_n and split words at random.

    A word of B_n is replaced by all of its extensions in B_{n+1}, which
    keeps the family a cover of every deeper set.
    """
    idx = explicit_indices(state)
    top = idx[-1]
    if base is None:
        base = rng.choice(idx[:-1] or idx)
    children: dict[int, dict[Word, list[Word]]] = {}

    def kids(n: int, w: Word) -> list[Word]:
        if n not in children:
            table: dict[Word, list[Word]] = {}
            parent_len = state.explicit_sets[n].length
            for c in state.explicit_sets[n + 1].words():
                table.setdefault(c[:parent_len], []).append(c)
            children[n] = table
        return children[n].get(w, [])

    out: list[Word] = []
    stack = [(base, w) for w in reversed(state.explicit_sets[base].words())]
    while stack:
        n, w = stack.pop()
        if n < top and rng.random() < refine:
            stack.extend((n + 1, c) for c in reversed(kids(n, w)))
        else:
            out.append(w)
    return out

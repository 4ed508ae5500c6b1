"""EM-trained monotone letter-to-phoneme alignment.

Each letter is aligned to a *chunk* of zero, one or two consecutive phonemes.
Chunks are tuples: ``()`` is the null phoneme, ``("K",)`` a single phoneme
and ``("AH", "L")`` a compound. The model is a per-letter distribution over
chunks, trained by forward-backward EM over the alignment lattice whose
nodes are ``(letters consumed, phonemes consumed)``.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .lexicon import COMPOUND_SEP, NULL, LexiconEntry, SymbolTable

log = logging.getLogger(__name__)

Chunk = tuple[str, ...]
SMOOTHING_FLOOR = 1e-12
# Viterbi tie preference: single, compound, null
_CHUNK_ORDER = (1, 2, 0)


class AlignmentError(ValueError):
    pass


class EmptyCorpusError(AlignmentError):
    pass


def chunk_symbol(chunk: Chunk) -> str:
    return COMPOUND_SEP.join(chunk) if chunk else NULL


def symbol_chunk(symbol: str) -> Chunk:
    return () if symbol == NULL else tuple(symbol.split(COMPOUND_SEP))


@dataclass(frozen=True)
class AlignedPair:
    letters: tuple[str, ...]
    slots: tuple[Chunk, ...]

    def __post_init__(self):
        if len(self.letters) != len(self.slots):
            raise ValueError("letters and slots differ in length")
        if any(len(s) > 2 for s in self.slots):
            raise ValueError("a slot holds at most two phonemes")

    @property
    def phonemes(self) -> tuple[str, ...]:
        return tuple(ph for s in self.slots for ph in s)

    @property
    def slot_symbols(self) -> list[str]:
        return [chunk_symbol(s) for s in self.slots]

    def to_line(self) -> str:
        return "".join(self.letters) + "\t" + " ".join(self.slot_symbols)

    @classmethod
    def from_line(cls, line: str) -> "AlignedPair":
        letters, slots = line.rstrip("\n").split("\t")
        return cls(tuple(letters), tuple(symbol_chunk(s) for s in slots.split(" ")))


def feasible(n_letters: int, n_phones: int) -> bool:
    return n_letters > 0 and n_phones <= 2 * n_letters


def _steps(word: Sequence[str], pron: Sequence[str], i: int, j: int):
    """Chunks available to letter ``i`` when ``j`` phonemes are consumed."""
    for k in _CHUNK_ORDER:
        if j + k <= len(pron):
            yield k, tuple(pron[j : j + k])


def _reachable(T: int, P: int, i: int, j: int) -> bool:
    # remaining letters must absorb remaining phonemes at 0..2 per letter
    return 0 <= P - j <= 2 * (T - i)


class ChunkProbTable:
    """Per-letter probability distribution over phoneme chunks."""

    def __init__(self, probs: dict[str, dict[Chunk, float]]):
        self.probs = probs

    def prob(self, letter: str, chunk: Chunk) -> float:
        return self.probs.get(letter, {}).get(chunk, 0.0)

    def row_sums(self) -> dict[str, float]:
        return {letter: math.fsum(row.values()) for letter, row in self.probs.items()}

    def __eq__(self, other):
        return isinstance(other, ChunkProbTable) and self.probs == other.probs


def _feasible_chunks(word, pron):
    T, P = len(word), len(pron)
    for i in range(T):
        for j in range(P + 1):
            if not _reachable(T, P, i, j) or j > 2 * i:
                continue
            for k, chunk in _steps(word, pron, i, j):
                if _reachable(T, P, i + 1, j + k):
                    yield word[i], chunk


def _forward_backward(word, pron, table: ChunkProbTable, counts) -> float:
    """Add expected chunk counts for one pair into ``counts``; return log p(pair)."""
    T, P = len(word), len(pron)
    alpha = [[0.0] * (P + 1) for _ in range(T + 1)]
    beta = [[0.0] * (P + 1) for _ in range(T + 1)]
    alpha[0][0] = 1.0
    for i in range(T):
        row = table.probs.get(word[i], {})
        for j in range(P + 1):
            a = alpha[i][j]
            if a == 0.0:
                continue
            for k, chunk in _steps(word, pron, i, j):
                p = row.get(chunk, 0.0)
                if p:
                    alpha[i + 1][j + k] += a * p
    beta[T][P] = 1.0
    for i in range(T - 1, -1, -1):
        row = table.probs.get(word[i], {})
        for j in range(P + 1):
            acc = 0.0
            for k, chunk in _steps(word, pron, i, j):
                p = row.get(chunk, 0.0)
                if p:
                    acc += p * beta[i + 1][j + k]
            beta[i][j] = acc
    total = alpha[T][P]
    if total <= 0.0:
        return -math.inf
    for i in range(T):
        row = table.probs.get(word[i], {})
        for j in range(P + 1):
            a = alpha[i][j]
            if a == 0.0:
                continue
            for k, chunk in _steps(word, pron, i, j):
                p = row.get(chunk, 0.0)
                if p:
                    post = a * p * beta[i + 1][j + k] / total
                    if post:
                        counts[word[i]][chunk] += post
    return math.log(total)


def training_pairs(entries: Iterable[LexiconEntry]) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    return [(e.letters, p) for e in entries for p in e.pronunciations]


@dataclass
class EMResult:
    table: ChunkProbTable
    log_likelihoods: list[float]
    skipped: list[tuple[str, tuple[str, ...]]]


def em_train_aligner(entries: Iterable[LexiconEntry], max_iters: int = 20, tol: float = 0.0) -> EMResult:
    """Fit the chunk table by EM.

    Pairs with more than two phonemes per letter cannot be aligned and are
    returned in ``skipped``. ``log_likelihoods[n]`` is the corpus
    log-likelihood under the table *before* update ``n + 1``; the final entry
    scores the returned table. Iteration stops after ``max_iters`` updates or
    once an update gains less than ``tol``.
    """
    pairs, skipped = [], []
    for word, pron in training_pairs(entries):
        if feasible(len(word), len(pron)):
            pairs.append((word, pron))
        else:
            skipped.append(("".join(word), pron))
    if not pairs:
        raise EmptyCorpusError("no feasible (word, pronunciation) pairs to align")
    if skipped:
        log.info("skipping %d infeasible pairs", len(skipped))

    support: dict[str, set[Chunk]] = defaultdict(set)
    for word, pron in pairs:
        for letter, chunk in _feasible_chunks(word, pron):
            support[letter].add(chunk)
    table = ChunkProbTable(
        {
            letter: {c: 1.0 / len(chunks) for c in sorted(chunks)}
            for letter, chunks in sorted(support.items())
        }
    )

    history: list[float] = []
    for it in range(max_iters + 1):
        counts: dict[str, dict[Chunk, float]] = defaultdict(lambda: defaultdict(float))
        ll = math.fsum(_forward_backward(w, p, table, counts) for w, p in pairs)
        history.append(ll)
        log.debug("EM iteration %d: log-likelihood %.6f", it, ll)
        if it == max_iters or (it > 0 and ll - history[-2] < tol):
            break
        new = {}
        for letter in sorted(counts):
            row = counts[letter]
            z = math.fsum(row.values())
            new[letter] = {c: row[c] / z for c in sorted(row)}
        table = ChunkProbTable(new)
    return EMResult(table, history, skipped)


def viterbi_align(
    word: Sequence[str], pron: Sequence[str], table: ChunkProbTable, smoothing: bool = True
) -> AlignedPair:
    """Most probable monotone alignment of ``word`` to ``pron``.

    With ``smoothing`` every chunk gets an additive floor so any feasible
    path scores above zero. Ties prefer single phonemes, then compounds, then
    nulls, deciding at the earliest letter where paths diverge.
    """
    word, pron = tuple(word), tuple(pron)
    T, P = len(word), len(pron)
    if not feasible(T, P):
        raise AlignmentError(f"cannot align {''.join(word)!r} ({T} letters) to {P} phonemes")
    floor = SMOOTHING_FLOOR if smoothing else 0.0
    NEG = -math.inf
    # best log-prob of completing the path from node (i, j); computed
    # right-to-left so that forward tracing resolves ties at the earliest letter
    score = [[NEG] * (P + 1) for _ in range(T + 1)]
    choice = [[None] * (P + 1) for _ in range(T + 1)]
    score[T][P] = 0.0
    for i in range(T - 1, -1, -1):
        row = table.probs.get(word[i], {})
        for j in range(P + 1):
            best, arg = NEG, None
            for k, chunk in _steps(word, pron, i, j):
                rest = score[i + 1][j + k]
                p = row.get(chunk, 0.0) + floor
                if rest == NEG or p <= 0.0:
                    continue
                s = math.log(p) + rest
                if s > best:
                    best, arg = s, k
            score[i][j], choice[i][j] = best, arg
    if score[0][0] == NEG:
        raise AlignmentError(f"no alignment of {''.join(word)!r} with nonzero probability")
    slots, j = [], 0
    for i in range(T):
        k = choice[i][j]
        slots.append(pron[j : j + k])
        j += k
    return AlignedPair(word, tuple(slots))


def alignment_log_prob(pair: AlignedPair, table: ChunkProbTable, smoothing: bool = True) -> float:
    floor = SMOOTHING_FLOOR if smoothing else 0.0
    total = 0.0
    for letter, chunk in zip(pair.letters, pair.slots):
        p = table.prob(letter, chunk) + floor
        if p <= 0.0:
            return -math.inf
        total += math.log(p)
    return total


def enumerate_alignments(word: Sequence[str], pron: Sequence[str]):
    """Yield every monotone alignment (exhaustive; for testing small words)."""
    word, pron = tuple(word), tuple(pron)

    def rec(i, j, acc):
        if i == len(word):
            if j == len(pron):
                yield AlignedPair(word, tuple(acc))
            return
        for k in (0, 1, 2):
            if j + k <= len(pron):
                yield from rec(i + 1, j + k, acc + [pron[j : j + k]])

    yield from rec(0, 0, [])


@dataclass
class AlignmentReport:
    aligned: int = 0
    failures: list[tuple[str, tuple[str, ...], str]] = None

    def __post_init__(self):
        if self.failures is None:
            self.failures = []


def align_corpus(
    entries: Iterable[LexiconEntry],
    table: ChunkProbTable,
    phonemes: SymbolTable | None = None,
) -> tuple[list[AlignedPair], AlignmentReport, SymbolTable | None]:
    """Viterbi-align every (word, pronunciation) pair.

    Returns the alignments, a failure report, and ``phonemes`` extended with
    every compound symbol used (None when no table was given).
    """
    out, report = [], AlignmentReport()
    for word, pron in training_pairs(entries):
        try:
            out.append(viterbi_align(word, pron, table))
        except AlignmentError as exc:
            report.failures.append(("".join(word), pron, str(exc)))
    report.aligned = len(out)
    if phonemes is not None:
        compounds = {chunk_symbol(s) for a in out for s in a.slots if len(s) == 2}
        phonemes = phonemes.extended(compounds)
    return out, report, phonemes


def write_aligned(pairs: Iterable[AlignedPair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(pair.to_line() + "\n")


def read_aligned(path) -> list[AlignedPair]:
    with open(path, encoding="utf-8") as fh:
        return [AlignedPair.from_line(line) for line in fh if line.strip()]

"""Phoneme and word error rates against multiple reference pronunciations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .lexicon import LexiconEntry


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class EditResult:
    distance: int
    substitutions: int
    insertions: int
    deletions: int


def edit_distance(hyp: Sequence, ref: Sequence) -> EditResult:
    """Levenshtein distance from ``ref`` to ``hyp`` with unit costs.

    Insertions are extra hypothesis symbols, deletions are reference symbols
    the hypothesis misses.
    """
    n, m = len(hyp), len(ref)
    # d[i][j]: distance between hyp[:i] and ref[:j]
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = d[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1])
            d[i][j] = min(sub, d[i - 1][j] + 1, d[i][j - 1] + 1)
    subs = ins = dels = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]):
            subs += hyp[i - 1] != ref[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            ins += 1
            i -= 1
        else:
            dels += 1
            j -= 1
    return EditResult(d[n][m], subs, ins, dels)


@dataclass(frozen=True)
class WordScore:
    edits: int
    reference: tuple[str, ...]
    error: bool


def score_word(hyp: Sequence[str], references: Iterable[Sequence[str]]) -> WordScore:
    """Score against the closest reference (ties: shortest, then lexicographic)."""
    refs = [tuple(r) for r in references]
    if not refs:
        raise ValueError("score_word needs at least one reference")
    scored = sorted((edit_distance(hyp, r).distance, len(r), r) for r in refs)
    edits, _, ref = scored[0]
    return WordScore(edits, ref, edits > 0)


@dataclass(frozen=True)
class WordRecord:
    word: str
    hypothesis: tuple[str, ...]
    reference: tuple[str, ...]
    edits: int

    def tsv(self) -> str:
        return f"{self.word}\t{' '.join(self.hypothesis)}\t{' '.join(self.reference)}\t{self.edits}"


@dataclass
class EvalReport:
    records: list[WordRecord] = field(default_factory=list)
    phoneme_edits: int = 0
    reference_phonemes: int = 0
    word_errors: int = 0
    words: int = 0

    @property
    def per(self) -> float:
        return 100.0 * self.phoneme_edits / self.reference_phonemes if self.reference_phonemes else 0.0

    @property
    def wer(self) -> float:
        return 100.0 * self.word_errors / self.words if self.words else 0.0

    def summary(self) -> str:
        return f"PER {self.per:.2f}% WER {self.wer:.2f}%"


def evaluate(
    hypotheses: Mapping[str, Sequence[str]] | Iterable[tuple[str, Sequence[str]]],
    entries: Sequence[LexiconEntry],
) -> EvalReport:
    """Aggregate PER/WER over ``entries`` using 1-best ``hypotheses``.

    ``hypotheses`` may be a mapping or ``(word, phonemes)`` pairs; a pair list
    naming a word twice is rejected, as is any entry without a hypothesis.
    """
    pairs = hypotheses.items() if isinstance(hypotheses, Mapping) else hypotheses
    hyps: dict[str, tuple[str, ...]] = {}
    for word, seq in pairs:
        if word in hyps:
            raise CoverageError(f"duplicate hypothesis for {word!r}")
        hyps[word] = tuple(seq)
    report = EvalReport()
    for entry in entries:
        if entry.word not in hyps:
            raise CoverageError(f"no hypothesis for test word {entry.word!r}")
        hyp = hyps[entry.word]
        s = score_word(hyp, entry.pronunciations)
        report.records.append(WordRecord(entry.word, hyp, s.reference, s.edits))
        report.phoneme_edits += s.edits
        report.reference_phonemes += len(s.reference)
        report.word_errors += s.error
        report.words += 1
    return report


def write_report_tsv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in report.records:
            fh.write(rec.tsv() + "\n")

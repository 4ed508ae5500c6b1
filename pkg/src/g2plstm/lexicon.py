"""Pronunciation lexicons, symbol tables and train/valid/test partitions."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
OUT_BOS = "<os>"
OUT_EOS = "</os>"
NULL = "∅"
COMPOUND_SEP = ":"

_VARIANT = re.compile(r"^(.+)\((\d+)\)$")
_CMU_PHONE = re.compile(r"^[A-Za-z]+[0-9]?$")
_STRESS = re.compile(r"[0-9]+$")


class LexiconParseError(ValueError):
    def __init__(self, lineno: int, message: str, source: str | None = None):
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{lineno}: {message}")
        self.lineno = lineno


class VocabularyError(KeyError):
    def __str__(self):
        return str(self.args[0])


class PartitionConflictError(ValueError):
    def __init__(self, word: str, first: str, second: str):
        super().__init__(f"word {word!r} listed in both {first} and {second}")
        self.word = word


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    pronunciations: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.word:
            raise ValueError("empty word")
        if not self.pronunciations or any(not p for p in self.pronunciations):
            raise ValueError(f"{self.word}: empty pronunciation")
        if len(set(self.pronunciations)) != len(self.pronunciations):
            raise ValueError(f"{self.word}: duplicate pronunciations")

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(self.word)


def parse_lexicon(
    lines: Iterable[str],
    format: str = "cmudict",
    strip_stress: bool = True,
    source: str | None = None,
) -> list[LexiconEntry]:
    """Parse CMUDict-style or tab-separated lexicon lines.

    Variants of one headword (``READ``, ``READ(2)``) are merged in order of
    first appearance; repeated identical pronunciations collapse.
    """
    if format not in ("cmudict", "tabular"):
        raise ValueError(f"unknown lexicon format {format!r}")
    prons: dict[str, list[tuple[str, ...]]] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith(";;;"):
            continue
        if format == "cmudict":
            line = line.split(" #", 1)[0]
            parts = line.split()
            head, phones = parts[0], parts[1:]
            m = _VARIANT.match(head)
            if m:
                head = m.group(1)
            elif "(" in head or ")" in head:
                raise LexiconParseError(lineno, f"malformed variant marker in {head!r}", source)
            for ph in phones:
                if not _CMU_PHONE.match(ph):
                    raise LexiconParseError(lineno, f"malformed phoneme {ph!r}", source)
        else:
            if line.count("\t") != 1:
                raise LexiconParseError(lineno, "expected exactly one tab separator", source)
            head, rest = line.split("\t")
            head = head.strip()
            phones = rest.split()
        if not head:
            raise LexiconParseError(lineno, "empty word", source)
        if not phones:
            raise LexiconParseError(lineno, f"empty pronunciation for {head!r}", source)
        if strip_stress:
            phones = [_STRESS.sub("", ph) for ph in phones]
            if any(not ph for ph in phones):
                raise LexiconParseError(lineno, "phoneme reduced to nothing by stress stripping", source)
        variants = prons.setdefault(head.upper(), [])
        pron = tuple(phones)
        if pron not in variants:
            variants.append(pron)
    return [LexiconEntry(w, tuple(v)) for w, v in prons.items()]


def read_lexicon(path, format: str = "cmudict", strip_stress: bool = True) -> list[LexiconEntry]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_lexicon(fh, format, strip_stress, source=str(path))


def serialize_lexicon(entries: Iterable[LexiconEntry]) -> list[str]:
    """Canonical tabular form, one line per pronunciation variant."""
    return [f"{e.word}\t{' '.join(p)}" for e in entries for p in e.pronunciations]


def write_lexicon(entries: Iterable[LexiconEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in serialize_lexicon(entries):
            fh.write(line + "\n")


class SymbolTable:
    """Dense symbol <-> index mapping with reserved symbols up front.

    Letter tables reserve ``<s>`` = 0 and ``</s>`` = 1. Phoneme tables reserve
    ``<os>`` = 0, ``</os>`` = 1 and the null phoneme ``∅`` = 2.
    """

    RESERVED = {"letter": (BOS, EOS), "phoneme": (OUT_BOS, OUT_EOS, NULL)}

    def __init__(self, kind: str, symbols: Sequence[str]):
        if kind not in self.RESERVED:
            raise ValueError(f"unknown table kind {kind!r}")
        reserved = self.RESERVED[kind]
        if tuple(symbols[: len(reserved)]) != reserved:
            raise ValueError(f"{kind} table must start with {reserved}")
        if len(set(symbols)) != len(symbols) or any(not s for s in symbols):
            raise ValueError("symbols must be distinct and non-empty")
        self.kind = kind
        self.symbols: tuple[str, ...] = tuple(symbols)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_observed(cls, kind: str, observed: Iterable[str]) -> "SymbolTable":
        reserved = cls.RESERVED[kind]
        rest = sorted(set(observed) - set(reserved))
        return cls(kind, list(reserved) + rest)

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, symbol):
        return symbol in self._index

    def __eq__(self, other):
        return isinstance(other, SymbolTable) and (self.kind, self.symbols) == (other.kind, other.symbols)

    def __repr__(self):
        return f"SymbolTable({self.kind!r}, {list(self.symbols)!r})"

    def index_of(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise VocabularyError(f"unknown {self.kind} symbol {symbol!r}") from None

    def lookup(self, index: int) -> str:
        return self.symbols[index]

    def encode(self, symbols: Iterable[str]) -> list[int]:
        return [self.index_of(s) for s in symbols]

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.symbols[i] for i in indices]

    def extended(self, new_symbols: Iterable[str]) -> "SymbolTable":
        """Copy with unseen ``new_symbols`` appended in sorted order."""
        extra = sorted(set(new_symbols) - set(self.symbols))
        return SymbolTable(self.kind, list(self.symbols) + extra)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(s + "\n" for s in self.symbols))

    @classmethod
    def load(cls, path, kind: str) -> "SymbolTable":
        with open(path, encoding="utf-8") as fh:
            return cls(kind, [line.rstrip("\n") for line in fh if line.strip()])


def build_symbol_tables(entries: Sequence[LexiconEntry]) -> tuple[SymbolTable, SymbolTable]:
    if not entries:
        raise ValueError("cannot build symbol tables from an empty lexicon")
    letters = {ch for e in entries for ch in e.word}
    phones = {ph for e in entries for p in e.pronunciations for ph in p}
    return SymbolTable.from_observed("letter", letters), SymbolTable.from_observed("phoneme", phones)


@dataclass
class DatasetSplit:
    train: list[LexiconEntry]
    validation: list[LexiconEntry]
    test: list[LexiconEntry]

    def counts(self) -> dict[str, int]:
        return {"train": len(self.train), "validation": len(self.validation), "test": len(self.test)}


@dataclass
class SplitReport:
    counts: dict[str, int]
    unlisted: list[str] = field(default_factory=list)
    missing: dict[str, list[str]] = field(default_factory=dict)


def read_word_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip().upper() for line in fh if line.strip()]


def load_split(
    entries: Sequence[LexiconEntry],
    train: Iterable[str] = (),
    validation: Iterable[str] = (),
    test: Iterable[str] = (),
) -> tuple[DatasetSplit, SplitReport]:
    """Route entries to partitions by headword.

    Listed words absent from the lexicon are reported, not fatal. A word listed
    in two partitions raises :class:`PartitionConflictError`.
    """
    owner: dict[str, str] = {}
    listing = {"train": train, "validation": validation, "test": test}
    for part, words in listing.items():
        for w in words:
            w = w.upper()
            if w in owner and owner[w] != part:
                raise PartitionConflictError(w, owner[w], part)
            owner[w] = part
    by_word = {e.word: e for e in entries}
    parts: dict[str, list[LexiconEntry]] = {"train": [], "validation": [], "test": []}
    unlisted = []
    for e in entries:
        part = owner.get(e.word)
        if part is None:
            unlisted.append(e.word)
        else:
            parts[part].append(e)
    missing: dict[str, list[str]] = {}
    for w, part in owner.items():
        if w not in by_word:
            missing.setdefault(part, []).append(w)
    if missing:
        log.warning("%d listed words are not in the lexicon", sum(map(len, missing.values())))
    split = DatasetSplit(parts["train"], parts["validation"], parts["test"])
    return split, SplitReport(split.counts(), unlisted, missing)

"""Beam search over the trained models.

Pruning keeps every extension whose log-likelihood lies within ``band`` of the
best extension at the same step, then caps the survivors at ``max_beam``.
Equal scores are ordered by the symbol-index sequence so results never depend
on hash or sort stability details.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aligner import symbol_chunk
from .lexicon import NULL, OUT_BOS, OUT_EOS
from .models.architectures import PHONE_BOS, PHONE_EOS, G2PModel
from .nn import LstmState

log = logging.getLogger(__name__)


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class BeamConfig:
    band: float = 1.0
    max_beam: int = 100
    max_length: int | None = None  # enc-dec only; default 4 * letters + 5

    def __post_init__(self):
        if self.band < 0 or self.max_beam < 1 or (self.max_length is not None and self.max_length < 1):
            raise ValueError(f"invalid beam settings {self}")


@dataclass
class Hypothesis:
    """A (possibly partial) output sequence.

    ``symbols`` are raw output-table indices as emitted, including boundary
    symbols; ``state`` is the per-layer recurrent state after the last step.
    """

    symbols: tuple[int, ...]
    log_likelihood: float
    state: list[LstmState] | None = None
    finished: bool = False


@dataclass(frozen=True)
class Result:
    phonemes: tuple[str, ...]
    log_likelihood: float
    raw: tuple[str, ...]


def postprocess(raw: Sequence[str]) -> tuple[str, ...]:
    """Drop boundary and null symbols and split compounds into phonemes."""
    out = []
    for sym in raw:
        if sym in (OUT_BOS, OUT_EOS, NULL):
            continue
        out.extend(symbol_chunk(sym))
    return tuple(out)


def _prune(hyps, logp, band, max_beam):
    """Expand ``hyps`` by every symbol and prune. Returns (parent, symbol, score) arrays."""
    scores = np.array([h.log_likelihood for h in hyps])[:, None] + logp
    best = scores.max()
    parent, sym = np.nonzero(scores >= best - band)
    cand = scores[parent, sym]
    # rank parents lexicographically by symbol sequence so (parent rank, sym)
    # orders candidates by their full index sequence
    rank = np.empty(len(hyps), dtype=np.int64)
    rank[sorted(range(len(hyps)), key=lambda i: hyps[i].symbols)] = np.arange(len(hyps))
    order = np.lexsort((sym, rank[parent], -cand))[:max_beam]
    return parent[order], sym[order], cand[order]


def beam_search(model: G2PModel, letters: Sequence[str], beam: BeamConfig = BeamConfig(),
                n_best: int = 1) -> list[Hypothesis]:
    """Raw beam search; returns finished hypotheses, best first."""
    letter_ids = model.encode_letters(letters)
    if len(letter_ids) == 0:
        raise DecodeError("cannot decode an empty word")
    ctx = model.start(letter_ids)
    enc_dec = model.architecture == "enc-dec"
    if enc_dec:
        limit = beam.max_length or 4 * len(letter_ids) + 5
    else:
        limit = ctx["n"]
    live = [Hypothesis((), 0.0, model.initial_states(ctx))]
    finished: list[Hypothesis] = []
    for t in range(limit):
        prev = np.array([h.symbols[-1] if h.symbols else PHONE_BOS for h in live])
        states = live[0].state if len(live) == 1 else [
            LstmState(np.concatenate([h.state[k].h for h in live]),
                      np.concatenate([h.state[k].c for h in live]))
            for k in range(len(live[0].state))
        ]
        logp, new_states = model.step(ctx, t, prev, states)
        parent, sym, score = _prune(live, logp, beam.band, beam.max_beam)
        if len(parent) == 0:
            raise DecodeError("beam emptied (internal error)")
        survivors = []
        for p, s, sc in zip(parent.tolist(), sym.tolist(), score.tolist()):
            state = [LstmState(st.h[p : p + 1], st.c[p : p + 1]) for st in new_states]
            hyp = Hypothesis(live[p].symbols + (s,), sc, state)
            if enc_dec and s == PHONE_EOS:
                hyp.finished = True
                finished.append(hyp)
            else:
                survivors.append(hyp)
        live = survivors
        if not live:
            break
        if enc_dec and len(finished) >= n_best:
            cutoff = sorted(h.log_likelihood for h in finished)[-n_best]
            if max(h.log_likelihood for h in live) < cutoff:
                break
    if not enc_dec:
        for h in live:
            h.finished = True
        finished = live
    elif not finished:
        # length cap reached before any hypothesis ended; return truncated ones
        log.warning("no hypothesis reached </os> within %d steps for %s", limit, "".join(letters))
        finished = live
    finished.sort(key=lambda h: (-h.log_likelihood, h.symbols))
    return finished[:n_best]


def beam_decode(model: G2PModel, letters: Sequence[str], beam: BeamConfig = BeamConfig(),
                n_best: int = 1) -> list[Result]:
    """Decode one word into a ranked n-best list of pronunciations."""
    out = []
    for h in beam_search(model, letters, beam, n_best):
        raw = tuple(model.phonemes.decode(h.symbols))
        out.append(Result(postprocess(raw), h.log_likelihood, raw))
    return out


def greedy_decode(model: G2PModel, letters: Sequence[str], max_length: int | None = None) -> Hypothesis:
    """Argmax at every step (lowest index on ties)."""
    letter_ids = model.encode_letters(letters)
    ctx = model.start(letter_ids)
    enc_dec = model.architecture == "enc-dec"
    limit = (max_length or 4 * len(letter_ids) + 5) if enc_dec else ctx["n"]
    states = model.initial_states(ctx)
    prev, symbols, total = PHONE_BOS, [], 0.0
    for t in range(limit):
        logp, states = model.step(ctx, t, np.array([prev]), states)
        prev = int(np.argmax(logp[0]))
        symbols.append(prev)
        total += float(logp[0, prev])
        if enc_dec and prev == PHONE_EOS:
            break
    return Hypothesis(tuple(symbols), total, states, True)


def score_sequence(model: G2PModel, letters: Sequence[str], raw_symbols: Sequence[str]) -> float:
    """Log-likelihood of a raw output sequence.

    Uses the batched teacher-forced forward pass whenever the sequence has the
    framing that pass assumes; otherwise forces the sequence step by step.
    """
    letter_ids = model.encode_letters(letters)
    ids = np.array(model.phonemes.encode(raw_symbols), dtype=np.int64)
    if model.architecture == "enc-dec":
        framed = len(ids) > 0 and ids[-1] == PHONE_EOS
        example = (letter_ids, ids[:-1])
    else:
        if len(ids) != len(letter_ids) + 2:
            raise ValueError("alignment-model sequences have T + 2 symbols")
        framed = ids[0] == PHONE_BOS and ids[-1] == PHONE_EOS
        example = (letter_ids, ids[1:-1])
    if framed:
        logp, _ = model.forward_teacher_forced(example)
        return float(np.sum(logp[np.arange(len(ids)), ids]))
    ctx = model.start(letter_ids)
    states = model.initial_states(ctx)
    prev, total = PHONE_BOS, 0.0
    for t, s in enumerate(ids):
        logp, states = model.step(ctx, t, np.array([prev]), states)
        total += float(logp[0, s])
        prev = int(s)
    return total


@dataclass
class BatchItem:
    index: int
    word: str
    results: list[Result] | None = None
    error: Exception | None = None


def decode_batch(model: G2PModel, words: Sequence[str], beam: BeamConfig = BeamConfig(),
                 n_best: int = 1, workers: int = 1) -> list[BatchItem]:
    """Decode many words; output order follows input order.

    A failing word yields an item with ``error`` set instead of aborting the
    batch.
    """

    def one(i_word):
        i, word = i_word
        try:
            return BatchItem(i, word, beam_decode(model, word, beam, n_best))
        except Exception as exc:  # reported per word
            return BatchItem(i, word, error=exc)

    items = list(enumerate(words))
    if workers <= 1 or len(items) <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))


def format_results(word: str, results: Sequence[Result]) -> list[str]:
    return [f"{word}\t{r.log_likelihood:.6f}\t{' '.join(r.phonemes)}" for r in results]

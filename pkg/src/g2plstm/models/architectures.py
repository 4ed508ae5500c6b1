"""The three LSTM G2P architectures with hand-written BPTT.

All sequences inside one call share their lengths, so the time loop runs on
``(batch, dim)`` arrays. Letter sequences are framed as ``<s> l1 .. lT </s>``.

* ``enc-dec``: the encoder reads ``<s>`` then the letters reversed; its final
  ``(h, c)`` per layer seeds the decoder, which reads ``<os> p1 .. pP`` and
  predicts ``p1 .. pP </os>``.
* ``uni``: one prediction per framed letter position (T + 2 of them). Targets
  are ``<os> s1 .. sT </os>`` over the aligned slots, and the input at each
  position is the letter window plus the previous target.
* ``bi``: like ``uni`` but with stacked forward/backward layers under a final
  forward layer. The backward stack sees letters only, so it can be computed
  once per word before decoding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..lexicon import SymbolTable
from ..nn import (
    LstmCellParams,
    LstmState,
    init_params,
    log_softmax,
    lstm_cell_backward,
    lstm_cell_forward,
    softmax_xent,
)

ARCHITECTURES = ("enc-dec", "uni", "bi")
LETTER_BOS, LETTER_EOS = 0, 1
PHONE_BOS, PHONE_EOS, PHONE_NULL = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    letter_dim: int
    phoneme_dim: int
    hidden_dim: int
    layers: int = 1
    window: int = 3
    seed: int = 0
    init_scale: float = 0.05

    def validate(self) -> "ModelConfig":
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        for name in ("letter_dim", "phoneme_dim", "hidden_dim", "layers", "window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.init_scale < 0:
            raise ConfigError("init_scale must be non-negative")
        return self


def _cell_shapes(prefix: str, input_dim: int, hidden: int):
    return [
        (f"{prefix}.W", (4 * hidden, input_dim)),
        (f"{prefix}.U", (4 * hidden, hidden)),
        (f"{prefix}.b", (4 * hidden,)),
    ]


def _run(cell, xs, state, reverse=False):
    hs, caches = [None] * len(xs), [None] * len(xs)
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in order:
        state, caches[t] = lstm_cell_forward(xs[t], state, cell)
        hs[t] = state.h
    return hs, caches, state


def _backprop(cell, gcell, caches, dhs, reverse=False, dfinal=None):
    """BPTT through one layer. ``dhs[t]`` is the upstream gradient on h_t."""
    n = len(caches)
    dxs = [None] * n
    if dfinal is None:
        dh = np.zeros_like(caches[0].h_prev)
        dc = np.zeros_like(caches[0].c_prev)
    else:
        dh, dc = dfinal
    order = range(n) if reverse else range(n - 1, -1, -1)
    for t in order:
        up = dh if dhs is None or dhs[t] is None else dh + dhs[t]
        dxs[t], (dh, dc), _ = lstm_cell_backward(caches[t], up, dc, cell, gcell)
    return dxs, LstmState(dh, dc)


class G2PModel:
    """Parameters plus symbol tables for one architecture.

    ``params`` is an ordered ``name -> array`` dict; the order is the on-disk
    tensor order and the order parameters are drawn from the seeded generator.
    """

    architecture: str

    def __init__(self, config: ModelConfig, letters: SymbolTable, phonemes: SymbolTable,
                 params: dict[str, np.ndarray] | None = None, dtype=np.float32):
        if config.architecture != self.architecture:
            raise ConfigError(f"{type(self).__name__} cannot take a {config.architecture} config")
        self.config = config.validate()
        self.letters = letters
        self.phonemes = phonemes
        self.dtype = np.dtype(dtype)
        shapes = self.param_shapes()
        if params is None:
            rng = np.random.default_rng(config.seed)
            params = {}
            for name, shape in shapes.items():
                if name.endswith(".b"):
                    params[name] = np.zeros(shape, self.dtype)
                else:
                    params[name] = init_params(shape, config.init_scale, rng).astype(self.dtype)
        else:
            if list(params) != list(shapes):
                raise ConfigError("parameter names do not match the configuration")
            for name, shape in shapes.items():
                if params[name].shape != shape:
                    raise ConfigError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.params = params

    # -- structure ---------------------------------------------------------

    @property
    def n_letters(self) -> int:
        return len(self.letters)

    @property
    def n_out(self) -> int:
        return len(self.phonemes)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        raise NotImplementedError

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def cell(self, prefix: str, params=None) -> LstmCellParams:
        p = self.params if params is None else params
        return LstmCellParams(p[prefix + ".W"], p[prefix + ".U"], p[prefix + ".b"])

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def astype(self, dtype) -> "G2PModel":
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        return type(self)(self.config, self.letters, self.phonemes, params, dtype)

    def _zero_state(self, batch: int) -> LstmState:
        H = self.config.hidden_dim
        return LstmState(np.zeros((batch, H), self.dtype), np.zeros((batch, H), self.dtype))

    def _output(self, hs, targets, grads):
        """Softmax layer over top activations; returns loss and dh per step."""
        W, b = self.params["out.W"], self.params["out.b"]
        # float64 accumulation, or wider when the model itself is wider
        acc = np.result_type(self.dtype, np.float64)
        loss = acc.type(0)
        dhs = []
        for t, h in enumerate(hs):
            step_loss, dlogits = softmax_xent(h @ W.T + b, targets[:, t])
            loss += np.sum(step_loss, dtype=acc)
            if grads is not None:
                grads["out.W"] += dlogits.T @ h
                grads["out.b"] += dlogits.sum(axis=0)
                dhs.append(dlogits @ W)
        return loss, dhs

    def _log_probs(self, h) -> np.ndarray:
        logits = h @ self.params["out.W"].T + self.params["out.b"]
        return log_softmax(logits.astype(np.float64))

    # -- examples ----------------------------------------------------------

    def encode_letters(self, letters: Sequence[str]) -> np.ndarray:
        return np.array(self.letters.encode(letters), dtype=np.int64)

    def encode_example(self, example) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def example_shape(self, encoded) -> tuple[int, ...]:
        return tuple(len(a) for a in encoded)

    def n_steps(self, encoded) -> int:
        raise NotImplementedError

    def loss_and_grads(self, batch, params=None, need_grads=True):
        """Summed cross-entropy over a batch of same-shape encoded examples.

        ``params`` overrides the model's own parameters (used by gradient
        checking). Returns ``(loss, grads)``; grads is None without
        ``need_grads``.
        """
        saved = self.params
        if params is not None:
            self.params = params
        try:
            letters = np.stack([b[0] for b in batch])
            outputs = np.stack([b[1] for b in batch])
            return self._loss(letters, outputs, need_grads)
        finally:
            self.params = saved

    def forward_teacher_forced(self, example):
        """Per-step log-distributions ``(steps, V)`` and total cross-entropy."""
        if isinstance(example, tuple) and isinstance(example[0], np.ndarray):
            encoded = example
        else:
            encoded = self.encode_example(example)
        logp, targets = self._teacher_forced_log_probs(encoded[0][None], encoded[1][None])
        ce = -float(np.sum(logp[np.arange(len(targets)), targets]))
        return logp, ce

    # -- decoding ----------------------------------------------------------

    def start(self, letter_ids: np.ndarray):
        """Per-word decoding context (encoder output or backward activities)."""
        raise NotImplementedError

    def initial_states(self, ctx) -> list[LstmState]:
        raise NotImplementedError

    def step(self, ctx, t: int, prev: np.ndarray, states: list[LstmState]):
        """Advance a batch of hypotheses one output step.

        ``prev`` holds each hypothesis's previous output symbol. Returns float64
        log-probabilities ``(batch, V)`` and the new recurrent states.
        """
        raise NotImplementedError


class AlignmentModel(G2PModel):
    """Shared plumbing for the uni- and bi-directional alignment models."""

    def encode_example(self, example):
        slots = self.phonemes.encode(example.slot_symbols)
        return self.encode_letters(example.letters), np.array(slots, dtype=np.int64)

    def n_steps(self, encoded) -> int:
        return len(encoded[0]) + 2

    def _framing(self, letters, slots):
        B = letters.shape[0]
        w = self.config.window
        framed = np.concatenate(
            [np.full((B, 1), LETTER_BOS), letters, np.full((B, w), LETTER_EOS)], axis=1
        )
        n = letters.shape[1] + 2
        windows = np.stack([framed[:, t : t + w] for t in range(n)], axis=1)  # (B, n, w)
        targets = np.concatenate(
            [np.full((B, 1), PHONE_BOS), slots, np.full((B, 1), PHONE_EOS)], axis=1
        )
        prev = np.concatenate([np.full((B, 1), PHONE_BOS), targets[:, :-1]], axis=1)
        return windows, prev, targets

    def _letter_inputs(self, windows):
        E = self.params["emb.letter"]
        B, n, w = windows.shape
        return [E[windows[:, t]].reshape(B, w * E.shape[1]) for t in range(n)]

    def _scatter_letters(self, grads, windows, dxl):
        dL = self.config.letter_dim
        B, n, w = windows.shape
        for t in range(n):
            np.add.at(grads["emb.letter"], windows[:, t], dxl[t].reshape(B, w, dL))

    def _teacher_forced_log_probs(self, letters, slots):
        windows, prev, targets = self._framing(letters, slots)
        hs = self._top_activations(windows, prev)
        logp = np.concatenate([self._log_probs(h) for h in hs])
        return logp, targets[0]

    def start(self, letter_ids):
        letters = np.asarray(letter_ids)[None]
        windows, _, _ = self._framing(letters, np.zeros_like(letters))
        return {"n": windows.shape[1], "xl": self._letter_inputs(windows)}


class UniLSTM(AlignmentModel):
    architecture = "uni"

    def param_shapes(self):
        c = self.config
        shapes = [("emb.letter", (self.n_letters, c.letter_dim)), ("emb.phoneme", (self.n_out, c.phoneme_dim))]
        for k in range(c.layers):
            in_dim = c.window * c.letter_dim + c.phoneme_dim if k == 0 else c.hidden_dim
            shapes += _cell_shapes(f"fwd.{k}", in_dim, c.hidden_dim)
        shapes += [("out.W", (self.n_out, c.hidden_dim)), ("out.b", (self.n_out,))]
        return dict(shapes)

    def _forward(self, windows, prev):
        EP = self.params["emb.phoneme"]
        xl = self._letter_inputs(windows)
        xs = [np.concatenate([xl[t], EP[prev[:, t]]], axis=1) for t in range(len(xl))]
        B = windows.shape[0]
        layers = []
        for k in range(self.config.layers):
            hs, caches, _ = _run(self.cell(f"fwd.{k}"), xs, self._zero_state(B))
            layers.append(caches)
            xs = hs
        return xs, layers

    def _top_activations(self, windows, prev):
        return self._forward(windows, prev)[0]

    def _loss(self, letters, slots, need_grads):
        windows, prev, targets = self._framing(letters, slots)
        hs, layers = self._forward(windows, prev)
        grads = self.zero_grads() if need_grads else None
        loss, dhs = self._output(hs, targets, grads)
        if not need_grads:
            return loss, None
        for k in range(self.config.layers - 1, -1, -1):
            name = f"fwd.{k}"
            dhs, _ = _backprop(self.cell(name), self.cell(name, grads), layers[k], dhs)
        dL = self.config.window * self.config.letter_dim
        self._scatter_letters(grads, windows, [d[:, :dL] for d in dhs])
        for t, d in enumerate(dhs):
            np.add.at(grads["emb.phoneme"], prev[:, t], d[:, dL:])
        return loss, grads

    def initial_states(self, ctx):
        return [self._zero_state(1) for _ in range(self.config.layers)]

    def step(self, ctx, t, prev, states):
        B = len(prev)
        x = np.concatenate(
            [np.repeat(ctx["xl"][t], B, axis=0), self.params["emb.phoneme"][prev]], axis=1
        )
        new = []
        for k, state in enumerate(states):
            state, _ = lstm_cell_forward(x, state, self.cell(f"fwd.{k}"))
            new.append(state)
            x = state.h
        return self._log_probs(x), new


class BiLSTM(AlignmentModel):
    architecture = "bi"

    def param_shapes(self):
        c = self.config
        H = c.hidden_dim
        shapes = [("emb.letter", (self.n_letters, c.letter_dim)), ("emb.phoneme", (self.n_out, c.phoneme_dim))]
        for k in range(c.layers):
            letter_in = c.window * c.letter_dim
            shapes += _cell_shapes(f"fwd.{k}", letter_in + c.phoneme_dim if k == 0 else 2 * H, H)
            shapes += _cell_shapes(f"bwd.{k}", letter_in if k == 0 else H, H)
        shapes += _cell_shapes("top", 2 * H, H)
        shapes += [("out.W", (self.n_out, H)), ("out.b", (self.n_out,))]
        return dict(shapes)

    def _backward_stack(self, xl):
        B = xl[0].shape[0]
        xs, outs, caches = xl, [], []
        for k in range(self.config.layers):
            hs, cache, _ = _run(self.cell(f"bwd.{k}"), xs, self._zero_state(B), reverse=True)
            outs.append(hs)
            caches.append(cache)
            xs = hs
        return outs, caches

    def _forward(self, windows, prev):
        EP = self.params["emb.phoneme"]
        xl = self._letter_inputs(windows)
        n, B = len(xl), windows.shape[0]
        bwd, bwd_caches = self._backward_stack(xl)
        xs = [np.concatenate([xl[t], EP[prev[:, t]]], axis=1) for t in range(n)]
        fwd_caches = []
        for k in range(self.config.layers):
            hs, caches, _ = _run(self.cell(f"fwd.{k}"), xs, self._zero_state(B))
            fwd_caches.append(caches)
            xs = [np.concatenate([hs[t], bwd[k][t]], axis=1) for t in range(n)]
        top, top_caches, _ = _run(self.cell("top"), xs, self._zero_state(B))
        return top, (fwd_caches, bwd_caches, top_caches)

    def _top_activations(self, windows, prev):
        return self._forward(windows, prev)[0]

    def _loss(self, letters, slots, need_grads):
        windows, prev, targets = self._framing(letters, slots)
        top, (fwd_caches, bwd_caches, top_caches) = self._forward(windows, prev)
        grads = self.zero_grads() if need_grads else None
        loss, dhs = self._output(top, targets, grads)
        if not need_grads:
            return loss, None
        H = self.config.hidden_dim
        n = len(top)
        dxs, _ = _backprop(self.cell("top"), self.cell("top", grads), top_caches, dhs)
        df = [d[:, :H] for d in dxs]
        db = [d[:, H:] for d in dxs]
        dL = self.config.window * self.config.letter_dim
        dxl = [0.0] * n
        for k in range(self.config.layers - 1, -1, -1):
            name = f"fwd.{k}"
            dxf, _ = _backprop(self.cell(name), self.cell(name, grads), fwd_caches[k], df)
            name = f"bwd.{k}"
            dxb, _ = _backprop(self.cell(name), self.cell(name, grads), bwd_caches[k], db, reverse=True)
            if k > 0:
                df = [d[:, :H] for d in dxf]
                db = [dxf[t][:, H:] + dxb[t] for t in range(n)]
            else:
                dxl = [dxf[t][:, :dL] + dxb[t] for t in range(n)]
                for t in range(n):
                    np.add.at(grads["emb.phoneme"], prev[:, t], dxf[t][:, dL:])
        self._scatter_letters(grads, windows, dxl)
        return loss, grads

    def start(self, letter_ids):
        ctx = super().start(letter_ids)
        ctx["bwd"], _ = self._backward_stack(ctx["xl"])
        return ctx

    def initial_states(self, ctx):
        return [self._zero_state(1) for _ in range(self.config.layers + 1)]

    def step(self, ctx, t, prev, states):
        B = len(prev)
        x = np.concatenate(
            [np.repeat(ctx["xl"][t], B, axis=0), self.params["emb.phoneme"][prev]], axis=1
        )
        new = []
        for k in range(self.config.layers):
            state, _ = lstm_cell_forward(x, states[k], self.cell(f"fwd.{k}"))
            new.append(state)
            x = np.concatenate([state.h, np.repeat(ctx["bwd"][k][t], B, axis=0)], axis=1)
        state, _ = lstm_cell_forward(x, states[-1], self.cell("top"))
        new.append(state)
        return self._log_probs(state.h), new


class EncoderDecoder(G2PModel):
    architecture = "enc-dec"

    def param_shapes(self):
        c = self.config
        H = c.hidden_dim
        shapes = [("emb.letter", (self.n_letters, c.letter_dim)), ("emb.phoneme", (self.n_out, c.phoneme_dim))]
        for k in range(c.layers):
            shapes += _cell_shapes(f"enc.{k}", c.letter_dim if k == 0 else H, H)
        for k in range(c.layers):
            shapes += _cell_shapes(f"dec.{k}", c.phoneme_dim if k == 0 else H, H)
        shapes += [("out.W", (self.n_out, H)), ("out.b", (self.n_out,))]
        return dict(shapes)

    def encode_example(self, example):
        letters, phones = example
        return self.encode_letters(letters), np.array(self.phonemes.encode(phones), dtype=np.int64)

    def n_steps(self, encoded) -> int:
        return len(encoded[1]) + 1

    @staticmethod
    def _framing(letters, phones):
        B = letters.shape[0]
        enc = np.concatenate([np.full((B, 1), LETTER_BOS), letters[:, ::-1]], axis=1)
        dec_in = np.concatenate([np.full((B, 1), PHONE_BOS), phones], axis=1)
        targets = np.concatenate([phones, np.full((B, 1), PHONE_EOS)], axis=1)
        return enc, dec_in, targets

    def _encode(self, enc):
        EL = self.params["emb.letter"]
        xs = [EL[enc[:, t]] for t in range(enc.shape[1])]
        finals, caches = [], []
        for k in range(self.config.layers):
            hs, cache, final = _run(self.cell(f"enc.{k}"), xs, self._zero_state(enc.shape[0]))
            finals.append(final)
            caches.append(cache)
            xs = hs
        return finals, caches

    def _decode(self, dec_in, finals):
        EP = self.params["emb.phoneme"]
        xs = [EP[dec_in[:, t]] for t in range(dec_in.shape[1])]
        caches = []
        for k in range(self.config.layers):
            hs, cache, _ = _run(self.cell(f"dec.{k}"), xs, finals[k])
            caches.append(cache)
            xs = hs
        return xs, caches

    def _teacher_forced_log_probs(self, letters, phones):
        enc, dec_in, targets = self._framing(letters, phones)
        finals, _ = self._encode(enc)
        hs, _ = self._decode(dec_in, finals)
        return np.concatenate([self._log_probs(h) for h in hs]), targets[0]

    def _loss(self, letters, phones, need_grads):
        enc, dec_in, targets = self._framing(letters, phones)
        finals, enc_caches = self._encode(enc)
        hs, dec_caches = self._decode(dec_in, finals)
        grads = self.zero_grads() if need_grads else None
        loss, dhs = self._output(hs, targets, grads)
        if not need_grads:
            return loss, None
        L = self.config.layers
        d_init = [None] * L
        for k in range(L - 1, -1, -1):
            name = f"dec.{k}"
            dhs, d_init[k] = _backprop(self.cell(name), self.cell(name, grads), dec_caches[k], dhs)
        for t, d in enumerate(dhs):
            np.add.at(grads["emb.phoneme"], dec_in[:, t], d)
        dhs = None
        for k in range(L - 1, -1, -1):
            name = f"enc.{k}"
            dhs, _ = _backprop(self.cell(name), self.cell(name, grads), enc_caches[k], dhs, dfinal=d_init[k])
        for t, d in enumerate(dhs):
            np.add.at(grads["emb.letter"], enc[:, t], d)
        return loss, grads

    def start(self, letter_ids):
        letters = np.asarray(letter_ids)[None]
        enc, _, _ = self._framing(letters, np.zeros((1, 0), dtype=np.int64))
        finals, _ = self._encode(enc)
        return {"finals": finals}

    def initial_states(self, ctx):
        return list(ctx["finals"])

    def step(self, ctx, t, prev, states):
        x = self.params["emb.phoneme"][prev]
        new = []
        for k, state in enumerate(states):
            state, _ = lstm_cell_forward(x, state, self.cell(f"dec.{k}"))
            new.append(state)
            x = state.h
        return self._log_probs(x), new


_CLASSES = {cls.architecture: cls for cls in (EncoderDecoder, UniLSTM, BiLSTM)}


def build_model(config: ModelConfig, letters: SymbolTable, phonemes: SymbolTable, dtype=np.float32) -> G2PModel:
    """Create a freshly initialized model for ``config``.

    Alignment models expect ``phonemes`` to already include compound symbols.
    """
    config.validate()
    if phonemes.kind != "phoneme" or letters.kind != "letter":
        raise ConfigError("symbol tables passed in the wrong order")
    return _CLASSES[config.architecture](config, letters, phonemes, dtype=dtype)


def model_class(architecture: str):
    try:
        return _CLASSES[architecture]
    except KeyError:
        raise ConfigError(f"unknown architecture {architecture!r}") from None


def config_dict(config: ModelConfig) -> dict:
    return asdict(config)

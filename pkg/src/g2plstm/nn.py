"""Dense numeric building blocks: LSTM cell, softmax cross-entropy, SGD.

Everything works on numpy arrays. Vectors may carry a leading batch axis,
so ``x`` is either ``(input_dim,)`` or ``(batch, input_dim)``.

Gate blocks inside the stacked LSTM weights are ordered input, forget,
output, candidate (``i, f, o, g``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple

import numpy as np

GATES = ("i", "f", "o", "g")


class ShapeError(ValueError):
    """Raised when array shapes do not agree."""


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


@dataclass
class LstmCellParams:
    """Weights of one non-peephole LSTM cell.

    ``W`` is ``(4*hidden, input)``, ``U`` is ``(4*hidden, hidden)`` and ``b`` is
    ``(4*hidden,)``; row blocks follow :data:`GATES`.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        four_h = self.W.shape[0]
        if four_h % 4 or self.U.shape != (four_h, four_h // 4) or self.b.shape != (four_h,):
            raise ShapeError(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return the ``(W_x, U_x, b_x)`` views for gate ``name``."""
        k = GATES.index(name)
        H = self.hidden_dim
        rows = slice(k * H, (k + 1) * H)
        return self.W[rows], self.U[rows], self.b[rows]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, dtype=np.float64) -> "LstmCellParams":
        return cls(
            np.zeros((4 * hidden_dim, input_dim), dtype),
            np.zeros((4 * hidden_dim, hidden_dim), dtype),
            np.zeros(4 * hidden_dim, dtype),
        )


class LstmCache(NamedTuple):
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(shape, scale: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Draw an array i.i.d. uniform on ``[-scale, scale]`` from ``rng``."""
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if not shape or any(s <= 0 for s in shape):
        raise ShapeError(f"invalid shape {shape}")
    if scale < 0:
        raise ValueError(f"scale must be non-negative, got {scale}")
    if scale == 0:
        return np.zeros(shape, dtype)
    return rng.uniform(-scale, scale, size=shape).astype(dtype, copy=False)


def lstm_cell_forward(
    x: np.ndarray, prev: LstmState, params: LstmCellParams
) -> tuple[LstmState, LstmCache]:
    """One LSTM step. Returns the new state and the cache needed for backward."""
    H = params.hidden_dim
    if x.shape[-1] != params.input_dim or prev.h.shape[-1] != H or prev.c.shape[-1] != H:
        raise ShapeError(
            f"LSTM step got x{x.shape} h{prev.h.shape} c{prev.c.shape} "
            f"for input_dim={params.input_dim} hidden_dim={H}"
        )
    z = x @ params.W.T + prev.h @ params.U.T + params.b
    ifo = sigmoid(z[..., : 3 * H])
    i, f, o = ifo[..., :H], ifo[..., H : 2 * H], ifo[..., 2 * H :]
    g = np.tanh(z[..., 3 * H :])
    c = f * prev.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmState(h, c), LstmCache(x, prev.h, prev.c, i, f, o, g, tanh_c)


def lstm_cell_backward(
    cache: LstmCache | None,
    dh: np.ndarray,
    dc: np.ndarray,
    params: LstmCellParams,
    grads: LstmCellParams | None = None,
) -> tuple[np.ndarray, LstmState, LstmCellParams]:
    """Backpropagate one step.

    ``dh``/``dc`` are the gradients arriving at this step's outputs. Parameter
    gradients are added into ``grads`` (allocated when None) so that an unrolled
    sequence accumulates them across steps.

    Returns ``(dx, LstmState(dh_prev, dc_prev), grads)``.
    """
    if cache is None:
        raise RuntimeError("lstm_cell_backward called without a cached forward step")
    if grads is None:
        grads = LstmCellParams.zeros(params.input_dim, params.hidden_dim, params.W.dtype)
    dc_total = dc + dh * cache.o * (1.0 - cache.tanh_c**2)
    do = dh * cache.tanh_c
    di = dc_total * cache.g
    df = dc_total * cache.c_prev
    dg = dc_total * cache.i
    dz = np.concatenate(
        [
            di * cache.i * (1.0 - cache.i),
            df * cache.f * (1.0 - cache.f),
            do * cache.o * (1.0 - cache.o),
            dg * (1.0 - cache.g**2),
        ],
        axis=-1,
    )
    if dz.ndim == 1:
        grads.W += np.outer(dz, cache.x)
        grads.U += np.outer(dz, cache.h_prev)
        grads.b += dz
    else:
        grads.W += dz.T @ cache.x
        grads.U += dz.T @ cache.h_prev
        grads.b += dz.sum(axis=0)
    dx = dz @ params.W
    dh_prev = dz @ params.U
    dc_prev = dc_total * cache.f
    return dx, LstmState(dh_prev, dc_prev), grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_xent(logits: np.ndarray, target) -> tuple[float | np.ndarray, np.ndarray]:
    """Cross-entropy of ``softmax(logits)`` against integer ``target``.

    Works on a single vector or a batch (one target per row). Returns the loss
    (scalar, or per-row array) and the gradient with respect to the logits.
    """
    V = logits.shape[-1]
    target = np.asarray(target)
    if np.any(target < 0) or np.any(target >= V):
        raise IndexError(f"target {target} outside vocabulary of size {V}")
    logp = log_softmax(logits)
    dlogits = np.exp(logp)
    if logits.ndim == 1:
        loss = -logp[target]
        dlogits[target] -= 1.0
        return float(loss), dlogits
    rows = np.arange(logits.shape[0])
    loss = -logp[rows, target]
    dlogits[rows, target] -= 1.0
    return loss, dlogits


def sgd_apply(
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    learning_rate_per_sample: float,
    clip: float | None = 1.0,
) -> dict[str, np.ndarray]:
    """In-place SGD step ``p -= lr * clip(g)``; returns ``params``.

    ``grads`` should hold the minibatch *sum* of per-sample gradients.
    """
    if learning_rate_per_sample <= 0:
        raise ValueError("learning rate must be positive")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if clip is not None:
            g = np.clip(g, -clip, clip)
        p -= (learning_rate_per_sample * g).astype(p.dtype, copy=False)
    return params


def grad_check(
    loss_and_grads: Callable[[dict[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    epsilon: float = 1e-5,
    loss_fn: Callable[[dict[str, np.ndarray]], float] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grads(params)`` must return ``(loss, grads)``; ``loss_fn``, if
    given, is a cheaper loss-only closure for the perturbed evaluations.
    Parameters are perturbed in place and restored. Use float64 arrays or
    wider.
    """
    if loss_fn is None:
        loss_fn = lambda p: loss_and_grads(p)[0]  # noqa: E731
    _, analytic = loss_and_grads(params)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        a = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss_fn(params)
            flat[j] = orig - epsilon
            down = loss_fn(params)
            flat[j] = orig
            numeric = (up - down) / (2 * epsilon)
            denom = max(abs(a[j]), abs(numeric), 1e-8)
            worst = max(worst, float(abs(a[j] - numeric) / denom))
    return worst

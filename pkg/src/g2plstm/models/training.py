"""Minibatch SGD training with teacher-forced BPTT."""

from __future__ import annotations

import logging
import math
import shutil
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..nn import sgd_apply
from .architectures import ConfigError, G2PModel
from .serialization import save_model

log = logging.getLogger(__name__)

# the fixed schedule used for data without a validation set
NETTALK_SEGMENTS = ((10, 0.1), (2, 0.05), (70, 0.01))


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss in epoch {epoch}, minibatch {batch}")
        self.epoch, self.batch = epoch, batch


@dataclass
class TrainSchedule:
    mode: str = "validation"  # or "piecewise"
    learning_rate: float = 0.1
    segments: tuple[tuple[int, float], ...] = NETTALK_SEGMENTS
    minibatch: int = 100
    max_epochs: int = 100
    sort_by_length: bool = True
    clip: float | None = 1.0
    min_improvement: float = 1e-4
    min_lr_ratio: float = 1 / 1024

    def validate(self) -> "TrainSchedule":
        if self.mode not in ("validation", "piecewise"):
            raise ConfigError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "validation" and self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.mode == "piecewise":
            if not self.segments or any(n < 1 or lr <= 0 for n, lr in self.segments):
                raise ConfigError("piecewise segments need positive epochs and learning rates")
        if self.minibatch < 1 or self.max_epochs < 1:
            raise ConfigError("minibatch and max_epochs must be >= 1")
        return self

    @property
    def total_epochs(self) -> int:
        if self.mode == "piecewise":
            return sum(n for n, _ in self.segments)
        return self.max_epochs


class LearningRateControl:
    """Halve the rate whenever validation cross-entropy stops improving."""

    def __init__(self, initial: float, min_improvement: float = 1e-4, min_ratio: float = 1 / 1024):
        self.initial = self.lr = initial
        self.min_improvement = min_improvement
        self.min_lr = initial * min_ratio
        self.best = math.inf

    def update(self, valid_ce: float) -> float:
        if valid_ce < self.best - self.min_improvement:
            self.best = valid_ce
        else:
            self.lr /= 2
        return self.lr

    @property
    def exhausted(self) -> bool:
        return self.lr < self.min_lr


@dataclass
class EpochRecord:
    epoch: int
    train_ce: float
    valid_ce: float | None
    lr: float

    def tsv(self) -> str:
        valid = "-" if self.valid_ce is None else f"{self.valid_ce:.6f}"
        return f"{self.epoch}\t{self.train_ce:.6f}\t{valid}\t{self.lr:g}"


@dataclass
class TrainResult:
    model: G2PModel
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None


def make_minibatches(model: G2PModel, encoded: Sequence, schedule: TrainSchedule, rng) -> list[list]:
    """Shuffle and cut one epoch of minibatches.

    Alignment models bucket by letter count when ``sort_by_length`` is set, so
    every batch holds equal-length words. Otherwise the whole set is permuted
    and cut in order.
    """
    size = schedule.minibatch
    if model.architecture != "enc-dec" and schedule.sort_by_length:
        buckets = defaultdict(list)
        for ex in encoded:
            buckets[len(ex[0])].append(ex)
        batches = []
        for length in sorted(buckets):
            items = buckets[length]
            order = rng.permutation(len(items))
            items = [items[i] for i in order]
            batches += [items[i : i + size] for i in range(0, len(items), size)]
        order = rng.permutation(len(batches))
        return [batches[i] for i in order]
    order = rng.permutation(len(encoded))
    items = [encoded[i] for i in order]
    return [items[i : i + size] for i in range(0, len(items), size)]


def batch_loss_and_grads(model: G2PModel, batch, need_grads=True):
    """Sum loss/gradients over a minibatch, vectorizing same-shape groups."""
    groups = defaultdict(list)
    for ex in batch:
        groups[model.example_shape(ex)].append(ex)
    total, grads = 0.0, None
    for shape in sorted(groups):
        loss, g = model.loss_and_grads(groups[shape], need_grads=need_grads)
        total += float(loss)
        if g is not None:
            if grads is None:
                grads = g
            else:
                for k in grads:
                    grads[k] += g[k]
    return total, grads


def mean_cross_entropy(model: G2PModel, encoded: Sequence, batch_size: int = 256) -> float:
    """Cross-entropy per output step over a data set."""
    if not encoded:
        return math.nan
    steps = sum(model.n_steps(ex) for ex in encoded)
    total = 0.0
    for i in range(0, len(encoded), batch_size):
        total += batch_loss_and_grads(model, encoded[i : i + batch_size], need_grads=False)[0]
    return total / steps


def train(
    model: G2PModel,
    train_data: Sequence,
    schedule: TrainSchedule,
    valid_data: Sequence = (),
    checkpoint_dir=None,
    seed: int | None = None,
) -> TrainResult:
    """Train ``model`` in place.

    ``train_data``/``valid_data`` are raw examples: AlignedPairs for alignment
    models, ``(letters, phonemes)`` pairs for the encoder-decoder. Each example
    contributes its summed gradient; updates apply the per-sample rate once per
    minibatch. With ``checkpoint_dir`` every epoch is saved as
    ``epoch_NNN.g2pm`` and the best one (lowest validation cross-entropy, or
    the last epoch without validation data) is copied to ``best.g2pm``.
    """
    schedule.validate()
    if not train_data:
        raise ConfigError("empty training set")
    if schedule.mode == "validation" and not valid_data:
        raise ConfigError("validation-driven schedule needs validation data")
    encoded = [model.encode_example(ex) for ex in train_data]
    valid = [model.encode_example(ex) for ex in valid_data]
    seed = model.config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    if schedule.mode == "piecewise":
        plan = [lr for n, lr in schedule.segments for _ in range(n)]
        control = None
    else:
        control = LearningRateControl(schedule.learning_rate, schedule.min_improvement, schedule.min_lr_ratio)

    result = TrainResult(model)
    best_valid = math.inf
    epoch = 0
    while True:
        epoch += 1
        if control is None:
            if epoch > len(plan):
                break
            lr = plan[epoch - 1]
        else:
            if epoch > schedule.max_epochs or control.exhausted:
                break
            lr = control.lr
        loss_sum, steps = 0.0, 0
        for b, batch in enumerate(make_minibatches(model, encoded, schedule, rng), 1):
            loss, grads = batch_loss_and_grads(model, batch)
            if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise TrainingDivergedError(epoch, b)
            sgd_apply(model.params, grads, lr, schedule.clip)
            loss_sum += loss
            steps += sum(model.n_steps(ex) for ex in batch)
        train_ce = loss_sum / steps
        valid_ce = mean_cross_entropy(model, valid) if valid else None
        record = EpochRecord(epoch, train_ce, valid_ce, lr)
        result.history.append(record)
        log.info("epoch %d: train CE %.4f valid CE %s lr %g", epoch, train_ce,
                 "-" if valid_ce is None else f"{valid_ce:.4f}", lr)
        if control is not None:
            control.update(valid_ce)
        improved = valid_ce is None or valid_ce < best_valid
        if improved:
            best_valid = valid_ce if valid_ce is not None else best_valid
            result.best_epoch = epoch
        if checkpoint_dir is not None:
            path = checkpoint_dir / f"epoch_{epoch:03d}.g2pm"
            save_model(model, path)
            if improved:
                shutil.copyfile(path, checkpoint_dir / "best.g2pm")
    return result


def write_history(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch\ttrain_ce\tvalid_ce\tlr\n")
        for rec in history:
            fh.write(rec.tsv() + "\n")

"""Flat ``key = value`` run configuration.

Precedence is defaults < config file < command-line flags. Unknown keys are
rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable


class RunConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("none", "off", "") else float(text)


def parse_segments(text: str) -> tuple[tuple[int, float], ...]:
    """``"10:0.1,2:0.05"`` -> ``((10, 0.1), (2, 0.05))``."""
    out = []
    for part in text.split(","):
        epochs, lr = part.split(":")
        out.append((int(epochs), float(lr)))
    return tuple(out)


def format_segments(segments) -> str:
    return ",".join(f"{n}:{lr:g}" for n, lr in segments)


@dataclass
class RunConfig:
    # data
    lexicon: str = ""
    format: str = "cmudict"
    strip_stress: bool = True
    train_list: str = ""
    valid_list: str = ""
    test_list: str = ""
    data_dir: str = ""
    aligned: str = ""
    # aligner
    em_iters: int = 20
    em_tol: float = 1e-4
    # model
    architecture: str = "bi"
    letter_dim: int = 50
    phoneme_dim: int = 50
    hidden_dim: int = 300
    layers: int = 1
    window: int = 3
    init_scale: float = 0.05
    seed: int = 0
    # training
    schedule: str = "validation"
    learning_rate: float = 0.1
    segments: str = "10:0.1,2:0.05,70:0.01"
    minibatch: int = 100
    max_epochs: int = 100
    sort_by_length: bool = True
    clip: float | None = 1.0
    # decoding
    band: float = 1.0
    max_beam: int = 100
    max_length: int = 0
    n_best: int = 1
    workers: int = 1
    # outputs
    model: str = ""
    words: str = ""
    hyp: str = ""
    partition: str = "test"
    out: str = ""

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def set(self, key: str, value: str, origin: str = "") -> None:
        where = f" ({origin})" if origin else ""
        field = {f.name: f for f in fields(self)}.get(key)
        if field is None:
            raise RunConfigError(f"unknown config key {key!r}{where}")
        current = getattr(type(self), key)
        try:
            if isinstance(current, bool):
                parsed = _bool(value)
            elif key == "clip":
                parsed = _optional_float(value)
            elif isinstance(current, int):
                parsed = int(value)
            elif isinstance(current, float):
                parsed = float(value)
            else:
                parsed = value.strip()
            if key == "segments":
                parse_segments(parsed)
        except ValueError as exc:
            raise RunConfigError(f"bad value for {key!r}{where}: {exc}") from None
        setattr(self, key, parsed)

    def update_from_lines(self, lines: Iterable[str], source: str = "config") -> None:
        for lineno, raw in enumerate(lines, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise RunConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            self.set(key.strip(), value.strip(), f"{source}:{lineno}")

    def load(self, path) -> None:
        try:
            with open(path, encoding="utf-8") as fh:
                self.update_from_lines(fh, str(path))
        except OSError as exc:
            raise RunConfigError(f"cannot read config {path}: {exc.strerror}") from None

    def lines(self) -> list[str]:
        out = []
        for key in self.keys():
            value = getattr(self, key)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif value is None:
                value = "none"
            out.append(f"{key} = {value}")
        return out

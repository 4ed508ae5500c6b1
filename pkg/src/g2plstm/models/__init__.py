from .architectures import (
    ARCHITECTURES,
    BiLSTM,
    ConfigError,
    EncoderDecoder,
    G2PModel,
    ModelConfig,
    UniLSTM,
    build_model,
)
from .serialization import (
    ChecksumError,
    MagicMismatchError,
    ModelFileError,
    TruncatedModelError,
    VersionMismatchError,
    load_model,
    save_model,
)
from .training import (
    NETTALK_SEGMENTS,
    EpochRecord,
    LearningRateControl,
    TrainingDivergedError,
    TrainResult,
    TrainSchedule,
    mean_cross_entropy,
    train,
    write_history,
)


def forward_teacher_forced(model, example):
    return model.forward_teacher_forced(example)


def enc_dec_examples(entries):
    """One ``(letters, phonemes)`` example per pronunciation variant."""
    return [(e.letters, p) for e in entries for p in e.pronunciations]


__all__ = [
    "ARCHITECTURES",
    "BiLSTM",
    "build_model",
    "ChecksumError",
    "ConfigError",
    "enc_dec_examples",
    "EncoderDecoder",
    "EpochRecord",
    "forward_teacher_forced",
    "G2PModel",
    "LearningRateControl",
    "load_model",
    "MagicMismatchError",
    "mean_cross_entropy",
    "ModelConfig",
    "ModelFileError",
    "NETTALK_SEGMENTS",
    "save_model",
    "train",
    "TrainingDivergedError",
    "TrainResult",
    "TrainSchedule",
    "TruncatedModelError",
    "UniLSTM",
    "VersionMismatchError",
    "write_history",
]

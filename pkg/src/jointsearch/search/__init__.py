"""Joint bilevel search and final training."""

from .checkpoint import load_checkpoint, save_checkpoint
from .joint import (
    EpochRecord,
    JointState,
    NonFiniteLossError,
    SearchConfig,
    SearchLog,
    SearchResult,
    SeparationError,
    SeparationMonitor,
    TrainConfig,
    check_artifacts,
    checksum,
    evaluate,
    final_train,
    search,
    train_step,
    val_step,
)
from .optim import SGD, Adam, clip_grad_norm, cosine_lr

__all__ = [
    "Adam", "EpochRecord", "JointState", "NonFiniteLossError", "SGD", "SearchConfig", "SearchLog",
    "SearchResult", "SeparationError", "SeparationMonitor", "TrainConfig", "check_artifacts", "checksum",
    "clip_grad_norm", "cosine_lr", "evaluate", "final_train", "load_checkpoint", "save_checkpoint",
    "search", "train_step", "val_step",
]

"""Wavelet-domain training, transfer learning and checkpointing."""

from .checkpoint import (
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
    zero_checkpoint,
)
from .data import DatasetError, TrainingSample, make_dataset, make_sample, samples_from_images
from .loss import objective, wavelet_l2, wavelet_l2_loss
from .trainer import (
    ArchitectureMismatch,
    TrainConfig,
    TrainingDivergence,
    TrainResult,
    WGANConfig,
    dataset_loss,
    finetune,
    format_config,
    parse_config,
    train,
    wgan_train_step,
)

__all__ = [
    "ArchitectureMismatch", "Checkpoint", "CheckpointError", "DatasetError", "TrainConfig",
    "TrainResult", "TrainingDivergence", "TrainingSample", "WGANConfig", "dataset_loss",
    "finetune", "format_config", "load_checkpoint", "make_dataset", "make_sample", "objective",
    "parse_config", "samples_from_images", "save_checkpoint", "train", "wavelet_l2",
    "wavelet_l2_loss", "wgan_train_step", "zero_checkpoint",
]

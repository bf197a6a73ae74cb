"""Toy image-to-image UNet estimator for lattice random-field parameters."""

__version__ = "0.1.0"

from .data import (
    LoadedDataset,
    load_dataset,
    random_negation,
    random_translation,
    shuffle_replicates,
)
from .errors import DatasetContractError, ParamNetError, ShapeCompatibilityError
from .model import UNet
from .normalize import CHANNELS, NormalizationMap
from .predict import predict
from .train import (
    EarlyStopper,
    TrainResult,
    TrainSpec,
    channel_mean_baseline,
    evaluate_split,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]

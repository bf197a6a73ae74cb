"""Single-forward-pass parameter estimation from a trained checkpoint."""

from __future__ import annotations

import numpy as np
import torch

from .errors import ShapeCompatibilityError
from .model import UNet
from .train import load_checkpoint


def predict(checkpoint, fields: np.ndarray) -> np.ndarray:
    """Estimate the (3, H, W) parameter image for one (M, H, W) ensemble.

    ``checkpoint`` is a path or an already-loaded (model, normalization)
    pair. The output is de-normalized into parameter units and clamped into
    the prior supports.
    """
    if isinstance(checkpoint, tuple):
        model, normalization = checkpoint
    else:
        model, normalization, _ = load_checkpoint(checkpoint)
    if not isinstance(model, UNet):
        raise TypeError("checkpoint did not contain a UNet")

    data = np.asarray(fields, dtype=np.float32)
    if data.ndim != 3:
        raise ShapeCompatibilityError(f"fields must be (M, H, W), got shape {data.shape}")
    if data.shape[0] != model.in_channels:
        raise ShapeCompatibilityError(
            f"model expects {model.in_channels} replicate channels, got {data.shape[0]}"
        )
    model.check_spatial(data.shape[1], data.shape[2])

    model.eval()
    with torch.no_grad():
        normed = model(torch.from_numpy(data[np.newaxis]))[0].clamp(0.0, 1.0).numpy()
    return normalization.denormalize(normed)

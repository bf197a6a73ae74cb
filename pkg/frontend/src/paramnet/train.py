"""Training loop: AdamW, step-wise LR decay, early stopping, checkpointing.

The loss is MSE on normalized parameter values. Per training step the
replicates of each batch are shuffled across the channel dimension, the
fields are negated with probability 1/2, and (when a crop size is set) a
random translation window is taken; none of these change what the targets
mean. Training stops at the epoch cap or after ``patience`` consecutive
epochs without validation improvement.

Determinism is best-effort under the seed: torch CPU kernels are
deterministic here, but results may shift across torch versions; the log
records library versions for that reason.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .data import LoadedDataset, load_dataset, random_negation, random_translation, shuffle_replicates
from .errors import ParamNetError
from .model import UNet
from .normalize import CHANNELS, NormalizationMap


@dataclass(frozen=True)
class TrainSpec:
    dataset_path: str
    out_dir: str
    replicates: int | None = None
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 10
    learning_rate: float = 3e-3
    lr_step_size: int = 15
    lr_gamma: float = 0.5
    seed: int = 0
    base_width: int = 16
    depth: int = 3
    crop: int | None = None

    def __post_init__(self):
        if not 0 < self.patience < self.max_epochs:
            raise ParamNetError(
                f"patience ({self.patience}) must be positive and below the "
                f"epoch cap ({self.max_epochs})"
            )
        if self.batch_size < 1 or self.learning_rate < 0:
            raise ParamNetError("batch_size must be >= 1 and learning_rate >= 0")

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


class EarlyStopper:
    """Stops after ``patience`` consecutive epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.stale = 0

    def update(self, value: float) -> bool:
        """Record one validation value; True means stop now."""
        if value < self.best:
            self.best = value
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    metrics_path: Path
    log: list[dict] = field(default_factory=list)
    best_val_mse: float = float("inf")
    stopped_early: bool = False


def save_checkpoint(path, model: UNet, normalization: NormalizationMap, spec: TrainSpec,
                    epoch: int, best_val_mse: float) -> None:
    torch.save(
        {
            "state_dict": model.state_dict(),
            "model": model.config(),
            "normalization": normalization.to_dict(),
            "config_hash": spec.config_hash(),
            "epoch": epoch,
            "best_val_mse": best_val_mse,
        },
        path,
    )


def load_checkpoint(path) -> tuple[UNet, NormalizationMap, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = UNet.from_config(payload["model"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, NormalizationMap.from_dict(payload["normalization"]), payload


def _epoch_mse(model: UNet, split, batch_size: int) -> float:
    model.eval()
    loss_fn = nn.MSELoss(reduction="sum")
    total = 0.0
    count = 0
    with torch.no_grad():
        for start in range(0, len(split), batch_size):
            xb = split.fields[start : start + batch_size]
            yb = split.targets[start : start + batch_size]
            total += float(loss_fn(model(xb), yb))
            count += yb.numel()
    return total / count


def channel_mean_baseline(dataset: LoadedDataset) -> torch.Tensor:
    """Per-channel mean of the normalized train targets: the trivial predictor."""
    train = dataset.require_split("train")
    return train.targets.mean(dim=(0, 2, 3))


def _channel_rmse_parameter_units(pred_norm, target_norm, normalization) -> dict:
    pred = normalization.denormalize(np.moveaxis(pred_norm.numpy(), 1, 0).reshape(3, -1))
    true = normalization.denormalize(np.moveaxis(target_norm.numpy(), 1, 0).reshape(3, -1), clamp=False)
    out = {}
    for idx, name in enumerate(CHANNELS):
        diff = pred[idx] - true[idx]
        out[name] = {
            "rmse": float(np.sqrt(np.mean(diff**2))),
            "mae": float(np.mean(np.abs(diff))),
        }
    return out


def evaluate_split(model: UNet, split, normalization: NormalizationMap,
                   baseline: torch.Tensor, batch_size: int = 16) -> dict:
    """Per-channel RMSE/MAE in parameter units for the model and baseline."""
    model.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(split), batch_size):
            preds.append(model(split.fields[start : start + batch_size]).clamp(0.0, 1.0))
    pred_norm = torch.cat(preds)
    base_norm = baseline.view(1, 3, 1, 1).expand_as(split.targets).clamp(0.0, 1.0)
    return {
        "model_channels": _channel_rmse_parameter_units(pred_norm, split.targets, normalization),
        "baseline_channels": _channel_rmse_parameter_units(base_norm, split.targets, normalization),
    }


def train(spec: TrainSpec) -> TrainResult:
    """Train on the dataset's train split, early-stop on val, score on test."""
    torch.manual_seed(spec.seed)
    generator = torch.Generator().manual_seed(spec.seed)

    dataset = load_dataset(spec.dataset_path, replicates=spec.replicates)
    train_split = dataset.require_split("train")
    val_split = dataset.require_split("val")

    model = UNet(dataset.replicates, base_width=spec.base_width, depth=spec.depth)
    size = spec.crop if spec.crop is not None else dataset.grid_shape[0]
    model.check_spatial(size, spec.crop if spec.crop is not None else dataset.grid_shape[1])

    optimizer = torch.optim.AdamW(model.parameters(), lr=spec.learning_rate)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=spec.lr_step_size, gamma=spec.lr_gamma
    )
    loss_fn = nn.MSELoss()
    stopper = EarlyStopper(spec.patience)

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "checkpoint.pt"
    result = TrainResult(
        checkpoint_path=checkpoint_path,
        log_path=out_dir / "train_log.json",
        metrics_path=out_dir / "metrics.json",
    )

    for epoch in range(spec.max_epochs):
        model.train()
        order = torch.randperm(len(train_split), generator=generator)
        running = 0.0
        seen = 0
        for start in range(0, len(order), spec.batch_size):
            idx = order[start : start + spec.batch_size]
            xb = train_split.fields[idx]
            yb = train_split.targets[idx]
            xb = shuffle_replicates(xb, generator)
            xb = random_negation(xb, generator)
            if spec.crop is not None:
                xb, yb = random_translation(xb, yb, spec.crop, generator, dataset.boundary)
            optimizer.zero_grad()
            loss = loss_fn(model(xb), yb)
            loss.backward()
            optimizer.step()
            running += float(loss.detach()) * len(idx)
            seen += len(idx)
        scheduler.step()

        val_mse = _epoch_mse(model, val_split, spec.batch_size)
        result.log.append(
            {
                "epoch": epoch,
                "train_mse": running / seen,
                "val_mse": val_mse,
                "lr": float(optimizer.param_groups[0]["lr"]),
            }
        )
        if val_mse < result.best_val_mse:
            result.best_val_mse = val_mse
            save_checkpoint(checkpoint_path, model, dataset.normalization, spec,
                            epoch, result.best_val_mse)
        if stopper.update(val_mse):
            result.stopped_early = True
            break

    if not checkpoint_path.exists():  # pragma: no cover - val never finite
        raise ParamNetError("training produced no checkpoint")

    best_model, normalization, _ = load_checkpoint(checkpoint_path)
    baseline = channel_mean_baseline(dataset)
    metrics = {
        "config_hash": spec.config_hash(),
        "best_val_mse": result.best_val_mse,
        "epochs_trained": len(result.log),
        "stopped_early": result.stopped_early,
        "versions": {"torch": torch.__version__, "numpy": np.__version__},
        "test": evaluate_split(best_model, dataset.require_split("test"),
                               normalization, baseline, spec.batch_size),
    }
    result.metrics_path.write_text(json.dumps(metrics, indent=2, sort_keys=True))
    result.log_path.write_text(json.dumps(result.log, indent=2))
    return result

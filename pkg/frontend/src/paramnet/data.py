"""Loading the shared HDF5 dataset contract and training-time augmentation.

Container layout consumed here (produced by the field-simulation toolkit):

    /samples/<k>/fields   float32 (M, H, W)
    /samples/<k>/params   float32 (3, H, W) channels [kappa2, rho, theta]
    per-sample attr       split in {train, val, test}

Validation happens at load time, before any training starts. Augmentations
never touch targets except translation, which shifts fields and parameter
images consistently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import h5py
import numpy as np
import torch

from .errors import DatasetContractError
from .normalize import NormalizationMap


@dataclass
class SplitTensors:
    """One split's inputs (N, M, H, W) and normalized targets (N, 3, H, W)."""

    fields: torch.Tensor
    targets: torch.Tensor

    def __len__(self) -> int:
        return self.fields.shape[0]


@dataclass
class LoadedDataset:
    splits: dict[str, SplitTensors]
    replicates: int
    grid_shape: tuple[int, int]
    boundary: str
    normalization: NormalizationMap

    def require_split(self, name: str) -> SplitTensors:
        split = self.splits.get(name)
        if split is None or len(split) == 0:
            raise DatasetContractError(
                f"dataset has no {name!r} samples; adjust the split fractions"
            )
        return split


def load_dataset(
    path,
    replicates: int | None = None,
    normalization: NormalizationMap | None = None,
) -> LoadedDataset:
    """Read and validate a dataset container into per-split tensors.

    ``replicates`` selects the first M stored replicates as input channels
    (None uses all). Any contract violation raises DatasetContractError
    before a single batch is formed.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetContractError(f"dataset file {path} does not exist")
    normalization = normalization or NormalizationMap.default()
    boundary = "truncate"
    per_split: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {"train": [], "val": [], "test": []}

    with h5py.File(path, "r") as f:
        if "samples" not in f:
            raise DatasetContractError(f"{path}: missing /samples group")
        if "config_json" in f.attrs:
            boundary = json.loads(f.attrs["config_json"]).get("boundary", "truncate")
        names = sorted(f["samples"])
        if not names:
            raise DatasetContractError(f"{path}: /samples is empty")
        grid_shape = None
        stored_m = None
        for name in names:
            group = f[f"samples/{name}"]
            for member in ("fields", "params"):
                if member not in group:
                    raise DatasetContractError(f"{path}: /samples/{name} missing {member}")
            fields = group["fields"][()]
            params = group["params"][()]
            if fields.ndim != 3:
                raise DatasetContractError(
                    f"{path}: /samples/{name}/fields must be (M, H, W), got {fields.shape}"
                )
            if params.shape != (3,) + fields.shape[1:]:
                raise DatasetContractError(
                    f"{path}: /samples/{name}/params must be (3, H, W) matching fields, "
                    f"got {params.shape} vs fields {fields.shape}"
                )
            if grid_shape is None:
                grid_shape = fields.shape[1:]
                stored_m = fields.shape[0]
            elif fields.shape[1:] != grid_shape or fields.shape[0] != stored_m:
                raise DatasetContractError(f"{path}: inconsistent shapes at /samples/{name}")
            split = str(group.attrs.get("split", "train"))
            if split not in per_split:
                raise DatasetContractError(f"{path}: unknown split {split!r} at /samples/{name}")
            per_split[split].append((fields, params))

    m = stored_m if replicates is None else replicates
    if not 1 <= m <= stored_m:
        raise DatasetContractError(
            f"requested {replicates} replicates but dataset stores {stored_m}"
        )

    splits = {}
    for name, pairs in per_split.items():
        if not pairs:
            splits[name] = SplitTensors(
                fields=torch.empty((0, m) + grid_shape),
                targets=torch.empty((0, 3) + grid_shape),
            )
            continue
        fields = torch.tensor(
            np.stack([p[0][:m] for p in pairs]), dtype=torch.float32
        )
        targets = torch.tensor(
            np.stack([normalization.normalize(p[1].astype(float)) for p in pairs]),
            dtype=torch.float32,
        )
        splits[name] = SplitTensors(fields=fields, targets=targets)
    return LoadedDataset(
        splits=splits,
        replicates=m,
        grid_shape=tuple(grid_shape),
        boundary=boundary,
        normalization=normalization,
    )


# --- augmentation -----------------------------------------------------------
# Replicates within a sample are exchangeable, and a SAR field is
# sign-symmetric (-y solves B(-y) = -e), so shuffling and negating inputs
# leave the parameter targets untouched. Translation must move fields and
# targets together.


def shuffle_replicates(fields: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    perm = torch.randperm(fields.shape[1], generator=generator)
    return fields[:, perm]


def random_negation(
    fields: torch.Tensor, generator: torch.Generator, probability: float = 0.5
) -> torch.Tensor:
    if torch.rand((), generator=generator) < probability:
        return -fields
    return fields


def random_translation(
    fields: torch.Tensor,
    targets: torch.Tensor,
    crop: int,
    generator: torch.Generator,
    boundary: str = "truncate",
) -> tuple[torch.Tensor, torch.Tensor]:
    """Translate by jointly cropping a (crop x crop) window.

    On periodic-x data the x offset wraps (circular shift) so every column
    remains reachable; otherwise offsets stay inside the grid.
    """
    h, w = fields.shape[-2:]
    if crop > h or crop > w:
        raise DatasetContractError(f"crop {crop} exceeds grid {h}x{w}")
    dy = int(torch.randint(0, h - crop + 1, (), generator=generator))
    if boundary == "periodic-x":
        dx = int(torch.randint(0, w, (), generator=generator))
        fields = torch.roll(fields, shifts=-dx, dims=-1)
        targets = torch.roll(targets, shifts=-dx, dims=-1)
        dx = 0
    else:
        dx = int(torch.randint(0, w - crop + 1, (), generator=generator))
    return (
        fields[..., dy : dy + crop, dx : dx + crop],
        targets[..., dy : dy + crop, dx : dx + crop],
    )

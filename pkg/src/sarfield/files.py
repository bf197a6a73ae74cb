"""Single-array HDF5 containers used by the command-line tools.

Ensemble files hold one replicate ensemble under ``/fields`` (float32,
(M, H, W)); parameter files hold one parameter image under ``/params``
(float32, (3, H, W), channels [kappa2, rho, theta] — the same params layout
as the dataset container). Every file carries a provenance header (tool
version, config hash, seed) in its root attributes.
"""

from __future__ import annotations

import json
from pathlib import Path

import h5py
import numpy as np

from . import __version__ as _tool_version
from .dataset import _cast_params_float32
from .errors import DatasetFormatError
from .sar import PARAM_CHANNELS, ParamFields
from .simulate import FieldEnsemble


def _write_header(f: h5py.File, seed, config_hash: str, extra: dict | None = None):
    f.attrs["tool_version"] = _tool_version
    f.attrs["config_hash"] = config_hash
    f.attrs["seed"] = -1 if seed is None else int(seed)
    if extra:
        f.attrs["provenance_json"] = json.dumps(extra, sort_keys=True)


def write_ensemble(path, ensemble: FieldEnsemble, config_hash: str = "", extra: dict | None = None) -> Path:
    path = Path(path)
    with h5py.File(path, "w") as f:
        f.create_dataset(
            "fields",
            data=ensemble.data.astype(np.float32),
            chunks=True,
            compression="gzip",
            compression_opts=4,
            track_times=False,
        )
        f.attrs["standardized"] = bool(ensemble.standardized)
        f.attrs["meta_json"] = json.dumps(ensemble.meta, sort_keys=True)
        _write_header(f, ensemble.seed, config_hash, extra)
    return path


def read_ensemble(path) -> FieldEnsemble:
    with h5py.File(path, "r") as f:
        if "fields" not in f:
            raise DatasetFormatError(f"{path}: missing /fields dataset")
        data = f["fields"][()]
        if data.ndim != 3:
            raise DatasetFormatError(f"{path}: /fields must be (M, H, W), got {data.shape}")
        return FieldEnsemble(
            data=data.astype(float),
            seed=int(f.attrs.get("seed", -1)),
            standardized=bool(f.attrs.get("standardized", False)),
            meta=json.loads(f.attrs.get("meta_json", "{}")),
        )


def write_params(
    path,
    params: ParamFields,
    seed=None,
    config_hash: str = "",
    converged: np.ndarray | None = None,
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    with h5py.File(path, "w") as f:
        f.create_dataset(
            "params",
            data=_cast_params_float32(params.as_stack()),
            chunks=True,
            compression="gzip",
            compression_opts=4,
            track_times=False,
        )
        f.attrs["channel_order"] = ",".join(PARAM_CHANNELS)
        if converged is not None:
            f.create_dataset("converged", data=converged.astype(np.uint8), track_times=False)
        _write_header(f, seed, config_hash, extra)
    return path


def read_params(path) -> ParamFields:
    with h5py.File(path, "r") as f:
        if "params" not in f:
            raise DatasetFormatError(f"{path}: missing /params dataset")
        stack = f["params"][()]
        if stack.ndim != 3 or stack.shape[0] != 3:
            raise DatasetFormatError(f"{path}: /params must be (3, H, W), got {stack.shape}")
        return ParamFields.from_stack(stack.astype(float))

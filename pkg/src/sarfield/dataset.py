"""Generation, storage, and loading of (fields, parameters) training datasets.

Container contract (HDF5, shared with any downstream consumer):

    /samples/<k>/fields   float32, (M, H, W), chunked + gzip-4
    /samples/<k>/params   float32, (3, H, W), channels [kappa2, rho, theta]
    root attrs:           format_version, config_json, channel_order, seed,
                          n_samples, tool_version, config_hash
    per-sample attrs:     sample_index, split, provenance_json

A ``<path>.manifest.json`` sidecar duplicates the configuration for tooling
that does not speak HDF5. Every sample is a pure function of
(config, sample_index): the per-sample seed tree splits off the dataset seed,
so any stored sample can be regenerated bit-exactly from the file's own
attributes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Iterator

import h5py
import numpy as np

from . import __version__ as _tool_version
from .errors import DatasetFormatError, InvalidParameterError
from .patterns import (
    PARAM_KINDS,
    PARAM_SUPPORTS,
    PatternConfig,
    draw_param_field,
)
from .sar import PARAM_CHANNELS, BOUNDARIES, BOUNDARY_TRUNCATE, GridGeometry, ParamFields
from .simulate import simulate_ensemble, standardize_pixelwise

FORMAT_VERSION = "1"
SPLIT_NAMES = ("train", "val", "test")
DEFAULT_SPLIT = (0.90, 0.08, 0.02)


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines a dataset, bit for bit."""

    n_samples: int
    m_replicates: int
    height: int
    width: int
    seed: int
    pattern_frequencies: dict | None = None
    stacking_probability: float = 0.5
    standardize: bool = True
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT
    boundary: str = BOUNDARY_TRUNCATE

    def __post_init__(self):
        for name in ("n_samples", "m_replicates", "height", "width"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if len(self.split_fractions) != 3 or any(f < 0 for f in self.split_fractions):
            raise InvalidParameterError("split_fractions must be three nonnegative numbers")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise InvalidParameterError(
                f"split_fractions must sum to 1, got {sum(self.split_fractions)}"
            )
        if self.boundary not in BOUNDARIES:
            raise InvalidParameterError(f"boundary must be one of {BOUNDARIES}")
        # Delegate frequency/stacking validation.
        self.pattern_config()

    def geometry(self) -> GridGeometry:
        return GridGeometry(self.height, self.width, self.boundary)

    def pattern_config(self) -> PatternConfig:
        return PatternConfig(
            geometry=self.geometry(),
            frequencies=self.pattern_frequencies,
            stacking_probability=self.stacking_probability,
        )

    def to_json(self) -> str:
        raw = asdict(self)
        raw["split_fractions"] = list(self.split_fractions)
        return json.dumps(raw, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetConfig":
        raw = json.loads(text)
        raw["split_fractions"] = tuple(raw["split_fractions"])
        return cls(**raw)


@dataclass
class DatasetSample:
    """One training sample: replicate fields plus ground-truth parameters."""

    fields: np.ndarray  # float32 (M, H, W)
    params: np.ndarray  # float32 (3, H, W)
    index: int
    split: str
    provenance: dict = dc_field(default_factory=dict)

    def param_fields(self) -> ParamFields:
        return ParamFields.from_stack(self.params.astype(float))


def split_assignments(n_samples: int, fractions=DEFAULT_SPLIT) -> list[str]:
    """Deterministic split labels by sample index.

    Train and validation counts are floors of their fractions; test takes the
    remainder, so every sample lands somewhere and the canonical 90/8/2 split
    of 100 samples yields (90, 8, 2).
    """
    n_train = int(np.floor(n_samples * fractions[0]))
    n_val = int(np.floor(n_samples * fractions[1]))
    labels = ["train"] * n_train + ["val"] * n_val + ["test"] * (n_samples - n_train - n_val)
    return labels[:n_samples]


def _cast_params_float32(stack: np.ndarray) -> np.ndarray:
    """Cast to float32, re-clipping so rounding cannot escape the supports."""
    out = stack.astype(np.float32)
    for idx, kind in enumerate(PARAM_CHANNELS):
        lo, hi = PARAM_SUPPORTS[kind]
        lo32 = np.float32(lo)
        hi32 = np.float32(hi)
        if kind == "theta":
            hi32 = np.nextafter(np.float32(hi), np.float32(0.0))  # half-open interval
        out[idx] = np.clip(out[idx], lo32, hi32)
    return out


def generate_sample(config: DatasetConfig, sample_index: int) -> DatasetSample:
    """Generate sample ``sample_index`` deterministically from the config.

    Seed tree: the dataset seed spawns one SeedSequence per sample, which in
    turn spawns one stream per parameter field plus one for the ensemble
    noise. Fields are simulated in float64 and stored as float32.
    """
    if not 0 <= sample_index < config.n_samples:
        raise InvalidParameterError(
            f"sample index {sample_index} outside [0, {config.n_samples})"
        )
    root = np.random.SeedSequence(entropy=config.seed, spawn_key=(sample_index,))
    ss_fields = root.spawn(len(PARAM_KINDS) + 1)
    pattern_config = config.pattern_config()

    draws = {}
    for kind, ss in zip(PARAM_KINDS, ss_fields):
        draws[kind] = draw_param_field(kind, pattern_config, np.random.default_rng(ss))
    params = ParamFields(
        kappa2=draws["kappa2"].field, rho=draws["rho"].field, theta=draws["theta"].field
    )

    ensemble_seed = int(ss_fields[-1].generate_state(1, dtype=np.uint64)[0])
    ensemble = simulate_ensemble(params, config.geometry(), config.m_replicates, ensemble_seed)
    meta = {}
    if config.standardize:
        ensemble = standardize_pixelwise(ensemble)
        meta["standardization"] = ensemble.meta.get("standardization")

    split = split_assignments(config.n_samples, config.split_fractions)[sample_index]
    provenance = {
        "sample_index": sample_index,
        "ensemble_seed": ensemble_seed,
        "standardized": config.standardize,
        "fields_meta": meta,
        "param_draws": {kind: draws[kind].provenance() for kind in PARAM_KINDS},
    }
    return DatasetSample(
        fields=ensemble.data.astype(np.float32),
        params=_cast_params_float32(params.as_stack()),
        index=sample_index,
        split=split,
        provenance=provenance,
    )


def _config_hash(config: DatasetConfig) -> str:
    import hashlib

    return hashlib.sha256(config.to_json().encode()).hexdigest()


def write_dataset(config: DatasetConfig, path, threads: int = 1) -> Path:
    """Generate all samples and write the container plus its manifest sidecar.

    Sample generation may fan out over a thread pool (samples have
    independent derived seeds, so results do not depend on scheduling); the
    file itself is written by this single writer in index order.
    """
    path = Path(path)
    indices = list(range(config.n_samples))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(lambda k: generate_sample(config, k), indices))
    else:
        samples = [generate_sample(config, k) for k in indices]

    with h5py.File(path, "w") as f:
        f.attrs["format_version"] = FORMAT_VERSION
        f.attrs["config_json"] = config.to_json()
        f.attrs["channel_order"] = ",".join(PARAM_CHANNELS)
        f.attrs["seed"] = config.seed
        f.attrs["n_samples"] = config.n_samples
        f.attrs["tool_version"] = _tool_version
        f.attrs["config_hash"] = _config_hash(config)
        group = f.create_group("samples")
        for sample in samples:
            g = group.create_group(f"{sample.index:06d}")
            g.create_dataset(
                "fields", data=sample.fields, chunks=True, compression="gzip", compression_opts=4, track_times=False
            )
            g.create_dataset(
                "params", data=sample.params, chunks=True, compression="gzip", compression_opts=4, track_times=False
            )
            g.attrs["sample_index"] = sample.index
            g.attrs["split"] = sample.split
            g.attrs["provenance_json"] = json.dumps(sample.provenance, sort_keys=True)

    manifest = {
        "format_version": FORMAT_VERSION,
        "config": json.loads(config.to_json()),
        "config_hash": _config_hash(config),
        "channel_order": list(PARAM_CHANNELS),
        "tool_version": _tool_version,
        "splits": {
            name: split_assignments(config.n_samples, config.split_fractions).count(name)
            for name in SPLIT_NAMES
        },
    }
    manifest_path = Path(str(path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _require(condition: bool, message: str):
    if not condition:
        raise DatasetFormatError(message)


def read_config(path) -> DatasetConfig:
    """Read just the embedded configuration of a dataset file."""
    with h5py.File(path, "r") as f:
        _require("config_json" in f.attrs, f"{path}: missing config_json attribute")
        return DatasetConfig.from_json(f.attrs["config_json"])


def read_dataset(path) -> Iterator[DatasetSample]:
    """Stream samples from a container, validating shapes as they are read."""
    with h5py.File(path, "r") as f:
        _require("samples" in f, f"{path}: missing /samples group")
        config = DatasetConfig.from_json(f.attrs["config_json"]) if "config_json" in f.attrs else None
        for name in sorted(f["samples"]):
            g = f[f"samples/{name}"]
            for member in ("fields", "params"):
                _require(member in g, f"/samples/{name}: missing {member}")
            fields = g["fields"][()]
            params = g["params"][()]
            _require(
                fields.ndim == 3,
                f"/samples/{name}/fields: expected 3 dims (M, H, W), got shape {fields.shape}",
            )
            _require(
                params.ndim == 3 and params.shape[0] == 3,
                f"/samples/{name}/params: expected shape (3, H, W), got {params.shape}",
            )
            _require(
                params.shape[1:] == fields.shape[1:],
                f"/samples/{name}: params grid {params.shape[1:]} does not match "
                f"fields grid {fields.shape[1:]}",
            )
            if config is not None:
                _require(
                    fields.shape == (config.m_replicates, config.height, config.width),
                    f"/samples/{name}/fields: shape {fields.shape} does not match config",
                )
            yield DatasetSample(
                fields=fields,
                params=params,
                index=int(g.attrs.get("sample_index", int(name))),
                split=str(g.attrs.get("split", "train")),
                provenance=json.loads(g.attrs.get("provenance_json", "{}")),
            )


def regenerate_sample(path, sample_index: int) -> DatasetSample:
    """Rebuild one sample from a container's own config (bit-exact)."""
    return generate_sample(read_config(path), sample_index)

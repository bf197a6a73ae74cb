"""Shared fixtures: toy dataset files in the shared HDF5 contract.

Fixture files are produced with the field-simulation toolkit (the other side
of the container contract), so these tests exercise exactly the files a real
workflow would hand over.
"""

from __future__ import annotations

import pytest
from sarfield import DatasetConfig, write_dataset


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """20 samples, 16x16, M=3: fast enough for train-mechanics tests."""
    path = tmp_path_factory.mktemp("data") / "tiny.h5"
    config = DatasetConfig(
        n_samples=20,
        m_replicates=3,
        height=16,
        width=16,
        seed=111,
        pattern_frequencies={"constant": 1.0},
        stacking_probability=0.0,
    )
    write_dataset(config, path)
    return path


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """400 samples, 32x32, M=16, constant patterns: the beats-baseline bed."""
    path = tmp_path_factory.mktemp("data") / "toy.h5"
    config = DatasetConfig(
        n_samples=400,
        m_replicates=16,
        height=32,
        width=32,
        seed=516,
        pattern_frequencies={"constant": 1.0},
        stacking_probability=0.0,
        split_fractions=(0.8, 0.1, 0.1),
    )
    write_dataset(config, path, threads=2)
    return path

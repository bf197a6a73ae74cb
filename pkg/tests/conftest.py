"""Shared fixtures and independent oracles.

The dense oracles here deliberately avoid the package's sparse code paths:
matrix assembly places stencil taps one cell at a time into a dense array,
and the likelihood oracle uses dense slogdet plus an explicit quadratic form.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from sarfield.sar import (
    BOUNDARY_PERIODIC_X,
    GridGeometry,
    ParamFields,
    dispersion_at,
    stencil_at,
)


def dense_assemble(params: ParamFields, geometry: GridGeometry) -> np.ndarray:
    """Brute-force dense SAR matrix: loop cells, place 9 taps each."""
    h, w = geometry.shape
    n = geometry.n
    matrix = np.zeros((n, n))
    for i in range(h):
        for j in range(w):
            d11, d12, d22 = dispersion_at(params.rho[i, j], params.theta[i, j])
            stencil = stencil_at(params.kappa2[i, j], d11, d12, d22)
            row = i * w + j
            for di, dj, weight in stencil.taps():
                ti, tj = i + di, j + dj
                if geometry.boundary == BOUNDARY_PERIODIC_X:
                    tj %= w
                    if not 0 <= ti < h:
                        continue
                elif not (0 <= ti < h and 0 <= tj < w):
                    continue
                matrix[row, ti * w + tj] += weight
    return matrix


def dense_loglik(window: np.ndarray, kappa2: float, rho: float, theta: float) -> float:
    """Gaussian log-likelihood via dense slogdet and explicit quadratic forms."""
    data = np.asarray(window, dtype=float)
    if data.ndim == 2:
        data = data[np.newaxis]
    m, h, w = data.shape
    geometry = GridGeometry(h, w)
    params = ParamFields.constant(geometry, kappa2, rho, theta)
    b = dense_assemble(params, geometry)
    q = b.T @ b
    sign, logdet_q = np.linalg.slogdet(q)
    assert sign > 0
    total = 0.0
    for rep in data.reshape(m, h * w):
        total += 0.5 * logdet_q - 0.5 * float(rep @ q @ rep) - (h * w / 2.0) * math.log(2.0 * math.pi)
    return total


def random_params(geometry: GridGeometry, rng: np.random.Generator) -> ParamFields:
    """Random admissible parameter fields for oracle comparisons."""
    h, w = geometry.shape
    return ParamFields(
        kappa2=rng.uniform(0.05, 2.0, size=(h, w)),
        rho=rng.uniform(1.0, 7.0, size=(h, w)),
        theta=rng.uniform(-np.pi / 2, np.pi / 2, size=(h, w)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)

"""Anisotropic spatial autoregressive (SAR) operators on regular lattices.

A field y on an H x W grid is modeled through B y = e with e standard normal
white noise. Each row of the sparse matrix B is a 9-point stencil discretizing
(kappa^2 - div D grad) at that cell, where the symmetric dispersion tensor

    D = R(theta)^T diag(rho, 1/rho) R(theta),   det D = 1,

controls the local anisotropy direction (theta) and strength (rho), and
kappa^2 controls the inverse correlation range. The implied Gaussian Markov
random field has precision Q = B^T B.

Grid conventions used throughout the package: row index i is the y coordinate,
column index j is the x coordinate, cells flatten row-major as r = i*W + j.
All functions here are pure; assembled systems are immutable apart from their
lazily cached factorization, so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import FactorizationError, InvalidParameterError, ShapeMismatchError

BOUNDARY_TRUNCATE = "truncate"
BOUNDARY_PERIODIC_X = "periodic-x"
BOUNDARIES = (BOUNDARY_TRUNCATE, BOUNDARY_PERIODIC_X)

#: Channel order used everywhere a (3, H, W) parameter stack appears.
PARAM_CHANNELS = ("kappa2", "rho", "theta")


@dataclass(frozen=True)
class GridGeometry:
    """Regular lattice with unit spacing.

    ``truncate`` drops stencil taps falling outside the grid (a zero-Dirichlet
    analogue); ``periodic-x`` wraps the x index modulo the width while the
    y boundary still truncates (cylindrical domains).
    """

    height: int
    width: int
    boundary: str = BOUNDARY_TRUNCATE

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise InvalidParameterError(
                f"grid must be at least 1x1, got {self.height}x{self.width}"
            )
        if self.boundary not in BOUNDARIES:
            raise InvalidParameterError(
                f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}"
            )

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def flat_index(self, i: int, j: int) -> int:
        return i * self.width + j


@dataclass
class ParamFields:
    """The three parameter images kappa2(s), rho(s), theta(s) on one grid."""

    kappa2: np.ndarray
    rho: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.kappa2 = np.asarray(self.kappa2, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)

    @property
    def shape(self) -> tuple[int, int]:
        return self.kappa2.shape

    @classmethod
    def constant(cls, geometry: GridGeometry, kappa2: float, rho: float, theta: float) -> "ParamFields":
        """Spatially constant parameters on the given grid."""
        h, w = geometry.shape
        return cls(
            np.full((h, w), float(kappa2)),
            np.full((h, w), float(rho)),
            np.full((h, w), float(theta)),
        )

    @classmethod
    def from_stack(cls, stack: np.ndarray) -> "ParamFields":
        """Build from a (3, H, W) array in PARAM_CHANNELS order."""
        stack = np.asarray(stack, dtype=float)
        if stack.ndim != 3 or stack.shape[0] != 3:
            raise ShapeMismatchError(f"expected (3, H, W) stack, got {stack.shape}")
        return cls(stack[0], stack[1], stack[2])

    def as_stack(self) -> np.ndarray:
        """Return the (3, H, W) array in PARAM_CHANNELS order."""
        return np.stack([self.kappa2, self.rho, self.theta])

    def validate(self, geometry: GridGeometry | None = None) -> None:
        """Check shapes and per-cell admissibility; names the first bad cell."""
        if self.kappa2.shape != self.rho.shape or self.kappa2.shape != self.theta.shape:
            raise ShapeMismatchError(
                "parameter fields must share one shape, got "
                f"kappa2 {self.kappa2.shape}, rho {self.rho.shape}, theta {self.theta.shape}"
            )
        if self.kappa2.ndim != 2:
            raise ShapeMismatchError(f"parameter fields must be 2-D, got {self.kappa2.ndim}-D")
        if geometry is not None and self.kappa2.shape != geometry.shape:
            raise ShapeMismatchError(
                f"parameter fields {self.kappa2.shape} do not match grid {geometry.shape}"
            )
        bad = ~np.isfinite(self.kappa2) | ~np.isfinite(self.rho) | ~np.isfinite(self.theta)
        bad |= (self.kappa2 <= 0.0) | (self.rho < 1.0)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise InvalidParameterError(
                f"invalid parameters at cell ({i}, {j}): kappa2={self.kappa2[i, j]!r}, "
                f"rho={self.rho[i, j]!r}, theta={self.theta[i, j]!r} "
                "(need finite values, kappa2 > 0, rho >= 1)"
            )


def dispersion_at(rho, theta):
    """Entries (d11, d12, d22) of D = R^T diag(rho, 1/rho) R.

    Accepts scalars or same-shape arrays. The rotation R is by ``theta``
    radians, so D is pi-periodic in theta and det D = 1 identically:

        d11 = rho cos^2 + sin^2 / rho
        d22 = rho sin^2 + cos^2 / rho
        d12 = (1/rho - rho) cos sin

    rho < 1 is rejected: (rho, theta) and (1/rho, theta + pi/2) give the same
    tensor, and the canonical form puts the semi-major axis ratio in rho.
    """
    rho_arr = np.asarray(rho, dtype=float)
    theta_arr = np.asarray(theta, dtype=float)
    if not (np.all(np.isfinite(rho_arr)) and np.all(np.isfinite(theta_arr))):
        raise InvalidParameterError("rho and theta must be finite")
    if np.any(rho_arr < 1.0):
        raise InvalidParameterError("rho must be >= 1 (use 1/rho with theta + pi/2 instead)")
    c = np.cos(theta_arr)
    s = np.sin(theta_arr)
    inv = 1.0 / rho_arr
    d11 = rho_arr * c * c + inv * s * s
    d22 = rho_arr * s * s + inv * c * c
    d12 = (inv - rho_arr) * c * s
    if np.isscalar(rho) and np.isscalar(theta):
        return float(d11), float(d12), float(d22)
    return d11, d12, d22


@dataclass(frozen=True)
class Stencil9:
    """3x3 stencil weights addressed by offsets (di, dj) in {-1, 0, 1}^2.

    di is the row (y) offset and dj the column (x) offset. ``weights[di + 1,
    dj + 1]`` stores the tap for neighbor (i + di, j + dj); rows of
    ``as_array()`` therefore run south to north.
    """

    weights: np.ndarray

    def __getitem__(self, offset: tuple[int, int]) -> float:
        di, dj = offset
        return float(self.weights[di + 1, dj + 1])

    def as_array(self) -> np.ndarray:
        return self.weights.copy()

    @property
    def center(self) -> float:
        return float(self.weights[1, 1])

    def taps(self) -> Iterator[tuple[int, int, float]]:
        """Yield (di, dj, weight) for all nine taps."""
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                yield di, dj, float(self.weights[di + 1, dj + 1])


def stencil_at(kappa2: float, d11: float, d12: float, d22: float) -> Stencil9:
    """9-point stencil of (kappa2 - div D grad) at one cell.

    Center carries kappa2 + 2 d11 + 2 d22; x neighbors carry -d11, y neighbors
    -d22; the cross-derivative splits over the corners as -d12/2 where the
    offsets share a sign and +d12/2 where they differ. The nine weights always
    sum to kappa2 because the off-center terms cancel pairwise. With D = I the
    corners vanish and the classic (kappa2 + 4, -1) Laplacian stencil remains.
    """
    vals = np.asarray([kappa2, d11, d12, d22], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise InvalidParameterError("stencil inputs must be finite")
    if kappa2 <= 0.0:
        raise InvalidParameterError(f"kappa2 must be > 0, got {kappa2!r}")
    if d11 <= 0.0 or d22 <= 0.0:
        raise InvalidParameterError("dispersion diagonal entries must be > 0")
    half = d12 / 2.0
    w = np.array(
        [
            [-half, -d22, half],
            [-d11, kappa2 + 2.0 * d11 + 2.0 * d22, -d11],
            [half, -d22, -half],
        ]
    )
    return Stencil9(w)


# Offsets (di, dj) paired with the weight expression used in vectorized
# assembly; kept in one place so the scalar stencil and the assembled matrix
# are bitwise consistent.
_STENCIL_OFFSETS = (
    (0, 0),
    (0, 1),
    (0, -1),
    (1, 0),
    (-1, 0),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
)


def _offset_weights(kappa2, d11, d12, d22, di: int, dj: int):
    if di == 0 and dj == 0:
        return kappa2 + 2.0 * d11 + 2.0 * d22
    if di == 0:
        return -d11
    if dj == 0:
        return -d22
    half = d12 / 2.0
    return -half if di == dj else half


class SarSystem:
    """Assembled sparse SAR matrix with a lazily cached LU factorization.

    The matrix is treated as immutable after construction; the factorization
    is computed on first use and then shared (read-only) by every solve, so
    one factorization serves an entire replicate ensemble.
    """

    def __init__(self, matrix: sp.csr_matrix, geometry: GridGeometry):
        self._matrix = matrix
        self.geometry = geometry
        self._lu = None

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._matrix

    @property
    def n(self) -> int:
        return self.geometry.n

    def factor(self):
        """Sparse LU of B (COLAMD ordering), computed once and cached."""
        if self._lu is None:
            try:
                self._lu = splu(self._matrix.tocsc())
            except RuntimeError as exc:  # pragma: no cover - singular B
                raise FactorizationError(f"sparse LU of B failed: {exc}") from exc
        return self._lu

    def log_abs_det(self) -> float:
        """log |det B| from the LU factor's U diagonal (L has unit diagonal)."""
        lu = self.factor()
        diag = lu.U.diagonal()
        if np.any(diag == 0.0):  # pragma: no cover - singular B
            raise FactorizationError("zero pivot in LU factor; B is numerically singular")
        return float(np.sum(np.log(np.abs(diag))))


def assemble_sar(params: ParamFields, geometry: GridGeometry) -> SarSystem:
    """Assemble the sparse SAR matrix B from per-cell parameters.

    Row r = i*W + j holds the stencil of cell (i, j) evaluated with that
    cell's own (kappa2, rho, theta). Under ``truncate`` taps leaving the grid
    are dropped; under ``periodic-x`` the x index wraps modulo W while the y
    boundary truncates. Assembly is vectorized over cells and deterministic.
    """
    params.validate(geometry)
    h, w = geometry.shape
    d11, d12, d22 = dispersion_at(params.rho, params.theta)
    kappa2 = params.kappa2

    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    rows_from = ii * w + jj

    rows, cols, vals = [], [], []
    for di, dj in _STENCIL_OFFSETS:
        weight = np.broadcast_to(
            _offset_weights(kappa2, d11, d12, d22, di, dj), (h, w)
        ).ravel()
        ti = ii + di
        tj = jj + dj
        if geometry.boundary == BOUNDARY_PERIODIC_X:
            tj = tj % w
            keep = (ti >= 0) & (ti < h)
        else:
            keep = (ti >= 0) & (ti < h) & (tj >= 0) & (tj < w)
        rows.append(rows_from[keep])
        cols.append((ti * w + tj)[keep])
        vals.append(weight[keep])

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(geometry.n, geometry.n),
    ).tocsr()
    matrix.sum_duplicates()
    return SarSystem(matrix, geometry)


def precision(system: SarSystem) -> sp.csr_matrix:
    """Precision matrix Q = B^T B of the implied GMRF (sparse product)."""
    b = system.matrix
    return (b.T @ b).tocsr()

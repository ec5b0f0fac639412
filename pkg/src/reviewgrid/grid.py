"""Two-dimensional latent class grids and their transition matrices.

Classes live on a row-major rows x cols lattice with unit spacing and no
wraparound.  The channel noise matrix softens a sampled class into its
grid neighbors: row z holds exp(-d^2(z, y) / (2 sigma^2)) normalized over
all classes y, with d the Euclidean distance between lattice coordinates.
Small sigma concentrates the rows near the diagonal; the matrices are
fixed hyperparameters and never re-estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def n_classes(self) -> int:
        return self.rows * self.cols

    def coords(self, index: int) -> tuple[int, int]:
        """Row-major (row, col) of a class index."""
        if not 0 <= index < self.n_classes:
            raise ValueError(f"class index {index} out of range")
        return divmod(index, self.cols)

    def coord_array(self) -> np.ndarray:
        """All class coordinates as an (n_classes, 2) float array."""
        idx = np.arange(self.n_classes)
        return np.stack([idx // self.cols, idx % self.cols], axis=1).astype(float)


def make_grid(rows: int, cols: int) -> GridLayout:
    return GridLayout(rows, cols)


@dataclass
class ChannelNoise:
    """Row-stochastic class-transition matrix over one grid."""

    sigma: float
    matrix: np.ndarray
    _row_cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._row_cdf = np.cumsum(self.matrix, axis=1)

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]


def squared_grid_distances(grid: GridLayout) -> np.ndarray:
    """Pairwise squared Euclidean distances between class coordinates."""
    coords = grid.coord_array()
    diff = coords[:, None, :] - coords[None, :, :]
    return (diff**2).sum(axis=2)


def channel_noise(grid: GridLayout, sigma: float) -> ChannelNoise:
    """Build the Gaussian-neighborhood transition matrix for a grid."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    kernel = np.exp(-squared_grid_distances(grid) / (2.0 * sigma * sigma))
    matrix = kernel / kernel.sum(axis=1, keepdims=True)
    return ChannelNoise(sigma=sigma, matrix=matrix)


def sample_corrupted(class_index: int, noise: ChannelNoise, rng: np.random.Generator) -> int:
    """Draw a (possibly different) class from the row of ``class_index``."""
    if not 0 <= class_index < noise.n_classes:
        raise ValueError(f"class index {class_index} out of range")
    u = rng.random()
    return int(np.searchsorted(noise._row_cdf[class_index], u, side="right").clip(max=noise.n_classes - 1))

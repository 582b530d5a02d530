"""Uniform periodic grid commensurate with the lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_POINTS_PER_SITE = 16


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class SpatialGrid:
    """``n_sites`` lattice periods sampled with ``points_per_site`` points each.

    Site ``n`` (a potential minimum) sits at ``z = n * pi`` and grid index
    ``n_points // 2 + n * points_per_site``; sites run from ``-n_sites/2``
    to ``n_sites/2 - 1``.
    """

    n_sites: int
    points_per_site: int = 16

    def __post_init__(self):
        if self.points_per_site < MIN_POINTS_PER_SITE:
            raise ValueError(f"points_per_site must be >= {MIN_POINTS_PER_SITE}")
        if self.n_sites < 2 or self.n_sites % 2:
            raise ValueError("n_sites must be even and >= 2")
        if not _is_pow2(self.n_points):
            raise ValueError(f"n_points = {self.n_points} is not a power of two")

    @property
    def n_points(self) -> int:
        return self.n_sites * self.points_per_site

    @property
    def dz(self) -> float:
        return math.pi / self.points_per_site

    @property
    def z_min(self) -> float:
        return -self.n_sites * math.pi / 2

    @property
    def z_max(self) -> float:
        return self.n_sites * math.pi / 2

    @cached_property
    def z(self) -> np.ndarray:
        return self.z_min + np.arange(self.n_points) * self.dz

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wave numbers of the FFT ordering, in units of k_L."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, self.dz)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.n_sites // 2, self.n_sites // 2)

    def site_index(self, n: int) -> int:
        return self.n_points // 2 + n * self.points_per_site

    def doubled(self) -> "SpatialGrid":
        return SpatialGrid(2 * self.n_sites, self.points_per_site)


def embed(psi: np.ndarray, small: SpatialGrid, big: SpatialGrid, shift_sites: int = 0):
    """Place a state defined on ``small`` into the centre of ``big``.

    The state is translated by ``shift_sites`` lattice periods.  Both grids
    must share the same resolution.
    """
    if small.points_per_site != big.points_per_site:
        raise ValueError("grids differ in points_per_site")
    if small.n_sites > big.n_sites:
        raise ValueError("target grid is smaller than the source grid")
    psi = np.asarray(psi)
    out = np.zeros(psi.shape[:-1] + (big.n_points,), dtype=complex)
    lo = big.n_points // 2 - small.n_points // 2
    out[..., lo:lo + small.n_points] = psi
    if shift_sites:
        out = np.roll(out, shift_sites * big.points_per_site, axis=-1)
    return out


def translate(psi: np.ndarray, grid: SpatialGrid, sites: int) -> np.ndarray:
    """Shift a grid function by an integer number of lattice periods."""
    return np.roll(psi, sites * grid.points_per_site, axis=-1)

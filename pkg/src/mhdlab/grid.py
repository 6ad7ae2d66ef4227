"""
Periodic uniform-grid fields and spectral differential operators.

All dynamical-field derivatives are spectral (exact for band-limited
fields).  Cutoff functions are *not* differentiated here; their analytic
derivatives live in :mod:`mhdlab.cutoffs`.

Physical-space arrays are indexed ``[ix, iy, iz]`` with coordinates
``x_i = -L/2 + i * dx`` so the analysis ball ``B(0, R0)`` sits at the box
center.  Spectral storage is real-to-complex (``rfftn`` along the last
axis), so conjugate symmetry is structural.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Raised when fields on incompatible grids are combined."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic cubic grid: ``n`` points per axis on a box of side ``L``."""

    n: int
    box_length: float

    def __post_init__(self) -> None:
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if self.box_length <= 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @cached_property
    def axis_coords(self) -> np.ndarray:
        """1D physical coordinates, centered so the origin is a grid point."""
        return -0.5 * self.box_length + self.spacing * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable (x, y, z) coordinate arrays."""
        c = self.axis_coords
        return (
            c[:, None, None],
            c[None, :, None],
            c[None, None, :],
        )

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Broadcastable (kx, ky, kz) for rfftn layout (z axis halved).

        Nyquist entries are zeroed: odd spectral operators (derivatives, the
        Leray projector) acting on the folded Nyquist planes would otherwise
        break conjugate symmetry of the real-to-complex storage.
        """
        k_full = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        k_half = 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.spacing)
        k_full[self.n // 2] = 0.0
        k_half[-1] = 0.0
        return (
            k_full[:, None, None],
            k_full[None, :, None],
            k_half[None, None, :],
        )

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        return kx**2 + ky**2 + kz**2

    @cached_property
    def inv_k_squared(self) -> np.ndarray:
        """1/k² with zero modes (mean and pure-Nyquist) mapped to 0."""
        k2 = self.k_squared
        return np.where(k2 > 0.0, 1.0 / np.where(k2 > 0.0, k2, 1.0), 0.0)

    def dealias_mask(self, fraction: float = 2.0 / 3.0) -> np.ndarray:
        """Boolean spectral mask keeping |k| components below ``fraction * k_max``."""
        kx, ky, kz = self.wavenumbers
        k_max = np.pi / self.spacing
        cut = fraction * k_max
        return (np.abs(kx) < cut) & (np.abs(ky) < cut) & (np.abs(kz) < cut)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)


def _check_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True)
class ScalarField:
    """A real scalar sampled on the grid (physical space)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.physical_shape:
            raise GridMismatchError(
                f"scalar shape {self.values.shape} != grid {self.grid.physical_shape}"
            )


@dataclass(frozen=True)
class VectorField:
    """
    A 3-component periodic field.

    ``data`` has shape ``(3, n, n, n)`` (physical) or ``(3, n, n, n//2+1)``
    complex (spectral, rfftn layout), discriminated by ``space``.
    """

    grid: GridSpec
    data: np.ndarray
    space: str = "physical"

    def __post_init__(self) -> None:
        expected = (
            (3,) + self.grid.physical_shape
            if self.space == "physical"
            else (3,) + self.grid.spectral_shape
        )
        if self.space not in ("physical", "spectral"):
            raise ValueError(f"unknown space tag {self.space!r}")
        if self.data.shape != expected:
            raise GridMismatchError(
                f"{self.space} data shape {self.data.shape} != expected {expected}"
            )

    def to_spectral(self) -> "VectorField":
        if self.space == "spectral":
            return self
        return VectorField(self.grid, np.fft.rfftn(self.data, axes=(1, 2, 3)), "spectral")

    def to_physical(self) -> "VectorField":
        if self.space == "physical":
            return self
        phys = np.fft.irfftn(self.data, s=self.grid.physical_shape, axes=(1, 2, 3))
        return VectorField(self.grid, phys, "physical")

    @property
    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.data[0], self.data[1], self.data[2]


def zero_vector_field(grid: GridSpec) -> VectorField:
    return VectorField(grid, np.zeros((3,) + grid.physical_shape))


def curl(f: VectorField) -> VectorField:
    """Spectral curl; the result is divergence-free to round-off."""
    fh = f.to_spectral().data
    kx, ky, kz = f.grid.wavenumbers
    out = np.empty_like(fh)
    out[0] = 1j * (ky * fh[2] - kz * fh[1])
    out[1] = 1j * (kz * fh[0] - kx * fh[2])
    out[2] = 1j * (kx * fh[1] - ky * fh[0])
    result = VectorField(f.grid, out, "spectral")
    return result.to_physical() if f.space == "physical" else result


def divergence(f: VectorField) -> ScalarField:
    """Spectral divergence, returned in physical space."""
    fh = f.to_spectral().data
    kx, ky, kz = f.grid.wavenumbers
    dh = 1j * (kx * fh[0] + ky * fh[1] + kz * fh[2])
    return ScalarField(
        f.grid, np.fft.irfftn(dh, s=f.grid.physical_shape, axes=(0, 1, 2))
    )


def gradient(s: ScalarField) -> VectorField:
    """Spectral gradient of a smooth periodic scalar field."""
    sh = np.fft.rfftn(s.values)
    kx, ky, kz = s.grid.wavenumbers
    out = np.empty((3,) + s.grid.spectral_shape, dtype=sh.dtype)
    out[0] = 1j * kx * sh
    out[1] = 1j * ky * sh
    out[2] = 1j * kz * sh
    return VectorField(s.grid, out, "spectral").to_physical()


def gradient_tensor(f: VectorField) -> np.ndarray:
    """Spectral Jacobian; ``G[i, j] = d f_i / d x_j`` as physical arrays."""
    fh = f.to_spectral().data
    ks = f.grid.wavenumbers
    out = np.empty((3, 3) + f.grid.physical_shape)
    for i in range(3):
        for j in range(3):
            out[i, j] = np.fft.irfftn(
                1j * ks[j] * fh[i], s=f.grid.physical_shape, axes=(0, 1, 2)
            )
    return out


def leray_project_spectral(fh: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Divergence-free projection applied to spectral data in place-free form."""
    kx, ky, kz = grid.wavenumbers
    kdotf = kx * fh[0] + ky * fh[1] + kz * fh[2]
    factor = kdotf * grid.inv_k_squared
    out = np.empty_like(fh)
    out[0] = fh[0] - kx * factor
    out[1] = fh[1] - ky * factor
    out[2] = fh[2] - kz * factor
    return out


def leray_project(f: VectorField) -> VectorField:
    """Orthogonal projection onto divergence-free fields (mean modes kept)."""
    fh = f.to_spectral().data
    out = VectorField(f.grid, leray_project_spectral(fh, f.grid), "spectral")
    return out.to_physical() if f.space == "physical" else out


def integrate(s: ScalarField) -> float:
    """Equal-weight quadrature: spectrally accurate for periodic integrands."""
    return float(np.sum(s.values)) * s.grid.spacing**3


def integrate_array(values: np.ndarray, grid: GridSpec) -> float:
    """Quadrature for a bare array already on ``grid`` (may be a subgrid slab)."""
    return float(np.sum(values)) * grid.spacing**3


def l2_norm_squared(f: VectorField) -> float:
    """∫ |f|² dx via the same quadrature as :func:`integrate`."""
    phys = f.to_physical().data
    return float(np.sum(phys * phys)) * f.grid.spacing**3

"""Uniform 2D grids, wavefunctions and spectra, plus their file formats."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    """Square periodic grid on [-half_width, half_width)^2.

    Node i sits at -half_width + i * spacing; arrays are indexed [iy, ix].
    """

    half_width: float
    points_per_side: int

    def __post_init__(self):
        if self.points_per_side < 16 or self.points_per_side % 2:
            raise ValueError("points_per_side must be even and >= 16")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_side

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @property
    def axis(self) -> np.ndarray:
        n = self.points_per_side
        return -self.half_width + self.spacing * np.arange(n)

    def meshgrid(self):
        x = self.axis
        return np.meshgrid(x, x, indexing="xy")

    def wavenumbers(self):
        k = 2.0 * np.pi * np.fft.fftfreq(self.points_per_side, d=self.spacing)
        kx, ky = np.meshgrid(k, k, indexing="xy")
        return kx, ky

    def kinetic_factors(self) -> np.ndarray:
        kx, ky = self.wavenumbers()
        return 0.5 * (kx ** 2 + ky ** 2)

    def refined(self, factor: int = 2) -> "Grid2D":
        return Grid2D(self.half_width, self.points_per_side * factor)


@dataclass
class Wavefunction:
    """Complex amplitudes on a Grid2D; values are treated as immutable."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.points_per_side
        if self.values.shape != (n, n):
            raise ValueError("values shape %s does not match grid %d^2"
                             % (self.values.shape, n))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_area))

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.grid, self.values / self.norm())

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def overlap(psi_a: Wavefunction, psi_b: Wavefunction) -> complex:
    """Discrete inner product <a|b> with grid-cell weight."""
    if psi_a.grid != psi_b.grid:
        raise ValueError("wavefunctions live on different grids")
    return complex(np.vdot(psi_a.values, psi_b.values) * psi_a.grid.cell_area)


@dataclass
class Spectrum:
    """Sorted eigenpairs of the grid Hamiltonian."""

    grid: Grid2D
    energies: np.ndarray
    states: list[Wavefunction]
    residuals: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i: int) -> tuple[float, Wavefunction]:
        return float(self.energies[i]), self.states[i]

    def window(self, e_lo: float, e_hi: float) -> list[int]:
        """Indices of states with energy in [e_lo, e_hi]."""
        return [i for i, e in enumerate(self.energies) if e_lo <= e <= e_hi]


_WF_MAGIC = b"WF2D"


def write_wavefunction(path, psi: Wavefunction) -> None:
    """Binary dump: magic, u32 nx, u32 ny, 4 f64 bounds, complex rows (y outer)."""
    g = psi.grid
    n = g.points_per_side
    x0 = -g.half_width
    x1 = g.axis[-1]
    with open(path, "wb") as fh:
        fh.write(_WF_MAGIC)
        fh.write(struct.pack("<IIdddd", n, n, x0, x1, x0, x1))
        inter = np.empty((n, n, 2))
        inter[:, :, 0] = psi.values.real
        inter[:, :, 1] = psi.values.imag
        fh.write(inter.astype("<f8").tobytes())


def read_wavefunction(path) -> Wavefunction:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _WF_MAGIC:
            raise ValueError("not a WF2D file: %r" % magic)
        nx, ny, x_min, x_max, y_min, y_max = struct.unpack("<IIdddd", fh.read(40))
        data = np.frombuffer(fh.read(nx * ny * 16), dtype="<f8").reshape(ny, nx, 2)
    if nx != ny:
        raise ValueError("only square grids are supported")
    spacing = (x_max - x_min) / (nx - 1)
    grid = Grid2D(half_width=-x_min, points_per_side=nx)
    if abs(grid.spacing - spacing) > 1e-12 * spacing:
        raise ValueError("inconsistent grid bounds in file")
    return Wavefunction(grid, data[:, :, 0] + 1j * data[:, :, 1])


def write_spectrum_csv(path, spectrum: Spectrum) -> None:
    with open(path, "w") as fh:
        fh.write("index,energy,residual\n")
        for i, (e, r) in enumerate(zip(spectrum.energies, spectrum.residuals)):
            fh.write("%d,%.17g,%.17g\n" % (i, e, r))


def read_spectrum_csv(path):
    """Returns (indices, energies, residuals) arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].astype(int), data[:, 1], data[:, 2]

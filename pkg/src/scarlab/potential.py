"""Unperturbed radial wells and random Gaussian impurity fields.

All quantities are in natural units (hbar = 1, mass = 1).  The total
potential is V(|x|) + sum of Gaussian bumps; both parts are immutable
after construction and safe to evaluate concurrently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# FWHM of a Gaussian = 2*sqrt(2*ln 2) * sigma
FWHM_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))


def sigma_from_fwhm(fwhm: float) -> float:
    """Convert a full width at half maximum to a Gaussian sigma."""
    return fwhm / FWHM_FACTOR


@dataclass(frozen=True)
class PowerLaw:
    """Radial well V(r) = coefficient * r**exponent."""

    exponent: float
    coefficient: float = 0.5

    def __post_init__(self):
        if self.exponent <= 0 or self.coefficient <= 0:
            raise ValueError("power-law well requires positive exponent and coefficient")

    def __call__(self, r):
        return self.coefficient * np.asarray(r) ** self.exponent

    def derivative(self, r):
        return self.coefficient * self.exponent * np.asarray(r) ** (self.exponent - 1.0)

    def second_derivative(self, r):
        a = self.exponent
        return self.coefficient * a * (a - 1.0) * np.asarray(r) ** (a - 2.0)

    @property
    def kind(self) -> str:
        return "power"


@dataclass(frozen=True)
class CoshWell:
    """Radial well V(r) = coefficient * (cosh(r) - 1)."""

    coefficient: float = 1.0

    def __post_init__(self):
        if self.coefficient <= 0:
            raise ValueError("cosh well requires a positive coefficient")

    def __call__(self, r):
        return self.coefficient * (np.cosh(r) - 1.0)

    def derivative(self, r):
        return self.coefficient * np.sinh(r)

    def second_derivative(self, r):
        return self.coefficient * np.cosh(r)

    @property
    def kind(self) -> str:
        return "cosh"


# Any object with __call__, derivative, second_derivative works as a well.
RadialPotential = PowerLaw | CoshWell


def reference_well() -> PowerLaw:
    """The V(r) = r^5 / 2 well used throughout as the standard example."""
    return PowerLaw(exponent=5.0, coefficient=0.5)


@dataclass(frozen=True)
class GaussianBump:
    """A single impurity: M * exp(-|x - center|^2 / (2 sigma^2))."""

    x: float
    y: float
    amplitude: float
    sigma: float

    def __post_init__(self):
        if self.amplitude <= 0 or self.sigma <= 0:
            raise ValueError("bump amplitude and sigma must be positive")

    @property
    def fwhm(self) -> float:
        return FWHM_FACTOR * self.sigma


class ImpurityField:
    """A fixed realization of Gaussian bumps scattered over a square box.

    Stores bump centers, amplitudes and widths as arrays; evaluation is a
    pure superposition with no cutoff unless one is requested explicitly.
    """

    def __init__(self, centers, amplitudes, sigmas, *, seed=None, density=None,
                 box_half_width=None):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if centers.size == 0:
            centers = centers.reshape(0, 2)
        if centers.shape[1] != 2:
            raise ValueError("centers must be an (n, 2) array")
        n = centers.shape[0]
        amplitudes = np.broadcast_to(np.asarray(amplitudes, dtype=float), (n,)).copy()
        sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (n,)).copy()
        if np.any(amplitudes <= 0) or np.any(sigmas <= 0):
            raise ValueError("bump amplitudes and sigmas must be positive")
        self.centers = centers
        self.amplitudes = amplitudes
        self.sigmas = sigmas
        self.seed = seed
        self.density = density
        self.box_half_width = box_half_width
        # read-only views so the realization cannot be mutated in place
        for arr in (self.centers, self.amplitudes, self.sigmas):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def bumps(self) -> list[GaussianBump]:
        return [GaussianBump(x, y, m, s) for (x, y), m, s in
                zip(self.centers, self.amplitudes, self.sigmas)]

    def value(self, points, cutoff: float | None = None):
        """Impurity potential at the given points (shape (..., 2)).

        ``cutoff`` truncates each bump beyond ``cutoff`` sigmas; None means
        exact superposition.
        """
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = np.zeros(pts.shape[0])
        for (cx, cy), m, s in zip(self.centers, self.amplitudes, self.sigmas):
            d2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
            if cutoff is None:
                out += m * np.exp(-d2 / (2.0 * s * s))
            else:
                mask = d2 <= (cutoff * s) ** 2
                if np.any(mask):
                    out[mask] += m * np.exp(-d2[mask] / (2.0 * s * s))
        return out[0] if scalar else out

    def on_grid(self, x, y, cutoff: float | None = 6.0):
        """Fill the impurity potential on a tensor grid.

        ``x`` and ``y`` are 1D coordinate arrays; the result has shape
        (len(y), len(x)) (row index = y).  The default 6-sigma cutoff keeps
        the per-bump error below 1e-7 of the amplitude while making large
        grid fills cheap.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros((y.size, x.size))
        for (cx, cy), m, s in zip(self.centers, self.amplitudes, self.sigmas):
            if cutoff is None:
                gx = np.exp(-((x - cx) ** 2) / (2.0 * s * s))
                gy = np.exp(-((y - cy) ** 2) / (2.0 * s * s))
                out += m * np.outer(gy, gx)
            else:
                rcut = cutoff * s
                ix = np.searchsorted(x, [cx - rcut, cx + rcut])
                iy = np.searchsorted(y, [cy - rcut, cy + rcut])
                if ix[0] >= ix[1] or iy[0] >= iy[1]:
                    continue
                xs = x[ix[0]:ix[1]]
                ys = y[iy[0]:iy[1]]
                gx = np.exp(-((xs - cx) ** 2) / (2.0 * s * s))
                gy = np.exp(-((ys - cy) ** 2) / (2.0 * s * s))
                out[iy[0]:iy[1], ix[0]:ix[1]] += m * np.outer(gy, gx)
        return out

    def rotated(self, theta: float) -> "ImpurityField":
        """Return a copy with every bump center rotated by theta about the origin."""
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        return ImpurityField(self.centers @ rot.T, self.amplitudes, self.sigmas,
                             seed=self.seed, density=self.density,
                             box_half_width=self.box_half_width)

    def with_amplitude(self, amplitude: float) -> "ImpurityField":
        """Return a copy with all bump amplitudes set to ``amplitude``.

        Positions and widths are untouched, which is what an amplitude sweep
        over one realization requires.
        """
        return ImpurityField(self.centers, np.full(len(self), float(amplitude)),
                             self.sigmas, seed=self.seed, density=self.density,
                             box_half_width=self.box_half_width)


def empty_field() -> ImpurityField:
    """The zero perturbation (no bumps)."""
    return ImpurityField(np.empty((0, 2)), np.empty(0), np.empty(0))


def sample_impurities(seed: int, density: float, amplitude: float, sigma: float,
                      box_half_width: float) -> ImpurityField:
    """Draw a random impurity realization.

    The bump count is round(density * (2 w)^2).  Centers are i.i.d. uniform
    over the square [-w, w]^2, drawn from a PCG64 generator seeded with
    ``seed``; the stream order is pinned to (x, y) per bump so that a given
    seed always yields a bit-identical field.
    """
    if density <= 0 or amplitude <= 0 or sigma <= 0 or box_half_width <= 0:
        raise ValueError("density, amplitude, sigma and box_half_width must be positive")
    w = float(box_half_width)
    count = int(round(density * (2.0 * w) ** 2))
    rng = np.random.Generator(np.random.PCG64(seed))
    # row-major fill: bump 0 x, bump 0 y, bump 1 x, ...
    centers = rng.uniform(-w, w, size=(count, 2))
    return ImpurityField(centers, amplitude, sigma, seed=int(seed),
                         density=float(density), box_half_width=w)


def eval_potential(well: RadialPotential, field: ImpurityField, points):
    """Total potential V(|x|) + V_imp(x) at the given points (shape (..., 2))."""
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    r = np.hypot(pts[:, 0], pts[:, 1])
    out = np.asarray(well(r), dtype=float) + field.value(pts)
    return out[0] if scalar else out


def write_impurities(path, field: ImpurityField) -> None:
    """Write a field to the text interchange format (one bump per line)."""
    with open(path, "w") as fh:
        fh.write("# seed=%s density=%s box=%s\n" % (
            field.seed if field.seed is not None else "none",
            "none" if field.density is None else "%.17g" % field.density,
            "none" if field.box_half_width is None else "%.17g" % field.box_half_width))
        for (x, y), m, s in zip(field.centers, field.amplitudes, field.sigmas):
            fh.write("%.17g %.17g %.17g %.17g\n" % (x, y, m, s))


def read_impurities(path) -> ImpurityField:
    """Read a field written by :func:`write_impurities`."""
    seed = density = box = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" not in tok:
                        continue
                    key, val = tok.split("=", 1)
                    if val == "none":
                        continue
                    if key == "seed":
                        seed = int(val)
                    elif key == "density":
                        density = float(val)
                    elif key == "box":
                        box = float(val)
                continue
            rows.append([float(v) for v in line.split()])
    if not rows:
        return ImpurityField(np.empty((0, 2)), np.empty(0), np.empty(0),
                             seed=seed, density=density, box_half_width=box)
    arr = np.asarray(rows)
    return ImpurityField(arr[:, :2], arr[:, 2], arr[:, 3], seed=seed,
                         density=density, box_half_width=box)

"""Unperturbed (n_r, m) basis from 1D radial eigenproblems.

With psi = R(r) exp(i m phi)/sqrt(2 pi), the radial equation is

    -(1/2r) (r R')' + [V(r) + m^2/(2 r^2)] R = E R,   R(r_max) = 0.

It is discretized in conservative form on the offset grid r_j = (j + 1/2) h,
where the flux through r = 0 vanishes identically, and symmetrized with the
weight r (the symmetrized eigenvector is u = sqrt(r) R).  Solving at two
resolutions and Richardson extrapolating gives O(h^4) eigenvalues.  n_r
labels follow the eigenvalue index, which equals the node count by
Sturm-Liouville theory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .grid import Grid2D, Wavefunction
from .orbits import radial_action
from .potential import RadialPotential


@dataclass(frozen=True)
class RadialBasisState:
    """One unperturbed level: radial quantum number, |m|, energy, u(r)."""

    n_r: int
    m: int
    energy: float
    r: np.ndarray       # offset radial grid
    u: np.ndarray       # normalized: int u^2 dr = 1

    def wavefunction(self, grid: Grid2D, sign: int = 1) -> Wavefunction:
        """psi = u(r)/sqrt(r) e^{i sign |m| phi}/sqrt(2 pi) on a 2D grid."""
        if self.m == 0 and sign != 1:
            raise ValueError("m = 0 states have no sign partner")
        spline = CubicSpline(self.r, self.u, extrapolate=False)
        x, y = grid.meshgrid()
        rr = np.hypot(x, y)
        radial = np.zeros_like(rr)
        inside = (rr >= self.r[0]) & (rr <= self.r[-1])
        radial[inside] = spline(rr[inside]) / np.sqrt(rr[inside])
        # below the first grid point u ~ r^{|m|+1/2}
        small = rr < self.r[0]
        if np.any(small):
            u0 = self.u[0] / self.r[0] ** (self.m + 0.5)
            radial[small] = u0 * rr[small] ** self.m
        phi = np.arctan2(y, x)
        values = radial * np.exp(1j * sign * self.m * phi) / math.sqrt(2.0 * math.pi)
        return Wavefunction(grid, values.astype(complex)).normalized()


def _radial_levels(well, m, r_max, n_points, e_cut):
    """Conservative FD eigenvalues/vectors; returns (r, E, U) with u = sqrt(r) R."""
    h = r_max / n_points
    j = np.arange(n_points)
    r = (j + 0.5) * h
    r_lo = j * h          # cell faces; r_lo[0] = 0 kills the origin flux
    r_hi = (j + 1) * h
    diag = (r_lo + r_hi) / (2.0 * h * h * r) \
        + np.asarray(well(r), dtype=float) + m * m / (2.0 * r * r)
    off = -r_hi[:-1] / (2.0 * h * h * np.sqrt(r[:-1] * r[1:]))
    vals, vecs = eigh_tridiagonal(diag, off, select="v",
                                  select_range=(-np.inf, e_cut))
    return r, vals, vecs / math.sqrt(h)


def solve_radial_basis(well: RadialPotential, e_max: float, m_max: int | None = None,
                       r_max: float | None = None,
                       n_points: int = 1500) -> list[RadialBasisState]:
    """All (n_r, |m|) levels with extrapolated energy <= e_max.

    Each |m| > 0 entry represents an exactly degenerate +-m doublet.
    """
    if r_max is None:
        # classically forbidden margin: V(r_max) >= 3 e_max
        hi = 1.0
        while well(hi) < 3.0 * e_max:
            hi *= 2.0
        r_max = brentq(lambda r: well(r) - 3.0 * e_max, 0.0, hi, xtol=1e-10)
    states = []
    m = 0
    while True:
        # centrifugal floor: min over r of V + m^2/(2 r^2) must stay below e_max
        if m > 0:
            r_test = np.linspace(1e-3 * r_max, r_max, 400)
            floor = np.min(np.asarray(well(r_test)) + m * m / (2.0 * r_test ** 2))
            if floor > e_max:
                break
        _, e1, _ = _radial_levels(well, m, r_max, n_points, e_max * 1.5)
        r2, e2, u2 = _radial_levels(well, m, r_max, 2 * n_points, e_max * 1.5)
        n_lev = min(e1.size, e2.size)
        extrap = (4.0 * e2[:n_lev] - e1[:n_lev]) / 3.0
        for n_r in range(n_lev):
            if extrap[n_r] > e_max:
                break
            states.append(RadialBasisState(n_r=n_r, m=m,
                                           energy=float(extrap[n_r]),
                                           r=r2, u=u2[:, n_r]))
        if m_max is not None and m >= m_max:
            break
        m += 1
    states.sort(key=lambda s: s.energy)
    return states


def bohr_sommerfeld_energy(well: RadialPotential, n_r: int, m: int) -> float:
    """Semiclassical energy from the radial action rule I_r(E, L=|m|) = n_r + 1/2."""
    target = n_r + 0.5
    lo, hi = 1e-9, 1.0

    def act(e):
        try:
            return radial_action(well, e, abs(m))
        except Exception:
            return -target
    while act(hi) < target:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("Bohr-Sommerfeld bracketing failed")
    # lower bracket: action -> 0 at the effective-potential minimum
    while act(lo) > target:
        lo *= 0.5
    return brentq(lambda e: act(e) - target, lo, hi, xtol=1e-12, rtol=1e-13)

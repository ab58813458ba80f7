"""Degenerate perturbation theory in resonant subspaces of the radial basis.

A resonance p:q links basis states stepped by (n_r + k p, m - k q): their
Bohr-Sommerfeld energies are nearly equal, so the impurity potential acts
within a small near-degenerate subspace.  Diagonalizing the projected
impurity operator (DPT), optionally with the exact energy detunings on the
diagonal (qDPT), reconstructs scarred states from unperturbed ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import Grid2D, Spectrum, Wavefunction, overlap
from .potential import ImpurityField
from .radial_basis import RadialBasisState


@dataclass(frozen=True)
class SetMember:
    """One basis function of a resonant set: (n_r, signed m)."""

    n_r: int
    m: int                 # signed
    energy: float
    state: RadialBasisState


@dataclass
class ResonantSet:
    """Near-degenerate basis states linked by a p:q resonance."""

    p: int
    q: int
    center: tuple[int, int]
    members: list[SetMember]

    def __len__(self) -> int:
        return len(self.members)

    @property
    def energies(self) -> np.ndarray:
        return np.array([mb.energy for mb in self.members])

    @property
    def energy_spread(self) -> float:
        if not self.members:
            return 0.0
        e = self.energies
        return float(e.max() - e.min())

    @property
    def center_energy(self) -> float:
        for mb in self.members:
            if (mb.n_r, mb.m) == self.center:
                return mb.energy
        return float(np.mean(self.energies))


def build_resonant_set(basis: list[RadialBasisState], resonance: tuple[int, int],
                       center: tuple[int, int], k_range: int = 2,
                       energy_window: float = np.inf) -> ResonantSet:
    """Doublets (n_r + k p, +-|m - k q|) for |k| <= k_range around the center.

    Members missing from the basis or outside ``energy_window`` of the center
    energy are dropped; an empty set is returned explicitly if nothing
    survives.  m = 0 members enter once (singlets).
    """
    p, q = resonance
    lookup = {(s.n_r, s.m): s for s in basis}
    n0, m0 = center
    if (n0, abs(m0)) not in lookup:
        raise ValueError("center state (%d, %d) not in basis" % (n0, m0))
    e0 = lookup[(n0, abs(m0))].energy
    members = []
    for k in range(-k_range, k_range + 1):
        n_r = n0 + k * p
        m = m0 - k * q
        if n_r < 0:
            continue
        state = lookup.get((n_r, abs(m)))
        if state is None or abs(state.energy - e0) > energy_window:
            continue
        if m == 0:
            members.append(SetMember(n_r, 0, state.energy, state))
        else:
            members.append(SetMember(n_r, abs(m), state.energy, state))
            members.append(SetMember(n_r, -abs(m), state.energy, state))
    members.sort(key=lambda mb: (mb.energy, mb.n_r, mb.m))
    return ResonantSet(p=p, q=q, center=(n0, m0), members=members)


def resonant_set_at_energy(basis: list[RadialBasisState], orbit,
                           well, energy: float, k_range: int = 2,
                           m_window: float = 1.0,
                           energy_window: float = np.inf) -> ResonantSet:
    """Resonant set whose center tracks the resonance line at ``energy``.

    The center is the basis state closest in energy to ``energy`` among
    those whose angular momentum quantum number lies within ``m_window``
    of the classical resonant orbit's angular momentum at that energy.
    """
    from .orbits import orbit_at_energy

    l_star = orbit_at_energy(orbit, well, energy).angular_momentum
    candidates = [s for s in basis if abs(s.m - l_star) <= m_window]
    if not candidates:
        raise ValueError("no basis state with m within %.3g of L = %.3f"
                         % (m_window, l_star))
    center = min(candidates, key=lambda s: abs(s.energy - energy))
    return build_resonant_set(basis, (orbit.p, orbit.q),
                              (center.n_r, center.m), k_range=k_range,
                              energy_window=energy_window)


def _member_values(member: SetMember, x, y):
    """psi = R(r) e^{i m phi} / sqrt(2 pi) at arbitrary points."""
    st = member.state
    rr = np.hypot(x, y)
    spline = CubicSpline(st.r, st.u / np.sqrt(st.r), extrapolate=False)
    radial = np.zeros_like(rr)
    inside = (rr >= st.r[0]) & (rr <= st.r[-1])
    radial[inside] = spline(rr[inside])
    small = rr < st.r[0]
    if np.any(small):
        r0 = st.r[0]
        radial[small] = (st.u[0] / math.sqrt(r0)) * (rr[small] / r0) ** abs(member.m)
    phi = np.arctan2(y, x)
    return radial * np.exp(1j * member.m * phi) / math.sqrt(2.0 * math.pi)


def vimp_matrix(rset: ResonantSet, field: ImpurityField,
                spacing_factor: float = 0.25, cutoff: float = 6.0) -> np.ndarray:
    """<i|V_imp|j> over the set members by fine-grid 2D quadrature.

    The quadrature grid spacing is ``spacing_factor`` times the smallest
    bump sigma; the result is exactly Hermitian by construction.
    """
    n = len(rset)
    if n == 0 or len(field) == 0:
        return np.zeros((n, n), dtype=complex)
    extent = max(float(s.state.r[-1]) for s in rset.members)
    if field.sigmas.size:
        extent = min(extent, float(
            np.max(np.abs(field.centers)) + cutoff * float(field.sigmas.max())))
    h = spacing_factor * float(field.sigmas.min())
    npts = int(math.ceil(2.0 * extent / h))
    axis = -extent + (np.arange(npts) + 0.5) * (2.0 * extent / npts)
    cell = (2.0 * extent / npts) ** 2
    x, y = np.meshgrid(axis, axis, indexing="xy")
    v = field.on_grid(axis, axis, cutoff=cutoff)
    psi = [_member_values(mb, x, y) for mb in rset.members]
    w = np.empty((n, n), dtype=complex)
    for i in range(n):
        wvi = np.conj(psi[i]) * v
        for j in range(i, n):
            w[i, j] = np.sum(wvi * psi[j]) * cell
            w[j, i] = np.conj(w[i, j])
    return w


@dataclass
class DptResult:
    """Projected-operator eigenpairs and their 2D reconstructions."""

    mode: str                      # "dpt" or "qdpt"
    rset: ResonantSet
    eigenvalues: np.ndarray        # ascending
    coefficients: np.ndarray       # column k = eigenvector k over members
    states: list[Wavefunction]     # reconstructions on the solver grid
    vimp_expectation: np.ndarray   # <V_imp> = c^H W c per state


def dpt_diagonalize(rset: ResonantSet, field: ImpurityField, grid: Grid2D,
                    mode: str = "dpt", matrix: np.ndarray | None = None) -> DptResult:
    """Diagonalize the impurity operator in the resonant subspace.

    mode "dpt" uses the projected V_imp alone; "qdpt" adds the basis energy
    detunings (relative to the center energy) on the diagonal.
    """
    mode = mode.lower()
    if mode not in ("dpt", "qdpt"):
        raise ValueError("mode must be 'dpt' or 'qdpt'")
    w = vimp_matrix(rset, field) if matrix is None else np.asarray(matrix)
    op = w.copy()
    if mode == "qdpt":
        op = op + np.diag(rset.energies - rset.center_energy)
    vals, vecs = np.linalg.eigh(op)
    x, y = grid.meshgrid()
    member_psi = [_member_values(mb, x, y) for mb in rset.members]
    states = []
    for k in range(len(rset)):
        acc = np.zeros_like(member_psi[0])
        for c, psi in zip(vecs[:, k], member_psi):
            acc = acc + c * psi
        states.append(Wavefunction(grid, acc).normalized())
    vexp = np.real(np.einsum("ik,ij,jk->k", np.conj(vecs), w, vecs))
    return DptResult(mode=mode, rset=rset, eigenvalues=vals,
                     coefficients=vecs, states=states, vimp_expectation=vexp)


def match_to_spectrum(result: DptResult, spectrum: Spectrum,
                      energy_window: tuple[float, float] | None = None):
    """Pair each reconstruction with the exact eigenstate of maximal overlap.

    Returns a list of dicts (mode index, matched state index, energy,
    squared overlap), restricted to exact states inside ``energy_window``
    (default: the set's energy span padded by its spread).
    """
    if energy_window is None:
        e = result.rset.energies
        pad = max(result.rset.energy_spread, 1.0)
        energy_window = (float(e.min() - pad), float(e.max() + pad))
    candidates = spectrum.window(*energy_window)
    out = []
    for k, recon in enumerate(result.states):
        best, best_ov = -1, 0.0
        for idx in candidates:
            ov = abs(overlap(spectrum.states[idx], recon)) ** 2
            if ov > best_ov:
                best, best_ov = idx, ov
        out.append({"mode_index": k,
                    "eigenvalue": float(result.eigenvalues[k]),
                    "match_state": best,
                    "match_energy": (float(spectrum.energies[best])
                                     if best >= 0 else math.nan),
                    "overlap2": best_ov})
    return out


def vimp_rotation_curve(state: Wavefunction, field: ImpurityField,
                        theta_count: int = 64):
    """<psi|V_imp(theta)|psi> with the field rotated and the state fixed."""
    grid = state.grid
    dens = state.density() * grid.cell_area
    thetas = np.arange(theta_count) * (2.0 * math.pi / theta_count)
    curve = np.empty(theta_count)
    for i, th in enumerate(thetas):
        v = field.rotated(float(th)).on_grid(grid.axis, grid.axis)
        curve[i] = float(np.sum(dens * v))
    return thetas, curve


def write_resonant_set_csv(path, rset: ResonantSet) -> None:
    with open(path, "w") as fh:
        fh.write("k,n_r,m,energy\n")
        p, q = rset.p, rset.q
        n0, m0 = rset.center
        for mb in rset.members:
            k = (mb.n_r - n0) // p if p else 0
            fh.write("%d,%d,%d,%.17g\n" % (k, mb.n_r, mb.m, mb.energy))


def write_dpt_csv(path, result: DptResult, matches) -> None:
    with open(path, "w") as fh:
        fh.write("mode,eigenvalue,vimp_expect,match_state,match_overlap2\n")
        for k, rec in enumerate(matches):
            fh.write("%s,%.17g,%.17g,%d,%.17g\n" % (
                result.mode, result.eigenvalues[k],
                result.vimp_expectation[k], rec["match_state"],
                rec["overlap2"]))


def write_rotation_csv(path, thetas, curve) -> None:
    with open(path, "w") as fh:
        fh.write("theta,vimp_expect\n")
        for th, v in zip(thetas, curve):
            fh.write("%.17g,%.17g\n" % (th, v))

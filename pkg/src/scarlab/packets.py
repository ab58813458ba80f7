"""Gaussian wave packets on periodic orbits and their recurrence measures.

A packet is defined grid-free: center and momentum on the orbit, and a 2x2
spatial covariance aligned with the orbit direction.  The same object feeds
the quantum side (grid amplitudes, autocorrelation, eigenstate decomposition)
and the classical side (Wigner phase-space sampling).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import solver as _solver
from .dynamics import integrate_ensemble
from .grid import Grid2D, Spectrum, Wavefunction, overlap
from .orbits import OrbitSpec, orbit_at_energy, orbit_start
from .potential import ImpurityField, RadialPotential, empty_field

# Gauss-Hermite rule used for expectation values over the Gaussian envelope
_GH_POINTS = 40


@dataclass(frozen=True)
class GaussianPacket:
    """A minimum-uncertainty Gaussian packet (hbar = 1).

    ``covariance`` is the covariance of the probability density |psi|^2;
    psi(x) = N exp(-(x-q0)^T Sigma^-1 (x-q0)/4 + i p0.(x-q0)).  The Wigner
    distribution is then Gaussian with momentum covariance Sigma^-1/4.
    """

    center: tuple[float, float]
    momentum: tuple[float, float]
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (2, 2) or abs(cov[0, 1] - cov[1, 0]) > 1e-12:
            raise ValueError("covariance must be symmetric 2x2")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "covariance", cov)

    @property
    def momentum_covariance(self) -> np.ndarray:
        return np.linalg.inv(self.covariance) / 4.0

    def envelope(self, x, y):
        """Unnormalized real envelope exp(-(x-q0)^T Sigma^-1 (x-q0)/4)."""
        inv = np.linalg.inv(self.covariance)
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        q = inv[0, 0] * dx * dx + 2.0 * inv[0, 1] * dx * dy + inv[1, 1] * dy * dy
        return np.exp(-0.25 * q)

    def on_grid(self, grid: Grid2D) -> Wavefunction:
        """Normalized amplitudes on the grid; refuses leaking packets."""
        sig = np.sqrt(np.diag(self.covariance))
        for c, s in zip(self.center, sig):
            if abs(c) + 5.0 * s > grid.half_width:
                raise ValueError(
                    "packet tail (5 sigma) extends past the grid edge; "
                    "use a larger grid or smaller widths")
        x, y = grid.meshgrid()
        phase = (self.momentum[0] * (x - self.center[0])
                 + self.momentum[1] * (y - self.center[1]))
        values = self.envelope(x, y) * np.exp(1j * phase)
        return Wavefunction(grid, values).normalized()

    def mean_energy(self, well: RadialPotential,
                    field: ImpurityField | None = None) -> float:
        """<H> = |p0|^2/2 + tr(Sigma^-1)/8 + <V> (Gauss-Hermite quadrature)."""
        p2 = self.momentum[0] ** 2 + self.momentum[1] ** 2
        width_kinetic = float(np.trace(np.linalg.inv(self.covariance))) / 8.0
        return 0.5 * p2 + width_kinetic + self.mean_potential(well, field)

    def mean_potential(self, well: RadialPotential,
                       field: ImpurityField | None = None) -> float:
        nodes, weights = np.polynomial.hermite_e.hermegauss(_GH_POINTS)
        u, v = np.meshgrid(nodes, nodes, indexing="ij")
        w2 = np.outer(weights, weights) / (2.0 * math.pi)
        root = np.linalg.cholesky(self.covariance)
        pts = np.stack([u.ravel(), v.ravel()], axis=1) @ root.T
        pts += np.asarray(self.center)
        r = np.hypot(pts[:, 0], pts[:, 1])
        vals = np.asarray(well(r), dtype=float)
        if field is not None and len(field):
            vals = vals + field.value(pts)
        return float(np.sum(w2.ravel() * vals))

    def wigner_value(self, positions, momenta):
        """Unnormalized Wigner weight G(q, p) for arrays of phase points."""
        inv_q = np.linalg.inv(self.covariance)
        inv_p = np.linalg.inv(self.momentum_covariance)
        dq = np.asarray(positions) - np.asarray(self.center)
        dp = np.asarray(momenta) - np.asarray(self.momentum)
        aq = (inv_q[0, 0] * dq[..., 0] ** 2 + 2 * inv_q[0, 1] * dq[..., 0] * dq[..., 1]
              + inv_q[1, 1] * dq[..., 1] ** 2)
        ap = (inv_p[0, 0] * dp[..., 0] ** 2 + 2 * inv_p[0, 1] * dp[..., 0] * dp[..., 1]
              + inv_p[1, 1] * dp[..., 1] ** 2)
        return np.exp(-0.5 * (aq + ap))

    def wigner_sample(self, n_samples: int, seed: int):
        """Draw (positions, momenta) from the Wigner distribution.

        The stream order is pinned (position block then momentum block) so a
        seed always yields the same ensemble.
        """
        rng = np.random.Generator(np.random.PCG64(seed))
        zq = rng.standard_normal((n_samples, 2))
        zp = rng.standard_normal((n_samples, 2))
        lq = np.linalg.cholesky(self.covariance)
        lp = np.linalg.cholesky(self.momentum_covariance)
        return (np.asarray(self.center) + zq @ lq.T,
                np.asarray(self.momentum) + zp @ lp.T)


def packet_on_orbit(orbit: OrbitSpec, well: RadialPotential, alpha: float = 0.0,
                    energy: float | None = None,
                    width_across: float | None = None,
                    width_along: float | None = None) -> GaussianPacket:
    """Gaussian packet launched from the orbit's alpha-rotated start point.

    At alpha = 0 the packet sits on the positive y axis (inner turning
    point) heading in +x.  Default widths follow the orbit geometry:
    width_across = 0.25 (r_out - r_in), width_along = 2 width_across.  The
    momentum magnitude is adjusted so that <H> equals the target energy
    exactly, absorbing the finite-width kinetic and potential corrections.
    """
    span = orbit.r_out - orbit.r_in
    if width_across is None:
        width_across = 0.25 * span
    if width_along is None:
        width_along = 2.0 * width_across
    if width_across <= 0 or width_along <= 0:
        raise ValueError("packet widths must be positive")
    energy = orbit.energy if energy is None else float(energy)

    pos, mom = orbit_start(orbit, alpha)
    tangent = mom / np.linalg.norm(mom)
    normal = np.array([-tangent[1], tangent[0]])
    frame = np.stack([tangent, normal], axis=1)
    cov = frame @ np.diag([width_along ** 2, width_across ** 2]) @ frame.T

    probe = GaussianPacket(tuple(pos), (0.0, 0.0), cov)
    width_kinetic = float(np.trace(np.linalg.inv(cov))) / 8.0
    budget = 2.0 * (energy - probe.mean_potential(well) - width_kinetic)
    if budget <= 0:
        raise ValueError("packet widths too large for the target energy: "
                         "no kinetic budget left at the launch point")
    p0 = math.sqrt(budget) * tangent
    return GaussianPacket(tuple(pos), (float(p0[0]), float(p0[1])), cov)


@dataclass
class RecurrenceSeries:
    """Recurrence strengths on a common time grid (in units of the period)."""

    period: float
    times: np.ndarray              # absolute time
    quantum: np.ndarray | None = None       # |A(t)|^2
    classical: np.ndarray | None = None     # I(t)
    classical_sigma: np.ndarray | None = None

    @property
    def t_over_period(self) -> np.ndarray:
        return self.times / self.period


def autocorrelation(packet: GaussianPacket, well: RadialPotential,
                    field: ImpurityField | None, grid: Grid2D, t_end: float,
                    dt_sample: float, dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """|A(t)|^2 = |<phi(0)|phi(t)>|^2 on a uniform sample grid."""
    psi0 = packet.on_grid(grid)
    if dt is None:
        e_mean = packet.mean_energy(well, field)
        dt = _solver.suggest_timestep(e_mean, max(dt_sample, 1e-12))
        dt = dt_sample / max(1, math.ceil(dt_sample / dt))
    times = np.arange(0.0, t_end + 0.5 * dt_sample, dt_sample)
    out = _solver.propagate(psi0, well, field, dt, t_end, sample_times=times)
    amp = np.array([abs(overlap(psi0, w)) ** 2 for _, w in out])
    return np.array([t for t, _ in out]), amp


def classical_recurrence(packet: GaussianPacket, well: RadialPotential,
                         field: ImpurityField | None, n_samples: int,
                         seed: int, times, dt: float | None = None):
    """Monte-Carlo phase-space recurrence I(t), normalized so I(0) = 1.

    Returns (times, I, sigma) where sigma is the Monte-Carlo standard error
    of I(t).  Deterministic for a given seed and sample count; the ensemble
    is propagated in parallel but the reduction order is fixed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    field = field if field is not None else empty_field()
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    if dt is None:
        dt = times[-1] / 8000.0
    positions, momenta = packet.wigner_sample(n_samples, seed)
    t_grid, traj = integrate_ensemble(positions, momenta, well, field, dt, times)
    g0 = packet.wigner_value(positions, momenta)
    s0 = float(np.sum(g0))
    series = np.empty(t_grid.size)
    sigma = np.empty(t_grid.size)
    for i in range(t_grid.size):
        g = packet.wigner_value(traj[i, :, :2], traj[i, :, 2:])
        series[i] = float(np.sum(g)) / s0
        sigma[i] = float(np.std(g)) * math.sqrt(n_samples) / s0
    series[0] = 1.0  # exact by construction; guard against rounding
    return t_grid, series, sigma


@dataclass
class Decomposition:
    """Eigenbasis weights of a packet: w_k = |<psi_k|phi>|^2."""

    indices: np.ndarray
    energies: np.ndarray
    weights: np.ndarray
    out_of_window_weight: float

    def reconstruct_autocorrelation(self, times) -> np.ndarray:
        """|A(t)|^2 from the window part of the spectral sum."""
        times = np.asarray(times, dtype=float)
        amp = (self.weights[None, :]
               * np.exp(-1j * np.outer(times, self.energies))).sum(axis=1)
        return np.abs(amp) ** 2


def scarmometer(packet_or_state, spectrum: Spectrum) -> Decomposition:
    """Decompose a packet (or any wavefunction) over the solved eigenbasis."""
    if isinstance(packet_or_state, GaussianPacket):
        phi = packet_or_state.on_grid(spectrum.grid)
    else:
        phi = packet_or_state
    coeffs = np.array([overlap(s, phi) for s in spectrum.states])
    weights = np.abs(coeffs) ** 2
    total = float(np.sum(weights))
    return Decomposition(indices=np.arange(len(spectrum)),
                         energies=np.asarray(spectrum.energies, dtype=float),
                         weights=weights,
                         out_of_window_weight=max(0.0, 1.0 - total))


SCAR_THRESHOLD = 3e-3  # squared-overlap cut below which states are excluded


@dataclass
class OrientationScan:
    """Per-eigenstate best packet orientation over [0, 2 pi / q)."""

    orbit: OrbitSpec
    alpha_grid: np.ndarray
    indices: np.ndarray
    energies: np.ndarray
    alpha_max: np.ndarray
    overlap2: np.ndarray
    excluded: np.ndarray  # True where overlap2 < SCAR_THRESHOLD
    overlap2_grid: np.ndarray | None = None  # (n_states, n_alpha) full scan

    def included(self) -> np.ndarray:
        return ~self.excluded

    def peak_alpha(self, row: int) -> float:
        """Sub-grid best orientation of one state by parabolic interpolation.

        Fits a parabola through the circular argmax bin and its two
        neighbours; falls back to the raw grid argmax for a flat profile.
        """
        if self.overlap2_grid is None:
            raise ValueError("scan does not carry the full overlap2 grid")
        vals = np.asarray(self.overlap2_grid[row], dtype=float)
        n = vals.size
        j = int(np.argmax(vals))
        y1, y2, y3 = vals[(j - 1) % n], vals[j], vals[(j + 1) % n]
        denom = y1 - 2.0 * y2 + y3
        shift = 0.0 if denom == 0.0 else 0.5 * (y1 - y3) / denom
        step = self.alpha_grid[1] - self.alpha_grid[0]
        period = n * step
        return float(((j + shift) * step) % period)


def orientation_sweep(orbit: OrbitSpec, well: RadialPotential,
                      spectrum: Spectrum, state_indices=None,
                      alpha_count: int = 24,
                      width_across: float | None = None,
                      width_along: float | None = None,
                      threshold: float = SCAR_THRESHOLD) -> OrientationScan:
    """Scan packet orientation against each eigenstate in the window.

    For every selected eigenstate the packet energy is matched to the state
    energy (using the unperturbed well only) and the squared overlap is
    evaluated on a uniform alpha grid over one symmetry window [0, 2 pi/q).
    """
    if alpha_count < 8:
        raise ValueError("alpha grid must have at least 8 points")
    if state_indices is None:
        state_indices = np.arange(len(spectrum))
    state_indices = np.asarray(state_indices, dtype=int)
    alphas = np.arange(alpha_count) * (2.0 * math.pi / orbit.q) / alpha_count
    grid = spectrum.grid

    alpha_max = np.empty(state_indices.size)
    best = np.empty(state_indices.size)
    energies = np.empty(state_indices.size)
    full = np.empty((state_indices.size, alpha_count))
    for row, k in enumerate(state_indices):
        e_k = float(spectrum.energies[k])
        energies[row] = e_k
        psi_k = spectrum.states[k]
        scaled = orbit_at_energy(orbit, well, e_k)
        vals = full[row]
        for i, a in enumerate(alphas):
            packet = packet_on_orbit(scaled, well, alpha=float(a), energy=e_k,
                                     width_across=width_across,
                                     width_along=width_along)
            vals[i] = abs(overlap(psi_k, packet.on_grid(grid))) ** 2
        i_best = int(np.argmax(vals))
        alpha_max[row] = alphas[i_best]
        best[row] = vals[i_best]
    return OrientationScan(orbit=orbit, alpha_grid=alphas,
                           indices=state_indices, energies=energies,
                           alpha_max=alpha_max, overlap2=best,
                           excluded=best < threshold, overlap2_grid=full)


def scar_branches(scan: OrientationScan, quantile: float = 0.85,
                  null_quantile: float = 0.5, min_z: float = 3.0,
                  min_members: int = 8):
    """Cluster the most scarred sweep rows into persistent orientation branches.

    Scarred states betray themselves in two complementary ways: a large
    absolute best overlap with the orbit packet (strong, broad scars) and a
    large *selectivity* of the orientation profile, max over alpha divided by
    the median over alpha (weaker scars locked to a narrow orientation
    channel).  Both channels are scanned: the top ``1 - quantile`` fraction of
    states by the channel score is histogrammed by preferred orientation on
    the circular alpha grid and compared, bin by bin, against a null built
    from the bottom ``null_quantile`` fraction of the *same* channel.  Using
    the weak states as the null absorbs any orientation bias of the
    unscarred background.  Every smoothed local maximum whose three-bin
    occupancy exceeds the null expectation by at least ``min_z`` binomial
    standard deviations, with at least ``min_members`` member states, becomes
    a branch; overlapping detections from the two channels are merged
    (keeping the more significant one).

    Requires a scan carrying the full ``overlap2_grid``.  Returns a list of
    dicts sorted by descending significance, one per branch: ``alpha``
    (center), ``height`` (the binomial z-score), ``channel`` ("overlap" or
    "selectivity"), ``count`` (member states), ``energy_span`` (energy range
    of the members), ``states`` (member indices into the spectrum).
    """
    if not 0.0 <= quantile < 1.0:
        raise ValueError("quantile must lie in [0, 1)")
    if scan.overlap2_grid is None:
        raise ValueError("scan does not carry the full overlap2 grid; "
                         "rerun orientation_sweep")
    grid = np.asarray(scan.overlap2_grid, dtype=float)
    n_states, n_bins = grid.shape
    bins_all = np.argmax(grid, axis=1)
    selectivity = grid.max(axis=1) / np.maximum(
        np.median(grid, axis=1), 1e-300)
    branches = []
    for channel, score in (("overlap", scan.overlap2),
                           ("selectivity", selectivity)):
        strong = score >= np.quantile(score, quantile)
        weak = score < np.quantile(score, null_quantile)
        n_strong = int(strong.sum())
        if n_strong == 0 or weak.sum() == 0:
            continue
        null = np.bincount(bins_all[weak], minlength=n_bins).astype(float)
        null = (np.roll(null, 1) + 2.0 * null + np.roll(null, -1)) / 4.0
        null = np.maximum(null, 0.5)  # floor so empty null bins stay testable
        hist = np.bincount(bins_all[strong], minlength=n_bins).astype(float)
        smooth = (np.roll(hist, 1) + 2.0 * hist + np.roll(hist, -1)) / 4.0
        for j in range(n_bins):
            # strict local max; ties broken toward the lower bin index
            if not (smooth[j] > smooth[(j - 1) % n_bins]
                    and smooth[j] >= smooth[(j + 1) % n_bins]):
                continue
            tube = [(j - 1) % n_bins, j, (j + 1) % n_bins]
            p = null[tube].sum() / null.sum()
            obs = hist[tube].sum()
            expect = n_strong * p
            z = (obs - expect) / math.sqrt(max(expect * (1.0 - p), 1e-12))
            dist = np.abs((bins_all - j + n_bins // 2) % n_bins
                          - n_bins // 2)
            members = strong & (dist <= 1)
            if z < min_z or int(members.sum()) < min_members:
                continue
            span = (float(np.ptp(scan.energies[members]))
                    if members.any() else 0.0)
            branches.append({
                "alpha": float(scan.alpha_grid[j]),
                "height": float(z),
                "channel": channel,
                "count": int(members.sum()),
                "energy_span": span,
                "states": scan.indices[members],
            })
    # merge detections of the same orientation from the two channels
    step = scan.alpha_grid[1] - scan.alpha_grid[0]
    branches.sort(key=lambda b: -b["height"])
    kept = []
    for b in branches:
        close = any(
            min(abs(b["alpha"] - k["alpha"]),
                n_bins * step - abs(b["alpha"] - k["alpha"])) <= 1.5 * step
            for k in kept)
        if not close:
            kept.append(b)
    return kept


def amplitude_sweep(field: ImpurityField, m_values, orbit: OrbitSpec,
                    well: RadialPotential, spectra: dict,
                    energy_window: tuple[float, float],
                    alpha_count: int = 24):
    """Track the strongest scar's orientation across impurity amplitudes.

    ``spectra`` maps each amplitude M to a solved Spectrum of the same
    realization rescaled via ``field.with_amplitude(M)`` (callers own the
    expensive solves so they can be cached).  Returns one record per M:
    (M, state index, energy, alpha_max, overlap2).
    """
    out = []
    for m in m_values:
        spec = spectra[m]
        window = spec.window(*energy_window)
        scan = orientation_sweep(orbit, well, spec, state_indices=window,
                                 alpha_count=alpha_count)
        row = int(np.argmax(scan.overlap2))
        out.append({"amplitude": float(m),
                    "state": int(scan.indices[row]),
                    "energy": float(scan.energies[row]),
                    "alpha_max": float(scan.alpha_max[row]),
                    "overlap2": float(scan.overlap2[row])})
    return out


def write_sweep_csv(path, scan: OrientationScan) -> None:
    with open(path, "w") as fh:
        fh.write("state,energy,alpha_max,overlap2,excluded\n")
        for i in range(scan.indices.size):
            fh.write("%d,%.17g,%.17g,%.17g,%d\n" % (
                scan.indices[i], scan.energies[i], scan.alpha_max[i],
                scan.overlap2[i], int(scan.excluded[i])))


def write_recurrence_csv(path, series: RecurrenceSeries) -> None:
    with open(path, "w") as fh:
        fh.write("t_over_T,quantum,classical\n")
        q = series.quantum
        c = series.classical
        for i, t in enumerate(series.t_over_period):
            fh.write("%.17g,%s,%s\n" % (
                t,
                "%.17g" % q[i] if q is not None else "",
                "%.17g" % c[i] if c is not None else ""))


def write_decomposition_csv(path, dec: Decomposition) -> None:
    with open(path, "w") as fh:
        fh.write("state,energy,weight\n")
        for i in range(dec.indices.size):
            fh.write("%d,%.17g,%.17g\n" % (dec.indices[i], dec.energies[i],
                                           dec.weights[i]))

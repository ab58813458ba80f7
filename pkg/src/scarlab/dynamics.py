"""Classical propagation in the perturbed well.

A 6th-order symplectic composition scheme (Blanes & Moan splitting
coefficients) drives single trajectories, trajectory ensembles, and the
variational (tangent) flow used for orbit stability.  The hot loops are
numba-compiled; ensembles are parallel over initial conditions with a
fixed-order reduction, so results do not depend on the worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from scipy.optimize import least_squares

from .errors import NotPeriodicError
from .orbits import OrbitSpec
from .potential import CoshWell, ImpurityField, PowerLaw, RadialPotential, empty_field

# 6th-order palindromic composition coefficients (Blanes & Moan 2002).
_BM6_HALF = np.array([
    0.050262764400392, 0.098553683500650, 0.314960616927694,
    -0.447346482695478, 0.492426372489876, -0.425118767797691,
    0.237063913978122, 0.195602488600053, 0.346358189850727,
    -0.362762779254345,
])
_BM6_FULL = np.concatenate([_BM6_HALF, _BM6_HALF[::-1]])
# merge the alternating first-order maps into kick/drift substeps
_KICK = np.concatenate([[_BM6_FULL[0]],
                        _BM6_FULL[1:-1:2] + _BM6_FULL[2:-1:2],
                        [_BM6_FULL[-1]]])
_DRIFT = _BM6_FULL[0::2] + _BM6_FULL[1::2]

_BUMP_CUTOFF_SIGMAS = 8.0  # force truncation; relative error ~ exp(-32)

_KIND_POWER = 0
_KIND_COSH = 1


@dataclass(frozen=True)
class PhasePoint:
    """A point in phase space."""

    position: np.ndarray
    momentum: np.ndarray


@dataclass(frozen=True)
class StabilityReport:
    """One-period linear stability of a (numerically) closed orbit."""

    initial: PhasePoint
    period: float
    chi: float
    monodromy_eigenvalues: tuple[complex, complex]
    monodromy: np.ndarray
    closure_error: float


def _well_params(well: RadialPotential) -> tuple[int, float, float]:
    if isinstance(well, PowerLaw):
        return _KIND_POWER, well.coefficient, well.exponent
    if isinstance(well, CoshWell):
        return _KIND_COSH, well.coefficient, 0.0
    raise TypeError("unsupported well type %r" % type(well))


def _field_params(field: ImpurityField):
    n = len(field)
    bx = np.ascontiguousarray(field.centers[:, 0]) if n else np.empty(0)
    by = np.ascontiguousarray(field.centers[:, 1]) if n else np.empty(0)
    amp = np.ascontiguousarray(field.amplitudes)
    inv2s2 = 0.5 / field.sigmas ** 2 if n else np.empty(0)
    cut2 = (_BUMP_CUTOFF_SIGMAS * field.sigmas) ** 2 if n else np.empty(0)
    return bx, by, amp, np.ascontiguousarray(inv2s2), np.ascontiguousarray(cut2)


@njit(cache=True)
def _accel(x, y, kind, coeff, expo, bx, by, amp, inv2s2, cut2):
    r = math.sqrt(x * x + y * y)
    if r < 1e-300:
        ax = 0.0
        ay = 0.0
    elif kind == _KIND_POWER:
        s = -coeff * expo * r ** (expo - 2.0)
        ax = s * x
        ay = s * y
    else:
        s = -coeff * math.sinh(r) / r
        ax = s * x
        ay = s * y
    for i in range(bx.shape[0]):
        dx = x - bx[i]
        dy = y - by[i]
        d2 = dx * dx + dy * dy
        if d2 < cut2[i]:
            w = amp[i] * math.exp(-d2 * inv2s2[i]) * 2.0 * inv2s2[i]
            ax += w * dx
            ay += w * dy
    return ax, ay


@njit(cache=True)
def _potential(x, y, kind, coeff, expo, bx, by, amp, inv2s2, cut2):
    r = math.sqrt(x * x + y * y)
    if kind == _KIND_POWER:
        v = coeff * r ** expo
    else:
        v = coeff * (math.cosh(r) - 1.0)
    for i in range(bx.shape[0]):
        dx = x - bx[i]
        dy = y - by[i]
        d2 = dx * dx + dy * dy
        if d2 < cut2[i]:
            v += amp[i] * math.exp(-d2 * inv2s2[i])
    return v


@njit(cache=True)
def _hessian(x, y, kind, coeff, expo, bx, by, amp, inv2s2, cut2):
    r2 = x * x + y * y
    r = math.sqrt(r2)
    if r < 1e-12:
        r = 1e-12
        r2 = r * r
    if kind == _KIND_POWER:
        vp = coeff * expo * r ** (expo - 1.0)
        vpp = coeff * expo * (expo - 1.0) * r ** (expo - 2.0)
    else:
        vp = coeff * math.sinh(r)
        vpp = coeff * math.cosh(r)
    t = vp / r
    d = (vpp - t) / r2
    hxx = t + d * x * x
    hyy = t + d * y * y
    hxy = d * x * y
    for i in range(bx.shape[0]):
        dx = x - bx[i]
        dy = y - by[i]
        d2 = dx * dx + dy * dy
        if d2 < cut2[i]:
            e = amp[i] * math.exp(-d2 * inv2s2[i])
            a2 = 2.0 * inv2s2[i]
            hxx += e * (a2 * a2 * dx * dx - a2)
            hyy += e * (a2 * a2 * dy * dy - a2)
            hxy += e * a2 * a2 * dx * dy
    return hxx, hxy, hyy


@njit(cache=True)
def _step(x, y, px, py, dt, kick, drift, kind, coeff, expo,
          bx, by, amp, inv2s2, cut2):
    for j in range(drift.shape[0]):
        ax, ay = _accel(x, y, kind, coeff, expo, bx, by, amp, inv2s2, cut2)
        px += kick[j] * dt * ax
        py += kick[j] * dt * ay
        x += drift[j] * dt * px
        y += drift[j] * dt * py
    ax, ay = _accel(x, y, kind, coeff, expo, bx, by, amp, inv2s2, cut2)
    px += kick[drift.shape[0]] * dt * ax
    py += kick[drift.shape[0]] * dt * ay
    return x, y, px, py


@njit(cache=True)
def _run(x, y, px, py, dt, n_steps, kick, drift, kind, coeff, expo,
         bx, by, amp, inv2s2, cut2):
    for _ in range(n_steps):
        x, y, px, py = _step(x, y, px, py, dt, kick, drift, kind, coeff, expo,
                             bx, by, amp, inv2s2, cut2)
    return x, y, px, py


@njit(cache=True)
def _run_sampled(x, y, px, py, dt, step_counts, kick, drift, kind, coeff, expo,
                 bx, by, amp, inv2s2, cut2):
    out = np.empty((step_counts.shape[0] + 1, 4))
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = px
    out[0, 3] = py
    for k in range(step_counts.shape[0]):
        for _ in range(step_counts[k]):
            x, y, px, py = _step(x, y, px, py, dt, kick, drift, kind, coeff,
                                 expo, bx, by, amp, inv2s2, cut2)
        out[k + 1, 0] = x
        out[k + 1, 1] = y
        out[k + 1, 2] = px
        out[k + 1, 3] = py
    return out


@njit(cache=True, parallel=True)
def _run_ensemble(xs, ys, pxs, pys, dt, step_counts, kick, drift, kind, coeff,
                  expo, bx, by, amp, inv2s2, cut2):
    n = xs.shape[0]
    nt = step_counts.shape[0] + 1
    out = np.empty((nt, n, 4))
    for i in prange(n):
        traj = _run_sampled(xs[i], ys[i], pxs[i], pys[i], dt, step_counts,
                            kick, drift, kind, coeff, expo,
                            bx, by, amp, inv2s2, cut2)
        for k in range(nt):
            out[k, i, 0] = traj[k, 0]
            out[k, i, 1] = traj[k, 1]
            out[k, i, 2] = traj[k, 2]
            out[k, i, 3] = traj[k, 3]
    return out


@njit(cache=True)
def _run_tangent(x, y, px, py, mono, dt, n_steps, kick, drift, kind, coeff,
                 expo, bx, by, amp, inv2s2, cut2):
    # tangent flow uses the analytic Hessian of the same split potential
    for _ in range(n_steps):
        for j in range(drift.shape[0] + 1):
            c = kick[j] * dt
            ax, ay = _accel(x, y, kind, coeff, expo, bx, by, amp, inv2s2, cut2)
            hxx, hxy, hyy = _hessian(x, y, kind, coeff, expo, bx, by, amp,
                                     inv2s2, cut2)
            px += c * ax
            py += c * ay
            for col in range(4):
                dq0 = mono[0, col]
                dq1 = mono[1, col]
                mono[2, col] -= c * (hxx * dq0 + hxy * dq1)
                mono[3, col] -= c * (hxy * dq0 + hyy * dq1)
            if j < drift.shape[0]:
                d = drift[j] * dt
                x += d * px
                y += d * py
                for col in range(4):
                    mono[0, col] += d * mono[2, col]
                    mono[1, col] += d * mono[3, col]
    return x, y, px, py


def total_energy(point: PhasePoint, well: RadialPotential,
                 field: ImpurityField | None = None) -> float:
    """Kinetic plus potential energy of a phase point."""
    field = field if field is not None else empty_field()
    kind, coeff, expo = _well_params(well)
    bx, by, amp, inv2s2, cut2 = _field_params(field)
    x, y = point.position
    px, py = point.momentum
    return 0.5 * (px * px + py * py) + _potential(
        x, y, kind, coeff, expo, bx, by, amp, inv2s2, cut2)


def _steps_for_times(times, dt):
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    edges = np.round(times / dt).astype(np.int64)
    return times, np.diff(edges)


def integrate(initial: PhasePoint, well: RadialPotential, field: ImpurityField,
              dt: float, t_end: float, sample_times=None):
    """Propagate one phase point; returns (times, positions, momenta).

    Sample times are rounded to the nearest multiple of dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if sample_times is None:
        sample_times = [t_end]
    kind, coeff, expo = _well_params(well)
    bx, by, amp, inv2s2, cut2 = _field_params(field)
    times, counts = _steps_for_times(sample_times, dt)
    x, y = initial.position
    px, py = initial.momentum
    out = _run_sampled(float(x), float(y), float(px), float(py), dt, counts,
                       _KICK, _DRIFT, kind, coeff, expo, bx, by, amp,
                       inv2s2, cut2)
    return times, out[:, :2].copy(), out[:, 2:].copy()


def integrate_ensemble(positions, momenta, well: RadialPotential,
                       field: ImpurityField, dt: float, sample_times):
    """Propagate many phase points in parallel.

    Returns (times, traj) with traj of shape (n_times, n_points, 4) holding
    (x, y, px, py).  Each trajectory is deterministic, and downstream
    reductions over the point axis are done in fixed array order, so the
    thread count cannot change results.
    """
    kind, coeff, expo = _well_params(well)
    bx, by, amp, inv2s2, cut2 = _field_params(field)
    times, counts = _steps_for_times(sample_times, dt)
    pos = np.ascontiguousarray(positions, dtype=float)
    mom = np.ascontiguousarray(momenta, dtype=float)
    out = _run_ensemble(pos[:, 0], pos[:, 1], mom[:, 0], mom[:, 1], dt,
                        counts, _KICK, _DRIFT, kind, coeff, expo, bx, by,
                        amp, inv2s2, cut2)
    return times, out


def monodromy_matrix(initial: PhasePoint, period: float, well: RadialPotential,
                     field: ImpurityField, dt: float):
    """One-period fundamental matrix of the variational flow.

    Returns (final_point, M) where M maps initial to final tangent vectors.
    """
    kind, coeff, expo = _well_params(well)
    bx, by, amp, inv2s2, cut2 = _field_params(field)
    n_steps = max(1, int(round(period / dt)))
    dt_eff = period / n_steps
    mono = np.eye(4)
    x, y = map(float, initial.position)
    px, py = map(float, initial.momentum)
    x, y, px, py = _run_tangent(x, y, px, py, mono, dt_eff, n_steps, _KICK,
                                _DRIFT, kind, coeff, expo, bx, by, amp,
                                inv2s2, cut2)
    final = PhasePoint(np.array([x, y]), np.array([px, py]))
    return final, mono


def stability_exponent(initial: PhasePoint, period: float,
                       well: RadialPotential, field: ImpurityField,
                       dt: float | None = None,
                       closure_tol: float = 1e-4) -> StabilityReport:
    """Stability exponent chi = log |largest monodromy eigenvalue|.

    The initial condition must return to itself after ``period`` to within
    ``closure_tol`` relative to the orbit size, otherwise NotPeriodicError
    is raised.  Two unit eigenvalues (flow and energy directions) are
    discarded; chi is taken from the remaining reduced pair.
    """
    if dt is None:
        dt = period / 8000.0
    final, mono = monodromy_matrix(initial, period, well, field, dt)
    scale = max(np.max(np.abs(initial.position)), np.max(np.abs(initial.momentum)))
    err = math.hypot(*(final.position - initial.position)) \
        + math.hypot(*(final.momentum - initial.momentum))
    if err > closure_tol * scale:
        raise NotPeriodicError("orbit does not close: |dz| = %.3g (tol %.3g)"
                               % (err, closure_tol * scale))
    eigs = np.linalg.eigvals(mono)
    # drop the two eigenvalues closest to 1 (flow / energy-shell pair)
    order = np.argsort(np.abs(eigs - 1.0))
    reduced = eigs[order[2:]]
    lam = reduced[np.argmax(np.abs(reduced))]
    partner = reduced[np.argmin(np.abs(reduced))]
    chi = float(np.log(max(np.abs(lam), 1.0)))
    return StabilityReport(initial=initial, period=period, chi=chi,
                           monodromy_eigenvalues=(complex(lam), complex(partner)),
                           monodromy=mono, closure_error=err)


def close_orbit(initial: PhasePoint, period: float, well: RadialPotential,
                field: ImpurityField, dt: float | None = None,
                xtol: float = 1e-12) -> tuple[PhasePoint, float]:
    """Newton-polish an approximately periodic initial condition.

    Adjusts (position, momentum, period) so the trajectory closes on
    itself; the phase along the orbit is pinned by keeping the correction
    orthogonal to the initial flow direction.
    """
    z0 = np.concatenate([initial.position, initial.momentum, [period]])
    kind, coeff, expo = _well_params(well)
    bx, by, amp, inv2s2, cut2 = _field_params(field)
    if dt is None:
        dt = period / 8000.0
    ax, ay = _accel(z0[0], z0[1], kind, coeff, expo, bx, by, amp, inv2s2, cut2)
    flow = np.array([z0[2], z0[3], ax, ay])
    flow /= np.linalg.norm(flow)
    scale = np.linalg.norm(z0[:4])

    def residual(z):
        n_steps = max(1, int(round(z[4] / dt)))
        x, y, px, py = _run(z[0], z[1], z[2], z[3], z[4] / n_steps, n_steps,
                            _KICK, _DRIFT, kind, coeff, expo, bx, by, amp,
                            inv2s2, cut2)
        res = np.array([x - z[0], y - z[1], px - z[2], py - z[3],
                        np.dot(z[:4] - z0[:4], flow)])
        return res

    sol = least_squares(residual, z0, xtol=xtol, ftol=1e-14, gtol=1e-14,
                        diff_step=1e-7 * max(scale, 1.0))
    z = sol.x
    return PhasePoint(z[:2].copy(), z[2:4].copy()), float(z[4])


def star_initial_condition(orbit: OrbitSpec, alpha: float = 0.0) -> PhasePoint:
    """Phase point at the orbit's standard launch position."""
    from .orbits import orbit_start

    pos, mom = orbit_start(orbit, alpha)
    return PhasePoint(pos, mom)

"""Periodic orbits of a circularly symmetric well.

Radial motion at energy E and angular momentum L oscillates between the
two positive roots of f(r) = 2 r^2 [E - V(r)] - L^2.  The polar angle
advances by dphi = 2 L / (r sqrt(f)) dr per radial oscillation; the orbit
closes when that advance is a rational multiple of 2 pi.  The inverse
square-root endpoint singularities are removed with the substitution
r = r_in + (r_out - r_in) sin^2(u), after which plain Gauss-Legendre
quadrature converges rapidly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import NoOrbitError
from .potential import PowerLaw, RadialPotential

_QUAD_NODES = 240


@dataclass(frozen=True)
class OrbitSpec:
    """A closed orbit: q radial oscillations per p turns about the origin."""

    energy: float
    angular_momentum: float
    p: int
    q: int
    r_in: float
    r_out: float
    period: float  # time for q radial oscillations (one closure)

    @property
    def resonance(self) -> tuple[int, int]:
        return (self.p, self.q)

    @property
    def radial_period(self) -> float:
        return self.period / self.q


def f_radial(well: RadialPotential, energy: float, ang_mom: float, r):
    r = np.asarray(r, dtype=float)
    return 2.0 * r * r * (energy - well(r)) - ang_mom * ang_mom


def circular_orbit(well: RadialPotential, energy: float) -> tuple[float, float]:
    """Radius and angular momentum of the circular orbit at the given energy.

    Solves E = V(r) + r V'(r) / 2 and returns (r_circ, L_circ).
    """
    def h(r):
        return well(r) + 0.5 * r * well.derivative(r) - energy

    lo, hi = 1e-12, 1.0
    while h(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise NoOrbitError("no circular orbit below energy %g" % energy)
    r_c = brentq(h, lo, hi, xtol=1e-15, rtol=8.9e-16)
    l_c = math.sqrt(r_c ** 3 * well.derivative(r_c))
    return r_c, l_c


def _veff_minimum(well: RadialPotential, ang_mom: float) -> float:
    """Radius minimizing V_eff = V + L^2 / (2 r^2)."""
    l2 = ang_mom * ang_mom

    def h(r):
        return r ** 3 * well.derivative(r) - l2

    lo, hi = 1e-12, 1.0
    while h(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise NoOrbitError("effective potential has no minimum for L=%g" % ang_mom)
    return brentq(h, lo, hi, xtol=1e-15, rtol=8.9e-16)


def turning_points(well: RadialPotential, energy: float, ang_mom: float,
                   degenerate_tol: float = 1e-12) -> tuple[float, float]:
    """The two bracketing roots of f(r) = 2 r^2 [E - V(r)] - L^2.

    Raises NoOrbitError if E lies below the minimum of the effective
    potential; returns a degenerate pair (r_c, r_c) if E sits at the
    minimum to within ``degenerate_tol`` (relative).
    """
    if ang_mom == 0:
        raise NoOrbitError("turning points require L != 0")
    ang_mom = abs(ang_mom)
    r_m = _veff_minimum(well, ang_mom)
    f_m = f_radial(well, energy, ang_mom, r_m)
    scale = max(abs(energy) * 2.0 * r_m * r_m, ang_mom * ang_mom)
    if f_m < -degenerate_tol * scale:
        raise NoOrbitError("E=%g below the circular-orbit minimum for L=%g"
                           % (energy, ang_mom))
    if f_m <= degenerate_tol * scale:
        return r_m, r_m

    def f(r):
        return f_radial(well, energy, ang_mom, r)

    lo = r_m
    while f(lo) > 0:
        lo *= 0.5
        if lo < 1e-300:
            raise NoOrbitError("failed to bracket inner turning point")
    r_in = brentq(f, lo, r_m, xtol=1e-15, rtol=8.9e-16)
    hi = r_m
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise NoOrbitError("failed to bracket outer turning point")
    r_out = brentq(f, 0.5 * hi, hi, xtol=1e-15, rtol=8.9e-16)
    # one Newton polish each, so f at the returned radii is at rounding level
    for _ in range(2):
        df = _f_derivative(well, energy, ang_mom, r_in)
        if df != 0:
            r_in -= f(r_in) / df
        df = _f_derivative(well, energy, ang_mom, r_out)
        if df != 0:
            r_out -= f(r_out) / df
    return r_in, r_out


def _f_derivative(well, energy, ang_mom, r):
    return 4.0 * r * (energy - well(r)) - 2.0 * r * r * well.derivative(r)


@lru_cache(maxsize=8)
def _gauss_nodes(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    # map [-1, 1] -> [0, pi/2]
    return 0.25 * math.pi * (x + 1.0), 0.25 * math.pi * w


def _g_smooth(well, energy, ang_mom, r_in, r_out, r, s2):
    """The smooth remainder g = f / [(r - r_in)(r_out - r)] at the nodes.

    For polynomial wells (integer-exponent power laws) the division is done
    on the coefficients, which avoids catastrophic cancellation near the
    turning points; otherwise the ratio is formed directly.
    """
    span = r_out - r_in
    if isinstance(well, PowerLaw) and abs(well.exponent - round(well.exponent)) < 1e-12:
        deg = int(round(well.exponent)) + 2
        cf = np.zeros(deg + 1)
        cf[0] = -ang_mom * ang_mom
        cf[2] += 2.0 * energy
        cf[deg] += -2.0 * well.coefficient
        divisor = np.array([-r_in * r_out, r_in + r_out, -1.0])
        quot, _ = np.polynomial.polynomial.polydiv(cf, divisor)
        return np.polynomial.polynomial.polyval(r, quot)
    d_in = np.maximum(span * s2, 1e-300)
    d_out = np.maximum(span * (1.0 - s2), 1e-300)
    return f_radial(well, energy, ang_mom, r) / (d_in * d_out)


def _smooth_integrals(well, energy, ang_mom, r_in, r_out, nodes=_QUAD_NODES):
    """Quarter-oscillation quadrature data after the sin^2 substitution.

    Returns (r, g, w) where g = f / [(r - r_in)(r_out - r)] is the smooth
    remainder of f and w are the u-space weights.
    """
    u, w = _gauss_nodes(nodes)
    s2 = np.sin(u) ** 2
    span = r_out - r_in
    r = r_in + span * s2
    g = _g_smooth(well, energy, ang_mom, r_in, r_out, r, s2)
    return r, g, w


def delta_phi(well: RadialPotential, energy: float, ang_mom: float,
              nodes: int = _QUAD_NODES) -> float:
    """Polar-angle advance over one full radial oscillation."""
    ang_mom = abs(ang_mom)
    r_in, r_out = turning_points(well, energy, ang_mom)
    if r_out - r_in <= 1e-9 * r_out:
        # circular limit: ratio of angular to epicyclic frequency
        r_c = 0.5 * (r_in + r_out)
        kappa2 = well.second_derivative(r_c) + 3.0 * well.derivative(r_c) / r_c
        omega_phi2 = well.derivative(r_c) / r_c
        return 2.0 * math.pi * math.sqrt(omega_phi2 / kappa2)
    r, g, w = _smooth_integrals(well, energy, ang_mom, r_in, r_out, nodes)
    return float(np.sum(w * 4.0 * ang_mom / (r * np.sqrt(g))))


def radial_period(well: RadialPotential, energy: float, ang_mom: float,
                  nodes: int = _QUAD_NODES) -> float:
    """Duration of one full radial oscillation."""
    ang_mom = abs(ang_mom)
    r_in, r_out = turning_points(well, energy, ang_mom)
    if r_out - r_in <= 1e-9 * r_out:
        r_c = 0.5 * (r_in + r_out)
        kappa2 = well.second_derivative(r_c) + 3.0 * well.derivative(r_c) / r_c
        return 2.0 * math.pi / math.sqrt(kappa2)
    r, g, w = _smooth_integrals(well, energy, ang_mom, r_in, r_out, nodes)
    return float(np.sum(w * 4.0 * r / np.sqrt(g)))


def radial_action(well: RadialPotential, energy: float, ang_mom: float,
                  nodes: int = _QUAD_NODES) -> float:
    """Radial action integral (1/pi) * int p_r dr between the turning points.

    Handles L = 0, where the inner turning point collapses to the origin.
    """
    ang_mom = abs(ang_mom)
    if ang_mom == 0:
        def vmax(r):
            return well(r) - energy
        hi = 1.0
        while vmax(hi) < 0:
            hi *= 2.0
        r_out = brentq(vmax, 0.0, hi, xtol=1e-15, rtol=8.9e-16)
        # substitution r = r_out - s^2 removes the sqrt singularity at r_out
        u, w = _gauss_nodes(nodes)
        smax = math.sqrt(r_out)
        s = smax * (u / (0.5 * math.pi))
        ws = w * smax / (0.5 * math.pi)
        r = r_out - s * s
        integrand = np.sqrt(np.maximum(2.0 * (energy - well(r)), 0.0)) * 2.0 * s
        return float(np.sum(ws * integrand)) / math.pi
    r_in, r_out = turning_points(well, energy, ang_mom)
    if r_out - r_in <= 1e-14 * r_out:
        return 0.0
    r, g, w = _smooth_integrals(well, energy, ang_mom, r_in, r_out, nodes)
    span = r_out - r_in
    u, _ = _gauss_nodes(nodes)
    s2 = np.sin(u) ** 2
    # p_r = sqrt(f)/r and dr = 2 span sin cos du; sqrt(f) = sqrt(g) span sin cos
    integrand = 2.0 * span * span * s2 * (1.0 - s2) * np.sqrt(g) / r
    return float(np.sum(w * integrand)) / math.pi


def find_periodic_orbits(well: RadialPotential, energy: float, n_max: int,
                         n_scan: int = 2048) -> list[OrbitSpec]:
    """All primitive (p, q) resonances with q <= n_max at the given energy.

    Scans delta_phi on a dense grid of L in (0, L_circ) and brackets each
    rational target 2 pi p / q; duplicates of lower resonances (e.g. 4/10
    of 2/5) are never generated because p and q are kept coprime.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    _, l_circ = circular_orbit(well, energy)
    eps = 1e-6
    l_grid = np.linspace(eps * l_circ, (1.0 - eps) * l_circ, n_scan)
    dphi = np.array([delta_phi(well, energy, l) for l in l_grid])

    if float(np.ptp(dphi)) < 1e-10:
        # harmonic special case: delta_phi is identically pi, so every orbit
        # is the 1/2 ellipse; return one representative
        l_star = 0.5 * l_circ
        r_in, r_out = turning_points(well, energy, l_star)
        return [OrbitSpec(energy=energy, angular_momentum=l_star, p=1, q=2,
                          r_in=r_in, r_out=r_out,
                          period=2 * radial_period(well, energy, l_star))]

    orbits: dict[tuple[int, int], OrbitSpec] = {}
    for q in range(2, n_max + 1):
        for p in range(1, q):
            if math.gcd(p, q) != 1:
                continue
            if 2 * p == q:
                # delta_phi = pi is the open L -> 0 boundary (straight-line
                # limit); it is approached but never attained, and quadrature
                # noise near L = 0 would otherwise fake a crossing
                continue
            target = 2.0 * math.pi * p / q
            diff = dphi - target
            hits = np.nonzero(np.sign(diff[:-1]) * np.sign(diff[1:]) < 0)[0]
            if hits.size == 0 or (p, q) in orbits:
                continue
            i = hits[0]
            l_star = brentq(lambda l: delta_phi(well, energy, l) - target,
                            l_grid[i], l_grid[i + 1], xtol=1e-300, rtol=1e-13)
            r_in, r_out = turning_points(well, energy, l_star)
            t_r = radial_period(well, energy, l_star)
            orbits[(p, q)] = OrbitSpec(energy=energy, angular_momentum=l_star,
                                       p=p, q=q, r_in=r_in, r_out=r_out,
                                       period=q * t_r)
    return sorted(orbits.values(), key=lambda o: (o.q, o.p))


def orbit_at_energy(orbit: OrbitSpec, well: RadialPotential,
                    energy: float) -> OrbitSpec:
    """Continue a (p, q) resonance to a different energy.

    delta_phi is monotone in L between its L -> 0 and circular limits, so
    the resonant angular momentum at the new energy is found by a single
    bracketed root search.
    """
    target = 2.0 * math.pi * orbit.p / orbit.q
    _, l_circ = circular_orbit(well, energy)
    eps = 1e-6
    lo, hi = eps * l_circ, (1.0 - eps) * l_circ
    f_lo = delta_phi(well, energy, lo) - target
    f_hi = delta_phi(well, energy, hi) - target
    if f_lo * f_hi > 0:
        raise NoOrbitError(
            f"resonance {orbit.p}/{orbit.q} does not exist at E={energy:g}")
    l_star = brentq(lambda l: delta_phi(well, energy, l) - target,
                    lo, hi, xtol=1e-300, rtol=1e-13)
    r_in, r_out = turning_points(well, energy, l_star)
    return OrbitSpec(energy=energy, angular_momentum=l_star,
                     p=orbit.p, q=orbit.q, r_in=r_in, r_out=r_out,
                     period=orbit.q * radial_period(well, energy, l_star))


def trace_orbit(orbit: OrbitSpec, well: RadialPotential, samples: int,
                alpha: float = 0.0, oversample: int = 512) -> np.ndarray:
    """Positions along one closure of the orbit, shape (samples, 2).

    At alpha = 0 the trajectory starts at the inner turning point on the
    positive y-axis and heads in the +x direction (clockwise); alpha
    rotates the whole trace counterclockwise.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    l_abs = abs(orbit.angular_momentum)
    r_in, r_out = orbit.r_in, orbit.r_out
    span = r_out - r_in
    # one radial oscillation parametrized by u in [0, 2 pi]
    u = np.linspace(0.0, 2.0 * math.pi, oversample + 1)
    s2 = np.sin(0.5 * u) ** 2
    r = r_in + span * s2
    if span <= 1e-9 * r_out:
        dphi_du = np.full_like(u, l_abs / (r_in * r_in))  # circular fallback
        dt_du = np.ones_like(u)
    else:
        g = _g_smooth(well, orbit.energy, l_abs, orbit.r_in, orbit.r_out, r, s2)
        if not isinstance(well, PowerLaw) or \
                abs(well.exponent - round(well.exponent)) >= 1e-12:
            # direct ratio is 0/0 at the endpoints; use the limit f'/span
            g[0] = _f_derivative(well, orbit.energy, l_abs, r_in) / span
            g[oversample // 2] = -_f_derivative(well, orbit.energy, l_abs, r_out) / span
            g[-1] = g[0]
        sqrt_g = np.sqrt(np.maximum(g, 1e-300))
        dphi_du = l_abs / (r * sqrt_g)
        dt_du = r / sqrt_g
    du = u[1] - u[0]
    phi_cum = np.concatenate([[0.0], np.cumsum(0.5 * (dphi_du[1:] + dphi_du[:-1]) * du)])
    t_cum = np.concatenate([[0.0], np.cumsum(0.5 * (dt_du[1:] + dt_du[:-1]) * du)])

    # stitch q oscillations together; phi decreases (clockwise motion)
    t_all = [t_cum + k * t_cum[-1] for k in range(orbit.q)]
    phi_all = [phi_cum + k * phi_cum[-1] for k in range(orbit.q)]
    t_full = np.concatenate([a[:-1] for a in t_all] + [[orbit.q * t_cum[-1]]])
    phi_full = np.concatenate([a[:-1] for a in phi_all] + [[orbit.q * phi_cum[-1]]])
    r_full = np.concatenate([r[:-1]] * orbit.q + [[r[0]]])

    t_sample = np.linspace(0.0, t_full[-1], samples)
    phi_s = np.interp(t_sample, t_full, phi_full)
    r_s = np.interp(t_sample, t_full, r_full)
    angle = 0.5 * math.pi - phi_s + alpha
    return np.column_stack([r_s * np.cos(angle), r_s * np.sin(angle)])


def orbit_start(orbit: OrbitSpec, alpha: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Initial position and momentum for the orbit's standard launch point.

    At alpha = 0: position (0, r_in), momentum (+|L|/r_in, 0).
    """
    speed = abs(orbit.angular_momentum) / orbit.r_in
    c, s = math.cos(alpha), math.sin(alpha)
    pos = np.array([-s * orbit.r_in, c * orbit.r_in])
    mom = np.array([c * speed, s * speed])
    return pos, mom

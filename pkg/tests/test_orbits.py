import math
from fractions import Fraction

import numpy as np
import pytest

from scarlab.errors import NoOrbitError
from scarlab.orbits import (circular_orbit, delta_phi, find_periodic_orbits,
                            orbit_start, radial_action, radial_period,
                            trace_orbit, turning_points)
from scarlab.potential import PowerLaw, reference_well

# resonance table for power-law wells, exponents 1..9, n = p + q <= 15
TABLE = {
    1: {(4, 7), (5, 9), (6, 11), (7, 13), (8, 15)},
    3: {(5, 11), (6, 13), (7, 15)},
    4: {(3, 7), (4, 9), (5, 11), (5, 12), (6, 13), (7, 15)},
    5: {(2, 5), (3, 7), (4, 9), (5, 11), (5, 12), (5, 13), (6, 13), (7, 15)},
    6: {(2, 5), (3, 7), (3, 8), (4, 9), (4, 11), (5, 11), (5, 12), (5, 13),
        (6, 13), (5, 14), (7, 15)},
    7: {(2, 5), (3, 7), (3, 8), (4, 9), (4, 11), (5, 11), (5, 12), (5, 13),
        (6, 13), (5, 14), (7, 15)},
    8: {(1, 3), (2, 5), (3, 7), (3, 8), (4, 9), (4, 11), (5, 11), (5, 12),
        (5, 13), (6, 13), (5, 14), (7, 15)},
    9: {(1, 3), (2, 5), (3, 7), (3, 8), (4, 9), (4, 11), (5, 11), (5, 12),
        (4, 13), (5, 13), (6, 13), (5, 14), (7, 15)},
}


@pytest.mark.parametrize("a", sorted(TABLE))
def test_resonance_table(a):
    well = PowerLaw(float(a), 0.5)
    orbits = find_periodic_orbits(well, 10.0, n_max=15)
    found = {(o.p, o.q) for o in orbits}
    assert found == TABLE[a]


def test_harmonic_delta_phi_is_pi():
    well = PowerLaw(2.0, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        energy = rng.uniform(0.5, 500.0)
        _, l_circ = circular_orbit(well, energy)
        ang = rng.uniform(0.01, 0.99) * l_circ
        assert abs(delta_phi(well, energy, ang) - math.pi) < 1e-10


def test_star_orbit_resonance():
    well = reference_well()
    orbits = find_periodic_orbits(well, 500.0, n_max=5)
    star = [o for o in orbits if (o.p, o.q) == (2, 5)]
    assert len(star) == 1
    orb = star[0]
    assert abs(delta_phi(well, 500.0, orb.angular_momentum)
               - 4.0 * math.pi / 5.0) < 1e-10


def test_orbit_shape_energy_scaling():
    well = reference_well()
    low = find_periodic_orbits(well, 50.0, n_max=9)
    high = find_periodic_orbits(well, 500.0, n_max=9)
    assert {(o.p, o.q) for o in low} == {(o.p, o.q) for o in high}
    for lo in low:
        hi = next(o for o in high if (o.p, o.q) == (lo.p, lo.q))
        assert lo.r_in / lo.r_out == pytest.approx(hi.r_in / hi.r_out,
                                                   rel=1e-9)


def test_turning_points_bracket_minimum():
    well = reference_well()
    r_in, r_out = turning_points(well, 100.0, 5.0)
    assert 0 < r_in < r_out
    # f = 2 r^2 (E - V) - L^2 vanishes at both
    for r in (r_in, r_out):
        assert abs(2 * r * r * (100.0 - well(r)) - 25.0) < 1e-8


def test_no_orbit_below_effective_minimum():
    well = reference_well()
    _, l_circ = circular_orbit(well, 10.0)
    with pytest.raises(NoOrbitError):
        turning_points(well, 0.01, l_circ)


def test_radial_action_harmonic():
    well = PowerLaw(2.0, 0.5)
    # I_r = (E - L)/2 for the (unit-frequency) harmonic well
    for energy, ang in [(5.0, 1.0), (12.0, 4.0), (9.0, 0.0)]:
        assert radial_action(well, energy, ang) == pytest.approx(
            (energy - ang) / 2.0, abs=1e-10)


def test_radial_period_harmonic():
    well = PowerLaw(2.0, 0.5)
    assert radial_period(well, 7.0, 2.0) == pytest.approx(math.pi, abs=1e-10)


def test_delta_phi_monotone_in_l():
    well = reference_well()
    _, l_circ = circular_orbit(well, 200.0)
    ls = np.linspace(0.02, 0.98, 60) * l_circ
    vals = [delta_phi(well, 200.0, l) for l in ls]
    # decreasing from the L -> 0 limit pi toward the circular limit
    assert np.all(np.diff(vals) < 0)
    assert vals[0] < math.pi
    assert vals[-1] > 2 * math.pi / math.sqrt(7.0) - 1e-6


def test_trace_orbit_closes():
    well = reference_well()
    orbits = find_periodic_orbits(well, 500.0, n_max=5)
    star = next(o for o in orbits if (o.p, o.q) == (2, 5))
    pos = trace_orbit(star, well, samples=2001)
    assert pos.shape == (2001, 2)
    assert np.hypot(*(pos[-1] - pos[0])) < 1e-8 * star.r_out
    # radius stays between the turning points
    r = np.hypot(pos[:, 0], pos[:, 1])
    assert np.all(r >= star.r_in - 1e-9) and np.all(r <= star.r_out + 1e-9)


def test_trace_orbit_start_convention():
    well = reference_well()
    orbits = find_periodic_orbits(well, 500.0, n_max=5)
    star = next(o for o in orbits if (o.p, o.q) == (2, 5))
    pos, mom = orbit_start(star, alpha=0.0)
    assert pos[0] == pytest.approx(0.0, abs=1e-12)
    assert pos[1] == pytest.approx(star.r_in, rel=1e-12)
    assert mom[0] > 0 and abs(mom[1]) < 1e-12


def test_trace_orbit_symmetry_rotation():
    well = reference_well()
    orbits = find_periodic_orbits(well, 500.0, n_max=5)
    star = next(o for o in orbits if (o.p, o.q) == (2, 5))
    pos0 = trace_orbit(star, well, samples=501, alpha=0.0)
    pos1 = trace_orbit(star, well, samples=501, alpha=2 * math.pi / 5)
    # the rotated orbit is the same point set: each sample of pos1 lies on pos0
    for point in pos1[::25]:
        assert np.min(np.hypot(pos0[:, 0] - point[0],
                               pos0[:, 1] - point[1])) < 2e-2 * star.r_out


def test_coprime_entries_only():
    well = reference_well()
    for orb in find_periodic_orbits(well, 10.0, n_max=15):
        assert math.gcd(orb.p, orb.q) == 1
        assert Fraction(orb.p, orb.q) == Fraction(orb.p, orb.q)

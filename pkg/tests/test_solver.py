import math

import numpy as np
import pytest

from scarlab.errors import GridResolutionError
from scarlab.grid import Grid2D, Wavefunction, overlap
from scarlab.potential import PowerLaw, empty_field, sample_impurities
from scarlab.solver import (apply_hamiltonian, check_resolution,
                            potential_on_grid, propagate, solve_eigenstates,
                            weyl_energy)

HARMONIC = PowerLaw(2.0, 0.5)


def harmonic_levels(count):
    levels = []
    n = 0
    while len(levels) < count:
        levels.extend([n + 1.0] * (n + 1))
        n += 1
    return np.array(levels[:count])


@pytest.fixture(scope="module")
def harmonic_spectrum():
    return solve_eigenstates(HARMONIC, None, Grid2D(8.0, 96), 21, tol=1e-8)


def test_harmonic_levels_krylov(harmonic_spectrum):
    exact = harmonic_levels(21)
    rel = np.abs(harmonic_spectrum.energies - exact) / exact
    assert rel.max() < 1e-6


def test_orthonormality(harmonic_spectrum):
    states = harmonic_spectrum.states
    for i in range(0, 21, 5):
        for j in range(0, 21, 5):
            expect = 1.0 if i == j else 0.0
            assert abs(overlap(states[i], states[j]) - expect) < 1e-8


def test_residual_contract(harmonic_spectrum):
    assert np.all(harmonic_spectrum.residuals <= 1e-8)


def test_itp_matches_krylov():
    spec = solve_eigenstates(HARMONIC, None, Grid2D(8.0, 64), 10,
                             tol=1e-6, method="itp")
    exact = harmonic_levels(10)
    assert np.abs(spec.energies - exact).max() < 1e-6


def test_dense_matches_exact():
    spec = solve_eigenstates(HARMONIC, None, Grid2D(8.0, 64), 10,
                             tol=1e-8, method="dense")
    exact = harmonic_levels(10)
    assert np.abs(spec.energies - exact).max() < 1e-8


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_eigenstates(HARMONIC, None, Grid2D(8.0, 64), 4, method="magic")


def test_grid_resolution_refusal():
    # 16 points over [-8, 8] cannot resolve hundreds of states
    with pytest.raises(GridResolutionError):
        solve_eigenstates(HARMONIC, None, Grid2D(8.0, 16), 400)


def test_weyl_count_harmonic():
    # N(E) = E^2/2 for the 2D harmonic well (Thomas-Fermi)
    e = weyl_energy(HARMONIC, 450)
    assert e == pytest.approx(30.0, rel=1e-3)


def test_hermiticity_probe():
    grid = Grid2D(5.0, 48)
    field = sample_impurities(seed=9, density=1.0, amplitude=5.0, sigma=0.3,
                              box_half_width=5.0)
    v_grid = potential_on_grid(HARMONIC, field, grid)
    kin = grid.kinetic_factors()
    rng = np.random.default_rng(1)
    a = rng.standard_normal((48, 48)) + 1j * rng.standard_normal((48, 48))
    b = rng.standard_normal((48, 48)) + 1j * rng.standard_normal((48, 48))
    lhs = np.vdot(a, apply_hamiltonian(b, kin, v_grid))
    rhs = np.vdot(apply_hamiltonian(a, kin, v_grid), b)
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_variational_monotonicity():
    coarse = solve_eigenstates(HARMONIC, None, Grid2D(8.0, 64), 6, tol=1e-8)
    fine = solve_eigenstates(HARMONIC, None, Grid2D(8.0, 128), 6, tol=1e-8)
    rel = np.abs(fine.energies - coarse.energies) / coarse.energies
    assert rel.max() < 1e-5


def test_first_order_perturbation_shift():
    grid = Grid2D(8.0, 64)
    base = solve_eigenstates(HARMONIC, None, grid, 1, tol=1e-9)
    field = sample_impurities(seed=3, density=0.2, amplitude=0.01, sigma=0.4,
                              box_half_width=2.0)
    pert = solve_eigenstates(HARMONIC, field, grid, 1, tol=1e-9)
    psi = base.states[0]
    vimp = field.on_grid(grid.axis, grid.axis)
    expect = float(np.sum(psi.density() * vimp) * grid.cell_area)
    shift = pert.energies[0] - base.energies[0]
    assert shift == pytest.approx(expect, rel=0.05)


def test_coherent_state_revival():
    grid = Grid2D(8.0, 96)
    x, y = grid.meshgrid()
    psi0 = Wavefunction(grid, np.exp(-((x - 1.5) ** 2 + y ** 2) / 2)
                        .astype(complex)).normalized()
    out = propagate(psi0, HARMONIC, None, dt=2 * math.pi / 2000,
                    t_end=2 * math.pi)
    final = out[-1][1]
    assert abs(overlap(psi0, final)) ** 2 == pytest.approx(1.0, abs=1e-4)
    assert final.norm() == pytest.approx(1.0, abs=1e-9)


def test_eigenstate_stationarity(harmonic_spectrum):
    energy, psi = harmonic_spectrum[3]
    out = propagate(psi, HARMONIC, None, dt=0.01, t_end=3.0,
                    sample_times=[1.0, 2.0, 3.0])
    for t, state in out[1:]:
        assert abs(abs(overlap(psi, state)) - 1.0) < 1e-6


def test_free_gaussian_dispersion():
    # V ~ 0 over the packet: use a tiny coefficient so the well is negligible
    well = PowerLaw(2.0, 1e-12)
    grid = Grid2D(30.0, 256)
    sigma0 = 1.0
    x, y = grid.meshgrid()
    psi0 = Wavefunction(grid, np.exp(-(x ** 2 + y ** 2) / (4 * sigma0 ** 2))
                        .astype(complex)).normalized()
    t = 2.0
    out = propagate(psi0, well, None, dt=0.002, t_end=t)
    dens = out[-1][1].density()
    x2 = float(np.sum(dens * x ** 2) * grid.cell_area)
    expect = sigma0 ** 2 + t ** 2 / (4 * sigma0 ** 2)
    assert x2 == pytest.approx(expect, rel=1e-4)


def test_propagate_rejects_bad_dt():
    grid = Grid2D(8.0, 64)
    psi = Wavefunction(grid, np.ones((64, 64), dtype=complex)).normalized()
    with pytest.raises(ValueError):
        propagate(psi, HARMONIC, None, dt=-0.1, t_end=1.0)


def test_check_resolution_returns_energy():
    e = check_resolution(HARMONIC, Grid2D(8.0, 128), 50)
    assert 9.0 < e < 12.0


def test_suggest_timestep_phase_error_calibration():
    # the suggested step must keep the split-step phase error per period
    # below the requested bound; verified against a dt/8 reference
    import cmath

    from scarlab.orbits import find_periodic_orbits
    from scarlab.packets import packet_on_orbit
    from scarlab.potential import reference_well
    from scarlab.solver import suggest_timestep

    well = reference_well()
    star = next(o for o in find_periodic_orbits(well, 160.0, n_max=5)
                if (o.p, o.q) == (2, 5))
    grid = Grid2D(4.4, 128)
    psi0 = packet_on_orbit(star, well).on_grid(grid)
    dt = suggest_timestep(160.0, star.period, phase_error=1e-3)

    def final(step):
        return propagate(psi0, well, None, step, star.period,
                         sample_times=[star.period])[-1][1]

    ref = final(dt / 8.0)
    ov1 = overlap(ref, final(dt))
    ov2 = overlap(ref, final(dt / 2.0))
    assert abs(cmath.phase(ov1)) < 1e-3
    # second-order splitting: halving dt cuts the phase error ~ 4x
    assert abs(cmath.phase(ov2)) < 0.4 * abs(cmath.phase(ov1))

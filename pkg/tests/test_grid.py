import numpy as np
import pytest

from scarlab.grid import (Grid2D, Spectrum, Wavefunction, overlap,
                          read_spectrum_csv, read_wavefunction,
                          write_spectrum_csv, write_wavefunction)


def test_grid_geometry():
    grid = Grid2D(4.0, 64)
    assert grid.spacing == pytest.approx(0.125)
    assert grid.cell_area == pytest.approx(0.125 ** 2)
    assert grid.axis[0] == -4.0
    assert grid.axis[-1] == pytest.approx(4.0 - 0.125)
    x, y = grid.meshgrid()
    assert x.shape == (64, 64)
    assert x[0, 1] - x[0, 0] == pytest.approx(0.125)
    assert y[1, 0] - y[0, 0] == pytest.approx(0.125)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid2D(4.0, 15)
    with pytest.raises(ValueError):
        Grid2D(4.0, 33)
    with pytest.raises(ValueError):
        Grid2D(-1.0, 64)


def test_refined():
    grid = Grid2D(4.0, 64)
    fine = grid.refined()
    assert fine.points_per_side == 128
    assert fine.half_width == 4.0


def test_wavefunction_norm_and_overlap():
    grid = Grid2D(6.0, 64)
    x, y = grid.meshgrid()
    psi = Wavefunction(grid, np.exp(-(x ** 2 + y ** 2) / 2).astype(complex))
    n = psi.norm()
    assert n == pytest.approx(np.sqrt(np.pi), rel=1e-10)
    unit = psi.normalized()
    assert unit.norm() == pytest.approx(1.0, rel=1e-12)
    assert overlap(unit, unit) == pytest.approx(1.0, rel=1e-12)
    # orthogonal partner: odd function
    odd = Wavefunction(grid, (x * np.exp(-(x ** 2 + y ** 2) / 2)).astype(complex)).normalized()
    assert abs(overlap(unit, odd)) < 1e-12
    # Cauchy-Schwarz
    assert abs(overlap(unit, odd)) ** 2 <= 1 + 1e-12


def test_overlap_grid_mismatch():
    a = Wavefunction(Grid2D(4.0, 64), np.ones((64, 64), dtype=complex))
    b = Wavefunction(Grid2D(5.0, 64), np.ones((64, 64), dtype=complex))
    with pytest.raises(ValueError):
        overlap(a, b)


def test_wavefunction_shape_check():
    with pytest.raises(ValueError):
        Wavefunction(Grid2D(4.0, 64), np.ones((32, 32)))


def test_wf2d_roundtrip(tmp_path):
    grid = Grid2D(3.0, 32)
    rng = np.random.default_rng(0)
    values = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    psi = Wavefunction(grid, values)
    path = tmp_path / "state.wf2d"
    write_wavefunction(path, psi)
    back = read_wavefunction(path)
    assert back.grid == grid
    assert np.array_equal(back.values, values)


def test_wf2d_rejects_garbage(tmp_path):
    path = tmp_path / "bad.wf2d"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        read_wavefunction(path)


def test_spectrum_window_and_csv(tmp_path):
    grid = Grid2D(3.0, 32)
    states = [Wavefunction(grid, np.ones((32, 32), dtype=complex))
              for _ in range(4)]
    spec = Spectrum(grid=grid, energies=np.array([1.0, 2.0, 3.0, 4.0]),
                    states=states, residuals=np.full(4, 1e-9))
    assert spec.window(1.5, 3.5) == [1, 2]
    assert len(spec) == 4
    energy, state = spec[2]
    assert energy == 3.0
    path = tmp_path / "spectrum.csv"
    write_spectrum_csv(path, spec)
    idx, energies, residuals = read_spectrum_csv(path)
    assert np.array_equal(idx, np.arange(4))
    assert np.array_equal(energies, spec.energies)
    assert np.array_equal(residuals, spec.residuals)

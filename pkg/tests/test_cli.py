import os
import struct

import numpy as np
import pytest
from click.testing import CliRunner

from scarlab.cli import main, write_pgm
from scarlab.config import default_config, write_config

# A deliberately small configuration so every subcommand finishes in
# seconds: coarse grid, few states, wide well-resolved impurities.
TINY = dict(
    grid__half_width=3.4, grid__points=48,
    solver__n_states=40, solver__method="krylov", solver__tol=1e-6,
    imp__amplitude=4.0, imp__sigma=0.25,
    orbit__energy=40.0,
    sweep__e_min=10.0, sweep__e_max=20.0, sweep__alpha_count=8,
    recur__periods=1.0, recur__samples_per_period=8, recur__n_samples=200,
    dpt__center_nr=1, dpt__center_m=3, dpt__k_range=1, dpt__theta_count=16,
    render__state=3,
)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One output directory with the tiny config solved once."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "tiny.cfg"
    write_config(cfg_path, default_config().updated(**TINY))
    out = root / "out"
    result = CliRunner().invoke(
        main, ["--config", str(cfg_path), "--out", str(out), "solve"])
    assert result.exit_code == 0, result.output
    return {"config": str(cfg_path), "out": str(out)}


def _run(workdir, *args):
    return CliRunner().invoke(
        main, ["--config", workdir["config"], "--out", workdir["out"], *args])


def test_orbits_command(workdir):
    result = _run(workdir, "orbits")
    assert result.exit_code == 0, result.output
    path = os.path.join(workdir["out"], "resonances.csv")
    rows = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("a,"):
                continue
            a, entries = line.strip().split(",", 1)
            rows[int(a)] = entries
    assert sorted(rows) == list(range(1, 10))
    assert rows[2] == "1/2"  # harmonic: every orbit closes
    assert "2/5" in rows[5].split() and "3/7" in rows[5].split()
    # per-orbit tables for the harmonic and quintic wells
    assert os.path.exists(os.path.join(workdir["out"], "orbits_a5.csv"))


def test_impurities_command_and_seed_override(workdir):
    result = _run(workdir, "impurities")
    assert result.exit_code == 0, result.output
    path = os.path.join(workdir["out"], "impurities.txt")
    first = open(path).read()
    assert "bumps" in result.output
    # global --seed overrides imp.seed and changes the realization
    result = CliRunner().invoke(
        main, ["--config", workdir["config"], "--out", workdir["out"],
               "--seed", "7", "impurities"])
    assert result.exit_code == 0, result.output
    assert open(path).read() != first


def test_solve_is_cached(workdir):
    result = _run(workdir, "solve")
    assert result.exit_code == 0, result.output
    assert "cached:" in result.output


def test_resolved_config_written(workdir):
    path = os.path.join(workdir["out"], "resolved_config")
    text = open(path).read()
    assert "grid.points = 48" in text
    assert "solver.n_states = 40" in text


def test_sweep_command(workdir):
    result = _run(workdir, "sweep")
    assert result.exit_code == 0, result.output
    path = os.path.join(workdir["out"], "sweep.csv")
    data = np.genfromtxt(path, delimiter=",", names=True, comments="#")
    assert data.size > 0
    assert np.all(data["overlap2"] >= 0)
    assert np.all((data["energy"] >= 10.0) & (data["energy"] <= 20.0))


def test_recur_command(workdir):
    result = _run(workdir, "recur")
    assert result.exit_code == 0, result.output
    path = os.path.join(workdir["out"], "recurrence.csv")
    data = np.genfromtxt(path, delimiter=",", names=True, comments="#")
    assert data["quantum"][0] == pytest.approx(1.0, abs=1e-9)
    assert data["classical"][0] == 1.0


def test_dpt_command(workdir):
    result = _run(workdir, "dpt")
    assert result.exit_code == 0, result.output
    for name in ("resonant_set.csv", "dpt.csv", "rotation.csv"):
        assert os.path.exists(os.path.join(workdir["out"], name))
    data = np.genfromtxt(os.path.join(workdir["out"], "rotation.csv"),
                         delimiter=",", names=True, comments="#")
    assert data.size == TINY["dpt__theta_count"]


def test_render_command(workdir):
    result = _run(workdir, "render")
    assert result.exit_code == 0, result.output
    path = os.path.join(workdir["out"], "state_00003.pgm")
    with open(path, "rb") as fh:
        assert fh.readline() == b"P5\n"
        assert fh.readline().startswith(b"# scale:")
        width, height = map(int, fh.readline().split())
        assert fh.readline() == b"65535\n"
        raw = fh.read()
    assert (width, height) == (48, 48)
    pixels = np.frombuffer(raw, dtype=">u2").reshape(height, width)
    assert pixels.max() == 65535  # density maximum saturates the scale


def test_render_rejects_out_of_range_state(workdir, tmp_path):
    cfg_path = tmp_path / "bad.cfg"
    write_config(cfg_path, default_config().updated(**{**TINY, "render__state": 99}))
    result = CliRunner().invoke(
        main, ["--config", str(cfg_path), "--out", workdir["out"], "render"])
    assert result.exit_code != 0
    assert "not in the solved window" in result.output


def test_missing_spectrum_is_reported(workdir, tmp_path):
    result = CliRunner().invoke(
        main, ["--config", workdir["config"], "--out", str(tmp_path / "new"),
               "sweep"])
    assert result.exit_code != 0
    assert "scarlab solve" in result.output


def test_lock_file_blocks_concurrent_runs(workdir):
    lock = os.path.join(workdir["out"], ".lock")
    with open(lock, "w") as fh:
        fh.write("0")
    try:
        result = _run(workdir, "impurities")
        assert result.exit_code != 0
        assert "locked" in result.output
    finally:
        os.unlink(lock)


def test_threads_flag_accepted(workdir):
    result = CliRunner().invoke(
        main, ["--config", workdir["config"], "--out", workdir["out"],
               "--threads", "1", "impurities"])
    assert result.exit_code == 0, result.output


def test_write_pgm_round_trip(tmp_path):
    dens = np.linspace(0.0, 2.0, 12).reshape(3, 4)
    path = tmp_path / "img.pgm"
    write_pgm(path, dens, 65535.0 / 2.0)
    with open(path, "rb") as fh:
        assert fh.readline() == b"P5\n"
        fh.readline()
        assert fh.readline() == b"4 3\n"
        assert fh.readline() == b"65535\n"
        pixels = np.frombuffer(fh.read(), dtype=">u2").reshape(3, 4)
    # rows are flipped so +y points up in the image
    assert np.array_equal(pixels[::-1, :],
                          np.round(dens * 65535.0 / 2.0).astype(int))

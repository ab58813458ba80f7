"""Command-line pipeline: orbits, impurities, solve, sweep, recur, dpt, render.

Every command reads one flat config file, writes its artifacts plus the
resolved configuration into the output directory, and is deterministic for
a given config.  Heavy spectra are cached per config hash so downstream
commands can reuse them.
"""
from __future__ import annotations

import math
import os
import struct
import sys
from contextlib import contextmanager
from fractions import Fraction

import click
import numpy as np

from . import __version__
from .config import RunConfig, default_config, read_config, write_config
from .dpt import (build_resonant_set, dpt_diagonalize, match_to_spectrum,
                  vimp_rotation_curve, write_dpt_csv, write_resonant_set_csv,
                  write_rotation_csv)
from .errors import ScarlabError
from .grid import (Grid2D, Spectrum, Wavefunction, read_spectrum_csv,
                   read_wavefunction, write_spectrum_csv, write_wavefunction)
from .orbits import OrbitSpec, find_periodic_orbits, trace_orbit
from .packets import (RecurrenceSeries, autocorrelation, classical_recurrence,
                      orientation_sweep, packet_on_orbit, write_recurrence_csv,
                      write_sweep_csv)
from .potential import (ImpurityField, empty_field, read_impurities,
                        sample_impurities, write_impurities)
from .radial_basis import solve_radial_basis
from .solver import solve_eigenstates

_HEADER = "# scarlab %s | natural units: hbar = 1, mass = 1\n"


@contextmanager
def _locked(out_dir):
    """One command at a time per output directory."""
    os.makedirs(out_dir, exist_ok=True)
    lock_path = os.path.join(out_dir, ".lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise click.ClickException(
            "output directory %s is locked by another run (remove %s if stale)"
            % (out_dir, lock_path))
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        os.unlink(lock_path)


def _write_resolved(out_dir, config: RunConfig):
    path = os.path.join(out_dir, "resolved_config")
    with open(path, "w") as fh:
        fh.write("# scarlab version %s\n" % __version__)
        fh.write(config.dump())


def _field_from_config(config: RunConfig) -> ImpurityField:
    return sample_impurities(seed=config["imp.seed"],
                             density=config["imp.density"],
                             amplitude=config["imp.amplitude"],
                             sigma=config["imp.sigma"],
                             box_half_width=config["grid.half_width"])


def _grid_from_config(config: RunConfig) -> Grid2D:
    return Grid2D(config["grid.half_width"], config["grid.points"])


def _orbit_from_config(config: RunConfig) -> OrbitSpec:
    p, q = config["orbit.p"], config["orbit.q"]
    orbits = find_periodic_orbits(config.well(), config["orbit.energy"],
                                  n_max=config["orbit.n_max"])
    for orb in orbits:
        if orb.p == p and orb.q == q:
            return orb
    raise click.ClickException("resonance %d/%d not found at E=%g"
                               % (p, q, config["orbit.energy"]))


def _solve_dir(out_dir, config: RunConfig) -> str:
    keys = ("well.kind", "well.exponent", "well.coefficient", "imp.seed",
            "imp.density", "imp.amplitude", "imp.sigma", "grid.half_width",
            "grid.points", "solver.n_states", "solver.tol", "solver.method")
    sub = RunConfig({k: config[k] for k in keys})
    import hashlib
    tag = hashlib.sha256(sub.dump().encode()).hexdigest()[:12]
    return os.path.join(out_dir, "solve-%s" % tag)


def _load_spectrum(solve_dir, grid: Grid2D) -> Spectrum:
    _, energies, residuals = read_spectrum_csv(os.path.join(solve_dir, "spectrum.csv"))
    states = [read_wavefunction(os.path.join(solve_dir, "state_%05d.wf2d" % i))
              for i in range(energies.size)]
    return Spectrum(grid=grid, energies=energies, states=states,
                    residuals=residuals)


def _require_spectrum(out_dir, config) -> Spectrum:
    solve_dir = _solve_dir(out_dir, config)
    if not os.path.exists(os.path.join(solve_dir, "spectrum.csv")):
        raise click.ClickException(
            "no cached spectrum for this configuration; run 'scarlab solve' first")
    return _load_spectrum(solve_dir, _grid_from_config(config))


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Flat key = value configuration file.")
@click.option("--out", "out_dir", type=click.Path(), default="scarlab-out",
              help="Output directory.")
@click.option("--seed", type=int, default=None,
              help="Override imp.seed from the config.")
@click.option("--threads", type=int, default=None,
              help="Worker hint; never changes results.")
@click.pass_context
def main(ctx, config_path, out_dir, seed, threads):
    """Numerical laboratory for impurity-induced quantum scars in 2D wells."""
    config = read_config(config_path) if config_path else default_config()
    if seed is not None:
        config = config.updated(imp__seed=seed)
    if threads is not None:
        os.environ.setdefault("NUMBA_NUM_THREADS", str(threads))
    ctx.obj = {"config": config, "out": out_dir}


@main.command()
@click.pass_context
def orbits(ctx):
    """Periodic-orbit resonance table for power-law wells r^a, a = 1..9."""
    config, out_dir = ctx.obj["config"], ctx.obj["out"]
    n_max = config["orbit.n_max"]
    with _locked(out_dir):
        _write_resolved(out_dir, config)
        from .potential import PowerLaw
        table_path = os.path.join(out_dir, "resonances.csv")
        with open(table_path, "w") as fh:
            fh.write(_HEADER % __version__)
            fh.write("a,resonances\n")
            for a in range(1, 10):
                well = PowerLaw(float(a), 0.5)
                if a == 2:
                    fh.write("2,1/2\n")  # harmonic: every orbit closes at 1/2
                    continue
                found = find_periodic_orbits(well, 10.0, n_max=n_max)
                entries = sorted({Fraction(o.p, o.q) for o in found},
                                 key=lambda f: (f.denominator, f.numerator))
                fh.write("%d,%s\n" % (a, " ".join("%d/%d" % (f.numerator,
                                                             f.denominator)
                                                  for f in entries)))
        for a in (2, 5):
            well = PowerLaw(float(a), 0.5)
            path = os.path.join(out_dir, "orbits_a%d.csv" % a)
            with open(path, "w") as fh:
                fh.write(_HEADER % __version__)
                fh.write("p,q,L,r_in,r_out,T,E\n")
                if a == 2:
                    orbs = find_periodic_orbits(well, config["orbit.energy"],
                                                n_max=2)
                else:
                    orbs = find_periodic_orbits(well, config["orbit.energy"],
                                                n_max=n_max)
                for o in orbs:
                    fh.write("%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n" % (
                        o.p, o.q, o.angular_momentum, o.r_in, o.r_out,
                        o.period, o.energy))
    click.echo("wrote %s" % table_path)


@main.command()
@click.pass_context
def impurities(ctx):
    """Draw and store the impurity realization for the configured seed."""
    config, out_dir = ctx.obj["config"], ctx.obj["out"]
    with _locked(out_dir):
        _write_resolved(out_dir, config)
        field = _field_from_config(config)
        path = os.path.join(out_dir, "impurities.txt")
        write_impurities(path, field)
    click.echo("wrote %s (%d bumps)" % (path, len(field)))


@main.command()
@click.pass_context
def solve(ctx):
    """Solve the eigenproblem; cached per configuration hash."""
    config, out_dir = ctx.obj["config"], ctx.obj["out"]
    with _locked(out_dir):
        _write_resolved(out_dir, config)
        solve_dir = _solve_dir(out_dir, config)
        marker = os.path.join(solve_dir, "spectrum.csv")
        if os.path.exists(marker):
            click.echo("cached: %s" % solve_dir)
            return
        os.makedirs(solve_dir, exist_ok=True)
        _write_resolved(solve_dir, config)
        field = (_field_from_config(config)
                 if config["imp.amplitude"] > 0 else empty_field())
        grid = _grid_from_config(config)
        try:
            spectrum = solve_eigenstates(config.well(), field, grid,
                                         config["solver.n_states"],
                                         tol=config["solver.tol"],
                                         method=config["solver.method"])
        except ScarlabError as exc:
            raise click.ClickException(str(exc))
        for i, state in enumerate(spectrum.states):
            write_wavefunction(os.path.join(solve_dir, "state_%05d.wf2d" % i),
                               state)
        write_spectrum_csv(marker, spectrum)
    click.echo("wrote %s (%d states, E up to %.6g)"
               % (solve_dir, len(spectrum), spectrum.energies[-1]))


@main.command()
@click.pass_context
def sweep(ctx):
    """Orientation sweep of scar packets against the solved window."""
    config, out_dir = ctx.obj["config"], ctx.obj["out"]
    with _locked(out_dir):
        _write_resolved(out_dir, config)
        spectrum = _require_spectrum(out_dir, config)
        orbit = _orbit_from_config(config)
        window = spectrum.window(config["sweep.e_min"], config["sweep.e_max"])
        scan = orientation_sweep(orbit, config.well(), spectrum,
                                 state_indices=window,
                                 alpha_count=config["sweep.alpha_count"],
                                 threshold=config["sweep.threshold"])
        path = os.path.join(out_dir, "sweep.csv")
        write_sweep_csv(path, scan)
    click.echo("wrote %s (%d states, %d included)"
               % (path, scan.indices.size, int(scan.included().sum())))


@main.command()
@click.pass_context
def recur(ctx):
    """Quantum vs classical recurrence series for the configured packet."""
    config, out_dir = ctx.obj["config"], ctx.obj["out"]
    with _locked(out_dir):
        _write_resolved(out_dir, config)
        well = config.well()
        orbit = _orbit_from_config(config)
        field = (_field_from_config(config)
                 if config["imp.amplitude"] > 0 else empty_field())
        packet = packet_on_orbit(orbit, well, alpha=config["recur.alpha"])
        period = orbit.period
        t_end = config["recur.periods"] * period
        dt_sample = period / config["recur.samples_per_period"]
        grid = _grid_from_config(config)
        times, quantum = autocorrelation(packet, well, field, grid,
                                         t_end, dt_sample)
        _, classical, _ = classical_recurrence(
            packet, well, field, config["recur.n_samples"],
            config["recur.seed"], times)
        series = RecurrenceSeries(period=period, times=times,
                                  quantum=quantum, classical=classical)
        path = os.path.join(out_dir, "recurrence.csv")
        write_recurrence_csv(path, series)
    click.echo("wrote %s" % path)


@main.command()
@click.pass_context
def dpt(ctx):
    """DPT/qDPT reconstruction and rotation diagnostic for one resonant set."""
    config, out_dir = ctx.obj["config"], ctx.obj["out"]
    with _locked(out_dir):
        _write_resolved(out_dir, config)
        well = config.well()
        spectrum = _require_spectrum(out_dir, config)
        e_max = float(spectrum.energies[-1]) * 1.05
        basis = solve_radial_basis(well, e_max=e_max)
        center = (config["dpt.center_nr"], config["dpt.center_m"])
        rset = build_resonant_set(basis, (config["orbit.p"], config["orbit.q"]),
                                  center, k_range=config["dpt.k_range"])
        if not rset.members:
            raise click.ClickException("resonant set is empty for this window")
        write_resonant_set_csv(os.path.join(out_dir, "resonant_set.csv"), rset)
        field = _field_from_config(config)
        result = dpt_diagonalize(rset, field, spectrum.grid,
                                 mode=config["dpt.mode"])
        matches = match_to_spectrum(result, spectrum)
        path = os.path.join(out_dir, "dpt.csv")
        write_dpt_csv(path, result, matches)
        best = max(range(len(matches)), key=lambda k: matches[k]["overlap2"])
        thetas, curve = vimp_rotation_curve(result.states[best], field,
                                            theta_count=config["dpt.theta_count"])
        write_rotation_csv(os.path.join(out_dir, "rotation.csv"), thetas, curve)
    click.echo("wrote %s (best overlap2 %.4f on state %d)"
               % (path, matches[best]["overlap2"], matches[best]["match_state"]))


def write_pgm(path, density: np.ndarray, scale: float) -> None:
    """16-bit big-endian P5 raster of a density array (row 0 = top)."""
    arr = np.clip(np.round(density * scale), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        fh.write(b"# scale: value = pixel / %.17g (linear)\n" % scale)
        fh.write(b"%d %d\n65535\n" % (arr.shape[1], arr.shape[0]))
        fh.write(arr[::-1, :].tobytes())  # flip so +y is up


@main.command()
@click.option("--overlay/--no-overlay", default=False,
              help="Also write the classical orbit trace as a second image.")
@click.pass_context
def render(ctx, overlay):
    """Render one eigenstate density as a 16-bit PGM image."""
    config, out_dir = ctx.obj["config"], ctx.obj["out"]
    with _locked(out_dir):
        _write_resolved(out_dir, config)
        spectrum = _require_spectrum(out_dir, config)
        idx = config["render.state"]
        if not 0 <= idx < len(spectrum):
            raise click.ClickException("state %d not in the solved window "
                                       "(%d states)" % (idx, len(spectrum)))
        state = spectrum.states[idx]
        dens = state.density()
        scale = 65535.0 / float(dens.max())
        path = os.path.join(out_dir, "state_%05d.pgm" % idx)
        write_pgm(path, dens, scale)
        if overlay:
            orbit = _orbit_from_config(config)
            grid = spectrum.grid
            pos = trace_orbit(orbit, config.well(), samples=4096)
            img = np.zeros((grid.points_per_side, grid.points_per_side))
            ix = np.round((pos[:, 0] + grid.half_width) / grid.spacing).astype(int)
            iy = np.round((pos[:, 1] + grid.half_width) / grid.spacing).astype(int)
            ok = ((0 <= ix) & (ix < grid.points_per_side)
                  & (0 <= iy) & (iy < grid.points_per_side))
            img[iy[ok], ix[ok]] = 1.0
            write_pgm(os.path.join(out_dir, "state_%05d_orbit.pgm" % idx),
                      img, 65535.0)
    click.echo("wrote %s" % path)


if __name__ == "__main__":
    main()

import pytest

from scarlab.config import (RunConfig, default_config, parse_config,
                            read_config, write_config)
from scarlab.potential import CoshWell, PowerLaw


def test_defaults_complete():
    cfg = default_config()
    assert cfg["well.kind"] == "power"
    assert cfg["imp.amplitude"] == 24.0
    assert cfg["grid.points"] == 144
    assert isinstance(cfg["solver.n_states"], int)


def test_round_trip(tmp_path):
    cfg = default_config().updated(imp__amplitude=16.0, orbit__q=7,
                                   solver__tol=1e-7)
    path = tmp_path / "run.cfg"
    write_config(path, cfg)
    back = read_config(path)
    assert back.values == cfg.values
    assert back.hash() == cfg.hash()


def test_hash_changes_with_values():
    a = default_config()
    b = a.updated(imp__seed=2)
    assert a.hash() != b.hash()
    assert len(a.hash()) == 12


def test_parse_rejects_unknown_key():
    with pytest.raises(KeyError):
        parse_config("imp.sigma = 0.1\nwrong.key = 3\n")


def test_parse_rejects_bad_value():
    with pytest.raises(ValueError):
        parse_config("grid.points = twelve\n")
    with pytest.raises(ValueError):
        parse_config("this line has no equals sign")


def test_parse_comments_and_blank_lines():
    cfg = parse_config("# a comment\n\nimp.amplitude = 8  # inline\n")
    assert cfg["imp.amplitude"] == 8.0
    assert cfg["imp.sigma"] == 0.1  # untouched default


def test_updated_rejects_unknown():
    with pytest.raises(KeyError):
        default_config().updated(imp__strength=3.0)


def test_well_construction():
    assert isinstance(default_config().well(), PowerLaw)
    cosh = default_config().updated(well__kind="cosh")
    assert isinstance(cosh.well(), CoshWell)
    with pytest.raises(ValueError):
        RunConfig({**default_config().values, "well.kind": "square"}).well()


def test_float_formatting_lossless():
    cfg = default_config().updated(solver__tol=1.2345678901234567e-9)
    again = parse_config(cfg.dump())
    assert again["solver.tol"] == cfg["solver.tol"]

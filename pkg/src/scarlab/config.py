"""Flat key = value run configuration with lossless round-tripping.

All values are in natural units (hbar = 1, mass = 1).  Unknown keys are
rejected so typos surface immediately; every run directory receives the
fully resolved configuration plus a content hash for idempotence checks.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .potential import CoshWell, PowerLaw, sigma_from_fwhm

# key -> (type, default); None default means "required when used"
SCHEMA: dict[str, tuple[type, object]] = {
    "well.kind": (str, "power"),           # power | cosh
    "well.exponent": (float, 5.0),
    "well.coefficient": (float, 0.5),
    "imp.seed": (int, 1),
    "imp.density": (float, 2.0),
    "imp.amplitude": (float, 24.0),
    "imp.sigma": (float, 0.1),     # FWHM ~ 0.235
    "grid.half_width": (float, 4.4),
    "grid.points": (int, 144),
    "solver.n_states": (int, 1200),
    "solver.tol": (float, 1e-6),
    "solver.method": (str, "dense"),       # dense | krylov | itp
    "orbit.p": (int, 2),
    "orbit.q": (int, 5),
    "orbit.energy": (float, 160.0),
    "orbit.n_max": (int, 15),
    "packet.width_across_factor": (float, 0.25),
    "packet.width_ratio": (float, 2.0),
    "sweep.alpha_count": (int, 24),
    "sweep.threshold": (float, 3e-3),
    "sweep.e_min": (float, 100.0),
    "sweep.e_max": (float, 270.0),
    "recur.alpha": (float, 0.0),
    "recur.n_samples": (int, 8000),
    "recur.periods": (float, 6.0),
    "recur.samples_per_period": (int, 20),
    "recur.seed": (int, 12345),
    "dpt.center_nr": (int, 0),
    "dpt.center_m": (int, 0),
    "dpt.k_range": (int, 2),
    "dpt.mode": (str, "qdpt"),
    "dpt.theta_count": (int, 64),
    "render.state": (int, 0),
}


def _parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise KeyError("unknown config key %r" % key)
    typ = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
    except ValueError as exc:
        raise ValueError("bad value for %s: %s" % (key, exc)) from exc
    return raw


def _format_value(value) -> str:
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


@dataclass
class RunConfig:
    """Resolved configuration: every schema key has a value."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def updated(self, **overrides) -> "RunConfig":
        """Copy with dotted keys overridden (underscores map to dots)."""
        vals = dict(self.values)
        for key, val in overrides.items():
            key = key.replace("__", ".")
            if key not in SCHEMA:
                raise KeyError("unknown config key %r" % key)
            vals[key] = SCHEMA[key][0](val)
        return RunConfig(vals)

    def well(self):
        kind = self.values["well.kind"]
        if kind == "power":
            return PowerLaw(self.values["well.exponent"],
                            self.values["well.coefficient"])
        if kind == "cosh":
            return CoshWell(self.values["well.coefficient"])
        raise ValueError("unknown well.kind %r" % kind)

    def dump(self) -> str:
        lines = ["# scarlab run configuration (natural units: hbar = 1, mass = 1)"]
        for key in sorted(self.values):
            lines.append("%s = %s" % (key, _format_value(self.values[key])))
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """Content hash of the resolved configuration (first 12 hex digits)."""
        return hashlib.sha256(self.dump().encode()).hexdigest()[:12]


def default_config() -> RunConfig:
    return RunConfig({key: default for key, (_, default) in SCHEMA.items()})


def parse_config(text: str) -> RunConfig:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("line %d: expected 'key = value'" % lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = _parse_value(key, raw)
    return RunConfig(values)


def read_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def write_config(path, config: RunConfig) -> None:
    with open(path, "w") as fh:
        fh.write(config.dump())

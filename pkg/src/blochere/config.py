"""Flat ``section.key = value`` run configuration.

Every key has a declared type and default; the resolved mapping (defaults
included) is what gets echoed into a run manifest. A manifest JSON file can
be fed back as a config.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .field import COLORED_NOISE, EXPLICIT_3D, MODE_SUM, PHASE_ONLY

SUBCOMMANDS = ("simulate", "correlate", "ere", "validate", "sweep")


class ConfigError(ValueError):
    pass


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _int(text):
    if isinstance(text, bool):
        raise ValueError("boolean given")
    if isinstance(text, float):
        if not text.is_integer():
            raise ValueError(f"not an integer: {text!r}")
        return int(text)
    return int(str(text).strip())


def _choice(*options):
    def parse(text):
        v = str(text).strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {v!r}")
        return v
    return parse


# key -> (parser, default)
SCHEMA = {
    "run.seed": (_int, 0),
    "spectrum.shape": (_choice("lorentzian", "tabulated"), "lorentzian"),
    "spectrum.gamma": (float, 50.0),
    "spectrum.R0": (float, 0.1),
    "spectrum.omega0": (float, 0.0),
    "spectrum.omega21": (float, 0.0),
    "spectrum.table": (str, ""),
    "spectrum.b_coef": (float, 0.5),
    "field.backend": (_choice(COLORED_NOISE, MODE_SUM, "off"), COLORED_NOISE),
    "field.n_modes": (_int, 1024),
    "field.geometry": (_choice(PHASE_ONLY, EXPLICIT_3D), PHASE_ONLY),
    "field.span_width": (float, 200.0),
    "field.jitter": (_bool, False),
    "field.random_amplitudes": (_bool, False),
    "bloch.A": (float, 1.0),
    "bloch.dt": (float, 0.0),
    "bloch.form": (_choice("inversion", "population"), "inversion"),
    "bloch.tolerance": (float, 1e-7),
    "bloch.n0": (float, -1.0),
    "ensemble.n_atoms": (_int, 1000),
    "ensemble.t_end": (float, 5.0),
    "ensemble.n_out": (_int, 101),
    "correlate.t_ref": (float, 3.0),
    "correlate.lag_max": (float, 3.0),
    "correlate.n_lags": (_int, 31),
    "correlate.inversion": (_bool, True),
    "ere.A": (float, 1.0),
    "ere.R": (float, 1.0),
    "ere.n0": (float, -1.0),
    "ere.t_end": (float, 5.0),
    "ere.n_out": (_int, 101),
    "ere.mu": (float, 3.33564e-30),
    "ere.omega21_si": (float, 3.198e15),
    "grid.gamma": (_floats, (100.0, 20.0, 8.0, 4.0, 2.0, 1.33)),
    "grid.delta": (_floats, (0.0,)),
    "grid.R0": (_floats, (2.0,)),
    "grid.p_max": (_int, 4),
    "grid.t_end": (float, 5.0),
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    values: dict
    workers: int = 1

    def __getitem__(self, key):
        return self.values[key]

    def to_manifest(self):
        return {"subcommand": self.subcommand, "config": dict(self.values)}


def _coerce(key, raw):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    parser = SCHEMA[key][0]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: type mismatch ({exc})") from None


def parse_text(text, source="<config>"):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def read_file(path):
    """Raw key/value pairs from a config file or an emitted manifest."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        raw = dict(doc.get("config", doc))
        return raw, doc.get("subcommand")
    return parse_text(text, path), None


def resolve_workers(value=None):
    if value is None:
        env = os.environ.get("BLOCH_ERE_WORKERS")
        value = env if env else 1
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"BLOCH_ERE_WORKERS: not an integer ({value!r})") from None
    if n < 1:
        raise ConfigError("workers must be >= 1")
    return n


def parse_config(subcommand, path=None, overrides=(), seed=None, workers=None):
    """Resolve defaults, file values and ``key=value`` overrides, in that order."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    values = {k: v[1] for k, v in SCHEMA.items()}
    if path is not None:
        raw, manifest_cmd = read_file(path)
        if manifest_cmd is not None and manifest_cmd != subcommand:
            raise ConfigError(f"manifest is for {manifest_cmd!r}, not {subcommand!r}")
        for key, raw_value in raw.items():
            values[key] = _coerce(key, raw_value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw_value = (s.strip() for s in item.split("=", 1))
        values[key] = _coerce(key, raw_value)
    if seed is not None:
        values["run.seed"] = _coerce("run.seed", seed)
    if values["spectrum.shape"] == "tabulated" and not values["spectrum.table"]:
        raise ConfigError("spectrum.table: required when spectrum.shape = tabulated")
    return RunConfig(subcommand, values, resolve_workers(workers))

"""Flat key-value experiment configs with a strict schema.

Format: one ``section.key = value`` per line, ``#`` comments.  Unknown keys
are rejected; every tolerance and grid parameter is echoed verbatim into the
output metadata together with the config hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


def _parse_bool(s):
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_floats(s):
    return [float(tok) for tok in s.replace(";", ",").split(",") if tok.strip()]


# key -> (type tag, default); None default means "unset"
SCHEMA = {
    "data.preset": ("str", "gaussian"),
    "data.file": ("str", None),
    "data.support_radius": ("float", None),
    "data.c1": ("float", None),
    "data.c2": ("float", None),
    "profile.preset": ("str", None),
    "profile.file": ("str", None),
    "profile.sigma_min": ("float", -60.0),
    "profile.sigma_step": ("float", 0.05),
    "profile.n_theta": ("int", 256),
    "profile.slice_step": ("float", 0.02),
    "profile.line_step": ("float", None),
    "profile.panel_width": ("float", 0.5),
    "profile.derivative": ("str", "regularized-integral"),
    "decay.orders": ("floats", [0.0, 1.0]),
    "predict.refine": ("float", 1e-9),
    "predict.hessian_floor": ("float", 1e-6),
    "sim.geometry": ("str", "radial"),
    "sim.epsilon": ("float", 0.1),
    "sim.h": ("float", None),
    "sim.n_theta": ("int", 256),
    "sim.window_depth": ("float", None),
    "sim.taper_width": ("float", 5.0),
    "sim.extent": ("float", None),
    "sim.r_max": ("float", None),
    "sim.horizon": ("float", None),
    "sim.horizon_factor": ("float", 1.7),
    "sim.cfl": ("float", 0.45),
    "sim.snapshot_times": ("floats", None),
    "detect.growth_factor": ("float", 8.0),
    "detect.hard_threshold": ("float", 10.0),
    "detect.max_refinements": ("int", 4),
    "detect.refine_h": ("bool", True),
    "detect.monitor_dt": ("float", None),
    "scaling.epsilons": ("floats", [0.4, 0.2, 0.1, 0.05]),
    "scaling.geometry": ("str", "radial"),
    "scaling.horizon_factor": ("float", 1.7),
    "residual.epsilons": ("floats", [0.4, 0.2, 0.1]),
    "residual.b_factor": ("float", 0.5),
    "residual.h": ("float", 0.01),
    "residual.snap_dt": ("float", 0.02),
    "geometry.tau1_factor": ("float", 0.25),
    "geometry.eta_factor": ("float", 0.05),
    "geometry.refine": ("float", 1e-6),
}

_PARSERS = {
    "str": lambda s: s.strip(),
    "float": float,
    "int": int,
    "bool": _parse_bool,
    "floats": _parse_floats,
}


@dataclass
class ExperimentConfig:
    values: dict
    raw_text: str

    def get(self, key):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values.get(key, SCHEMA[key][1])

    def set(self, key, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = value

    def sha256(self):
        canonical = "\n".join(
            f"{k}={self.values[k]!r}" for k in sorted(self.values))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def provenance(self):
        from . import __version__
        echoed = {k: self.get(k) for k in sorted(SCHEMA)
                  if self.get(k) is not None}
        return {"config_sha256": self.sha256(), "version": __version__,
                "parameters": echoed}


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = SCHEMA[key][0]
        try:
            values[key] = _PARSERS[kind](val.strip())
        except (ValueError, TypeError) as exc:
            raise ConfigError(
                f"line {lineno}: bad {kind} value for {key}: {val.strip()!r}"
            ) from exc
    return ExperimentConfig(values=values, raw_text=text)


def load_config(path=None):
    if path is None:
        return ExperimentConfig(values={}, raw_text="")
    with open(path) as fh:
        return parse_config_text(fh.read())

"""Run configuration: JSON schema, defaults, and model construction.

A config file is a JSON object with sections ``grid``, ``model``,
``profiles`` and ``params`` plus ``seed`` and ``output_dir``. Any known key
may also be given at top level (``{"case": "competing", "xi": 2}``); it is
moved into its section before validation.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .model import Model, make_model
from .spectral import PROFILE_FAMILIES, normalize_profile, profile_samples

DEFAULTS = {
    "grid": {"L": 1.0, "n_x": 64, "a_m": 1.0, "n_a": 128},
    "model": {"alpha1": 1.0, "alpha2": 1.0, "beta1": 1.0, "beta2": 1.0,
              "case": "competing"},
    "profiles": {"b1": {"family": "constant"}, "b2": {"family": "constant"}},
    "params": {"eta": None, "xi": 2.0, "eta_max": 1e3, "norm_cap": 1e6,
               "etas": [1.5, 2.0, 3.0, 4.0], "trials": 50, "s": 1.0,
               "tolerances": {"condition": 1e-8, "newton": 1e-10}},
    "seed": 0,
    "output_dir": "agebif_out",
}

_positive = {"type": "number", "exclusiveMinimum": 0}
_profile = {
    "type": "object",
    "properties": {
        "family": {"enum": list(PROFILE_FAMILIES)},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "file": {"type": "string"},
    },
    "additionalProperties": False,
    "oneOf": [{"required": ["family"]}, {"required": ["file"]}],
}

SCHEMA = {
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {
                "L": _positive, "a_m": _positive,
                "n_x": {"type": "integer", "minimum": 3},
                "n_a": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "model": {
            "type": "object",
            "properties": {
                "alpha1": _positive, "alpha2": _positive,
                "beta1": _positive, "beta2": _positive,
                "case": {"enum": ["cooperative", "competing", "predator_prey"]},
            },
            "additionalProperties": False,
        },
        "profiles": {
            "type": "object",
            "properties": {"b1": _profile, "b2": _profile},
            "additionalProperties": False,
        },
        "params": {
            "type": "object",
            "properties": {
                "eta": {"type": ["number", "null"]},
                "xi": {"anyOf": [_positive, {"type": "array", "items": _positive,
                                             "minItems": 1}]},
                "eta_max": _positive, "norm_cap": _positive, "s": _positive,
                "etas": {"type": "array", "items": _positive},
                "trials": {"type": "integer", "minimum": 1},
                "tolerances": {"type": "object",
                               "additionalProperties": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
    },
    "additionalProperties": False,
}

_SECTION_OF = {key: sec for sec in ("grid", "model", "params")
               for key in DEFAULTS[sec]}


@dataclass
class RunConfig:
    grid: dict
    model: dict
    profiles: dict
    params: dict
    seed: int
    output_dir: str
    profile_scales: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Resolved config without the output location."""
        return {"grid": self.grid, "model": self.model, "profiles": self.profiles,
                "params": self.params, "seed": self.seed}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def xis(self) -> list[float]:
        xi = self.params["xi"]
        return [float(x) for x in xi] if isinstance(xi, list) else [float(xi)]


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k == "profiles" and isinstance(v, dict) and isinstance(out.get(k), dict):
            # each profile spec is replaced whole (family and file exclude each other)
            out[k] = {**out[k], **copy.deepcopy(v)}
        elif isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _lift_flat(raw: dict) -> dict:
    """Move top-level shortcut keys into their sections."""
    raw = dict(raw)
    lifted: dict = {}
    for key in list(raw):
        if key in _SECTION_OF:
            lifted.setdefault(_SECTION_OF[key], {})[key] = raw.pop(key)
    for sec, vals in lifted.items():
        raw[sec] = {**raw.get(sec, {}), **vals}
    return raw


def _validation_message(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"config field '{where}': {err.message}"


def parse_config(path: str | os.PathLike | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Load, merge with defaults, validate and resolve a run configuration.

    ``overrides`` (e.g. from command-line flags, flat or sectioned) take
    precedence over the file. ``AGEBIF_OUTPUT_DIR`` overrides ``output_dir``.

    Raises
    ------
    ConfigError
        On unreadable files, schema violations or unusable profiles.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = _lift_flat(raw)
    if overrides:
        raw = _merge(raw, _lift_flat(overrides))
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(_validation_message(errors[0]))
    cfg = _merge(DEFAULTS, raw)
    env_dir = os.environ.get("AGEBIF_OUTPUT_DIR")
    if env_dir:
        cfg["output_dir"] = env_dir
    base = Path(path).parent if path is not None else Path(".")
    for key in ("b1", "b2"):
        spec = cfg["profiles"][key]
        if "file" in spec:
            spec["file"] = str((base / spec["file"]).resolve()) if not os.path.isabs(
                spec["file"]) else spec["file"]
    rc = RunConfig(cfg["grid"], cfg["model"], cfg["profiles"], cfg["params"],
                   int(cfg["seed"]), str(cfg["output_dir"]))
    rc.grid["n_x"] = int(rc.grid["n_x"])
    rc.grid["n_a"] = int(rc.grid["n_a"])
    return rc


def read_profile_file(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Two-column CSV of ``age,value`` rows; a non-numeric header is skipped."""
    ages, vals = [], []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    a, b = float(row[0]), float(row[1])
                except (ValueError, IndexError):
                    if ages:
                        raise ConfigError(f"{path}: malformed row {row}")
                    continue
                ages.append(a)
                vals.append(b)
    except OSError as exc:
        raise ConfigError(f"cannot read profile file {path}: {exc}") from exc
    if len(ages) < 2:
        raise ConfigError(f"{path}: need at least two (age, value) rows")
    a = np.array(ages)
    if np.any(np.diff(a) <= 0):
        raise ConfigError(f"{path}: ages must be strictly increasing")
    return a, np.array(vals)


def _raw_profile(spec: dict, model_grid) -> tuple[np.ndarray, str]:
    ag = model_grid
    if "file" in spec:
        a, b = read_profile_file(spec["file"])
        return np.interp(ag.ages, a, b), Path(spec["file"]).name
    return profile_samples(spec["family"], ag, **spec.get("params", {})), spec["family"]


def build_model(cfg: RunConfig) -> Model:
    """Model for a resolved config; records the applied profile scales."""
    g, m, p = cfg.grid, cfg.model, cfg.params
    try:
        model = make_model(m["case"], g["L"], g["n_x"], g["a_m"], g["n_a"],
                           m["alpha1"], m["alpha2"], m["beta1"], m["beta2"],
                           eta_max=p["eta_max"], norm_cap=p["norm_cap"])
        profiles = {}
        for key in ("b1", "b2"):
            raw, name = _raw_profile(cfg.profiles[key], model.ag)
            profiles[key] = normalize_profile(raw, model.eig, model.ag, name=name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    model.b1, model.b2 = profiles["b1"], profiles["b2"]
    cfg.profile_scales = {k: v.scale for k, v in profiles.items()}
    return model

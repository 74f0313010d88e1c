"""
JSON configuration schemas and builders.

Every document is validated before any compute; unknown keys are rejected.
Validation errors become ``ConfigError`` with a dotted path to the offending
key.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import fields

import jsonschema

from . import lle, mbe
from .analysis import RegimeThresholds
from .errors import ConfigError, DomainError
from .params import PhysicalParams, pump_delivery, pump_to_d0

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int = {"type": "integer"}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_modes = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1, "maxItems": 2}]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


PHYSICAL_SCHEMA = _obj({
    "omega_a": _pos, "omega_m": _pair, "g_m": _pair, "gamma_m": _pair,
    "gamma_E": _pos, "gamma_D": _pos, "gamma_P": _pos,
    "c_eff": _pos, "radius": _pos,
    "omega_0": {"type": ["number", "null"]},
    "mode_table": {"type": "object"},
}, required=["omega_a", "omega_m", "g_m", "gamma_m", "gamma_E", "gamma_D",
             "gamma_P", "c_eff", "radius"])

NORMALIZE_SCHEMA = _obj({
    "physical": PHYSICAL_SCHEMA,
    "mode_index": {"enum": [1, 2]},
    "C": _pos,
}, required=["physical", "C"])

PUMP_SCHEMA = _obj({
    "power_w": _nonneg, "detuning_hz": _num, "fwhm_hz": _pos,
    "sat_power_w": _pos, "d0_max": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
    "chi": _num,
}, required=["power_w", "detuning_hz", "fwhm_hz", "sat_power_w", "d0_max", "chi"])

MBE_INIT_SCHEMA = _obj({
    "kind": {"enum": ["noise", "trivial", "fixed_point"]},
    "amplitude": _nonneg,
    "perturbation": _num,
    "phase": _num,
})

MBE_SCHEMA = _obj({
    "theta": _modes, "gamma": _modes, "C": _modes,
    "delta": _num, "gamma_a": _nonneg, "gamma_i": _nonneg, "d0_over_chi": _num,
    "grid_points": {"type": "integer", "minimum": 1},
    "c_eff": _nonneg, "radius": _pos,
    "dt": {"oneOf": [_pos, {"type": "null"}]},
    "t_end": _nonneg,
    "spin_packets": {"type": "integer", "minimum": 1},
    "packet_spread": _nonneg,
    "packet_sharing": {"enum": ["shared", "disjoint"]},
    "noise_amplitude": _nonneg, "noise_seed": _int,
    "sample_stride": {"type": "integer", "minimum": 1},
    "snapshot_stride": {"type": "integer", "minimum": 0},
    "readout": {"enum": ["mean", "probe"]},
    "pump": PUMP_SCHEMA,
    "init": MBE_INIT_SCHEMA,
    "preset": {"type": "string"},
})

LLE_INIT_SCHEMA = _obj({
    "kind": {"enum": ["zero", "cw_noise", "sech", "modes"]},
    "cw": _num, "noise": _nonneg,
    "amplitude": _num, "center": _num, "width": _pos,
    "modes": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
})

LLE_SCHEMA = _obj({
    "theta0": _num, "eta": {"enum": [1, -1]}, "beta": _num,
    "grid_points": _int, "dt_bar": _pos, "t_bar_end": _nonneg,
    "drive_amplitude": {"oneOf": [_num, _pair]},
    "loss_enabled": {"type": "boolean"}, "nonlinear_enabled": {"type": "boolean"},
    "dealias": {"type": "boolean"},
    "noise_seed": _int,
    "sample_stride": {"type": "integer", "minimum": 1},
    "snapshot_stride": {"type": "integer", "minimum": 0},
    "init": LLE_INIT_SCHEMA,
}, required=["theta0", "eta", "beta"])

THRESHOLDS_SCHEMA = _obj({f.name: _num if f.type == "float" else _int
                          for f in fields(RegimeThresholds)})

ANALYSIS_SCHEMA = _obj({
    "tail_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "channel": {"type": "integer", "minimum": 0},
    "window": {"enum": ["rectangular", "hann"]},
    "k": _nonneg,
    "dynamic_range_db": _pos,
    "fit_pulses": {"type": "integer", "minimum": 0},
    "thresholds": THRESHOLDS_SCHEMA,
})

SWEEP_SCHEMA = _obj({
    "solver": {"enum": ["mbe", "lle"]},
    "base_config": {"type": "object"},
    "axes": {"type": "array", "minItems": 1, "items": _obj({
        "path": {"type": "string", "minLength": 1},
        "values": {"type": "array", "minItems": 1, "items": _num},
    }, required=["path", "values"])},
    "seed": _int,
    "seed_policy": {"enum": ["index", "shared", "abs-value"]},
    "mode": {"enum": ["fresh", "continuation"]},
    "analysis": ANALYSIS_SCHEMA,
    "workers": {"type": "integer", "minimum": 1},
    "write_series": {"type": "boolean"},
    "max_series_bytes": {"type": "integer", "minimum": 0},
    "inject_failure": {"type": "array", "items": {"type": "integer", "minimum": 0}},
}, required=["solver", "base_config", "axes"])

SCHEMAS = {
    "physical": PHYSICAL_SCHEMA,
    "normalize": NORMALIZE_SCHEMA,
    "mbe": MBE_SCHEMA,
    "lle": LLE_SCHEMA,
    "analysis": ANALYSIS_SCHEMA,
    "sweep": SWEEP_SCHEMA,
}


def _error_path(err):
    path = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        # message: "'name' is a required property"
        path.append(err.message.split("'")[1])
    elif err.validator == "additionalProperties":
        extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
        if extra:
            path.append(sorted(extra)[0])
    return ".".join(path) or "<root>"


def validate(doc, schema_name):
    schema = SCHEMAS[schema_name]
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(list(e.absolute_path)), e.message))
    if errors:
        # prefer the most specific error
        err = jsonschema.exceptions.best_match(errors)
        path = _error_path(err)
        if err.validator == "required":
            msg = f"missing required field {path!r}"
        elif err.validator == "additionalProperties":
            msg = f"unknown key {path!r}"
        else:
            msg = f"{path}: {err.message}"
        raise ConfigError(msg, path=path)
    return doc


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(doc):
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", path=str(path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}", path=str(path))


# ---- builders --------------------------------------------------------------

def build_physical(doc):
    validate(doc, "physical")
    return PhysicalParams.from_dict(doc)


def resolve_pump(doc):
    """Replace a ``pump`` block by the d0_over_chi it implies."""
    doc = dict(doc)
    pump = doc.pop("pump", None)
    if pump is not None:
        delivered = pump_delivery(pump["power_w"], pump["detuning_hz"], pump["fwhm_hz"])
        d0 = pump_to_d0(delivered, pump["sat_power_w"], pump["d0_max"])
        if pump["chi"] == 0:
            raise DomainError("pump.chi must be non-zero")
        doc["d0_over_chi"] = d0 / pump["chi"]
    return doc


def build_mbe(doc):
    """Validated ``(MbeConfig, init_spec)`` from a JSON document."""
    from .presets import preset_config

    validate(doc, "mbe")
    doc = copy.deepcopy(doc)
    name = doc.pop("preset", None)
    if name is not None:
        base = preset_config(name)
        base.update(doc)
        doc = base
        validate(doc, "mbe")
    doc = resolve_pump(doc)
    init = doc.pop("init", {"kind": "noise"})
    try:
        cfg = mbe.MbeConfig(**doc)
    except DomainError:
        raise
    except TypeError as exc:
        raise ConfigError(str(exc))
    return cfg, init


def mbe_initial_state(cfg, init, seed=None):
    kind = init.get("kind", "noise")
    if kind == "trivial":
        return mbe.trivial_state(cfg)
    if kind == "fixed_point":
        fp = mbe.mbe_cw_fixed_point(cfg)
        state = fp.state(cfg, phase=init.get("phase", 0.0))
        eps = init.get("perturbation", 0.0)
        if eps:
            state.F = state.F * (1 + eps)
        return state
    return mbe.noise_state(cfg, seed=seed, amplitude=init.get("amplitude"))


def build_lle(doc):
    validate(doc, "lle")
    doc = copy.deepcopy(doc)
    init = doc.pop("init", {"kind": "cw_noise"})
    drive = doc.get("drive_amplitude", 0.0)
    if isinstance(drive, list):
        doc["drive_amplitude"] = complex(drive[0], drive[1])
    return lle.LleConfig(**doc), init


def lle_initial_field(cfg, init, seed=None):
    n = cfg.grid_points
    kind = init.get("kind", "cw_noise")
    if kind == "zero":
        return lle.zero_field(n)
    if kind == "sech":
        amp = init.get("amplitude", 1.0)
        return lle.sech_field(n, amp, init.get("center", math.pi), init.get("width"),
                              beta=abs(cfg.beta) or 1.0)
    if kind == "modes":
        import numpy as np
        phi = lle.ring_grid(n)
        f = np.zeros(n, complex)
        for k, re, im in init["modes"]:
            f += complex(re, im) * np.exp(1j * int(k) * phi)
        return lle.RingField(f)
    return lle.cw_noise_field(n, init.get("cw", 0.0), init.get("noise", 1e-3),
                              cfg.noise_seed if seed is None else seed)


def build_thresholds(doc):
    return RegimeThresholds(**(doc or {}))

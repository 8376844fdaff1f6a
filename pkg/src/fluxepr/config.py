"""JSON run configuration: strict schema, defaults, and construction of the
simulation objects. All values SI, frequencies in Hz."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .constants import FLUX_QUANTUM
from .coupling import flux_per_moment, square_vertices
from .fluxqubit import DEFAULT_GAP, DEFAULT_LOOP_SIDE, DEFAULT_PERSISTENT_CURRENT, FluxQubit
from .readout import ReadoutModel
from .spinsys import NV_ORIENTATION_ROTATIONS, FieldConfig, SpinSystem, frame_from_axis
from .sweep import DriveConfig, ExperimentConfig, Relaxation, SpinEnsemble


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "qubit": _section({
            "persistent_current": _POS,
            "gap": _POS,
            "loop_side": _POS,
            "loop_vertices": {"type": "array", "minItems": 3,
                              "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
            "working_flux_offset_phi0": _NUM,
        }),
        "readout": _section({
            "visibility": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "linewidth": _POS,
            "n_repetitions": {"type": "integer", "minimum": 1},
            "repetition_period": _POS,
            "drift_floor": _NONNEG,
            "excitation_side": {"enum": [1, -1]},
        }),
        "spins": _section({
            "species": {"enum": ["nv", "generic"]},
            "spin": _POS,
            "g": {"oneOf": [_POS, {"type": "array", "minItems": 3, "maxItems": 3, "items": _VEC3}]},
            "D": _NUM,
            "E": _NUM,
            "zfs_axis": _VEC3,
            "orientations": {"enum": ["nv4", "single"]},
            "count": _NONNEG,
            "position": _VEC3,
            "flux_per_moment": _VEC3,
            "moment_sign": {"enum": [1, -1]},
        }),
        "field": _section({
            "b_parallel": _NONNEG,
            "b_perpendicular": _NONNEG,
            "parallel_direction": _VEC3,
            "misalignment_deg": _NUM,
            "tilt_axis": _VEC3,
        }),
        "drive": _section({
            "start": _POS, "stop": _POS,
            "points": {"type": "integer", "minimum": 2},
            "linewidth": _POS, "saturation": _NONNEG, "asymmetry": _NONNEG,
        }),
        "relaxation": _section({"gamma10": _NONNEG, "gamma20": _NONNEG, "gamma21": _NONNEG}),
        "sweep": _section({
            "temperature": _POS,
            "dynamic_range": {"oneOf": [_POS, {"type": "null"}]},
            "shot_noise": {"type": "boolean"},
            "temperatures": {"type": "array", "items": _POS, "minItems": 1},
            "fields": {"type": "array", "items": _POS, "minItems": 1},
            "n_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "p_true": {"type": "number", "minimum": 0, "maximum": 1},
            "n_batches": {"type": "integer", "minimum": 2},
            "drift_mode": {"enum": ["random", "sinusoidal"]},
        }),
        "seed": {"type": "integer", "minimum": 0},
        "notes": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}

_SIDE = DEFAULT_LOOP_SIDE

DEFAULTS = {
    "qubit": {
        "persistent_current": DEFAULT_PERSISTENT_CURRENT,
        "gap": DEFAULT_GAP,
        "loop_side": _SIDE,
        "working_flux_offset_phi0": 0.003,
    },
    "readout": {
        "visibility": 0.6, "linewidth": 20e6, "n_repetitions": 1000,
        "repetition_period": 200e-6, "drift_floor": 0.0, "excitation_side": 1,
    },
    "spins": {
        "species": "nv", "spin": 1, "g": 2.0028, "D": 2.87e9, "E": 0.0,
        "orientations": "nv4", "count": 0.0,
        "position": [-_SIDE / 2 + 1e-6, 0.0, 1e-6], "moment_sign": 1,
    },
    "field": {
        "b_parallel": 0.0, "b_perpendicular": 0.0, "parallel_direction": [1.0, 0.0, 0.0],
        "misalignment_deg": 0.0, "tilt_axis": [0.0, 0.0, 1.0],
    },
    "drive": {"start": 2.6e9, "stop": 3.2e9, "points": 601, "linewidth": 5e6,
              "saturation": 10.0, "asymmetry": 0.0},
    "relaxation": {"gamma10": 1e3, "gamma20": 1e3, "gamma21": 0.0},
    "sweep": {
        "temperature": 0.02, "dynamic_range": None, "shot_noise": True,
        "temperatures": [0.05, 0.1, 0.2], "fields": [1e-3, 2e-3, 3e-3, 4e-3],
        "n_list": [100, 200, 500, 1000, 2000, 5000, 10000, 20000],
        "p_true": 0.45, "n_batches": 400, "drift_mode": "random",
    },
    "seed": 0,
    "notes": {},
}

PRESETS = ("nv-5p8mT", "er-polarization", "noise-fig4")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(doc) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at '{where}': {exc.message}") from None


def resolve(doc: dict) -> dict:
    """Validate a user document and fill defaults."""
    validate(doc)
    spins = doc.get("spins", {})
    if "position" in spins and "flux_per_moment" in spins:
        raise ConfigError("config error at 'spins': give either position or flux_per_moment")
    qubit = doc.get("qubit", {})
    if "loop_side" in qubit and "loop_vertices" in qubit:
        raise ConfigError("config error at 'qubit': give either loop_side or loop_vertices")
    base = copy.deepcopy(DEFAULTS)
    if "flux_per_moment" in spins:
        base["spins"].pop("position")
    if "loop_vertices" in qubit:
        base["qubit"].pop("loop_side")
    out = _merge(base, doc)
    validate(out)
    return out


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("fluxepr").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def load(path: str | Path | None = None, preset: str | None = None) -> dict:
    if path is None and preset is None:
        return resolve({})
    if path is not None and preset is not None:
        raise ConfigError("use either --config or --preset")
    if preset is not None:
        return resolve(load_preset(preset))
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config error at '<root>': expected an object")
    return resolve(doc)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_qubit(cfg: dict) -> FluxQubit:
    q = cfg["qubit"]
    loop = np.asarray(q["loop_vertices"], dtype=float) if "loop_vertices" in q \
        else square_vertices(q["loop_side"])
    return FluxQubit(q["persistent_current"], q["gap"], loop)


def working_flux(cfg: dict) -> float:
    return FLUX_QUANTUM * (0.5 + cfg["qubit"]["working_flux_offset_phi0"])


def build_readout(cfg: dict) -> ReadoutModel:
    r = cfg["readout"]
    return ReadoutModel(r["visibility"], r["linewidth"], 7e9, r["n_repetitions"],
                        r["repetition_period"], r["drift_floor"])


def build_field(cfg: dict) -> FieldConfig:
    f = cfg["field"]
    d = np.asarray(f["parallel_direction"], dtype=float)
    return FieldConfig(f["b_parallel"], f["b_perpendicular"], tuple(d / np.linalg.norm(d)),
                       f["misalignment_deg"], tuple(f["tilt_axis"]))


def build_ensemble(cfg: dict, qubit: FluxQubit | None = None) -> SpinEnsemble:
    s = cfg["spins"]
    qubit = qubit or build_qubit(cfg)
    g = s["g"]
    if s["species"] == "nv":
        if not isinstance(g, (int, float)):
            raise ConfigError("config error at 'spins/g': NV centres take a scalar g")
        system = SpinSystem.nv_center(g, s["D"], s["E"])
    else:
        g_t = g * np.eye(3) if isinstance(g, (int, float)) else np.asarray(g, dtype=float)
        axes = frame_from_axis(s["zfs_axis"]) if "zfs_axis" in s else np.eye(3)
        system = SpinSystem(s["spin"], g_t, s["D"], s["E"], axes)
    rots = NV_ORIENTATION_ROTATIONS if s["orientations"] == "nv4" else (np.eye(3),)
    if "flux_per_moment" in s:
        fpm = tuple(float(x) for x in s["flux_per_moment"])
    else:
        fpm = tuple(float(x) for x in flux_per_moment(qubit.loop, s["position"]))
    return SpinEnsemble(system, s["count"], fpm, tuple(rots), None, float(s["moment_sign"]))


def build_experiment(cfg: dict) -> ExperimentConfig:
    qubit = build_qubit(cfg)
    d = cfg["drive"]
    rl = cfg["relaxation"]
    sw = cfg["sweep"]
    return ExperimentConfig(
        qubit=qubit,
        readout=build_readout(cfg),
        spins=build_ensemble(cfg, qubit),
        field=build_field(cfg),
        temperature=sw["temperature"],
        drive=DriveConfig(d["start"], d["stop"], d["points"], d["linewidth"], d["saturation"],
                          d["asymmetry"]),
        relaxation=Relaxation(rl["gamma10"], rl["gamma20"], rl["gamma21"]),
        working_flux=working_flux(cfg),
        dynamic_range=sw["dynamic_range"],
        shot_noise=sw["shot_noise"],
        excitation_side=cfg["readout"]["excitation_side"],
        seed=cfg["seed"],
    )

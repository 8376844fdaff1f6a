import json

import numpy as np
import pytest

from fluxepr import config
from fluxepr.constants import FLUX_QUANTUM
from fluxepr.coupling import flux_per_moment


def test_defaults_resolve_and_build():
    cfg = config.load()
    exp = config.build_experiment(cfg)
    assert exp.working_flux == pytest.approx(FLUX_QUANTUM * 0.503)
    assert exp.qubit.loop_area == pytest.approx(47.2e-12, rel=1e-12)
    assert len(exp.spins.orientations) == 4


@pytest.mark.parametrize("name", config.PRESETS)
def test_presets_load_and_build(name):
    cfg = config.load(preset=name)
    config.build_experiment(cfg)
    assert cfg["notes"]


def test_unknown_key_rejected_with_path():
    with pytest.raises(config.ConfigError, match="readout"):
        config.resolve({"readout": {"visibilty": 0.5}})
    with pytest.raises(config.ConfigError, match="bogus"):
        config.resolve({"bogus": 1})


def test_type_and_range_errors_name_the_key():
    with pytest.raises(config.ConfigError, match="drive/points"):
        config.resolve({"drive": {"points": 1}})
    with pytest.raises(config.ConfigError, match="readout/visibility"):
        config.resolve({"readout": {"visibility": 1.5}})


def test_mutually_exclusive_options():
    with pytest.raises(config.ConfigError):
        config.resolve({"spins": {"position": [0, 0, 1e-6], "flux_per_moment": [1, 0, 0]}})
    with pytest.raises(config.ConfigError):
        config.resolve({"qubit": {"loop_side": 1e-6, "loop_vertices": [[0, 0], [1, 0], [0, 1]]}})
    with pytest.raises(config.ConfigError):
        config.load("x.json", "nv-5p8mT")


def test_file_loading_errors(tmp_path):
    with pytest.raises(config.ConfigError, match="not found"):
        config.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(config.ConfigError, match="JSON"):
        config.load(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(config.ConfigError):
        config.load(arr)
    with pytest.raises(config.ConfigError, match="preset"):
        config.load(preset="nope")


def test_hash_is_stable_and_sensitive():
    a = config.load(preset="nv-5p8mT")
    b = json.loads(json.dumps(a))
    assert config.config_hash(a) == config.config_hash(b)
    b["seed"] += 1
    assert config.config_hash(a) != config.config_hash(b)


def test_position_converted_to_flux_per_moment():
    cfg = config.load(preset="nv-5p8mT")
    ens = config.build_ensemble(cfg)
    ref = flux_per_moment(config.build_qubit(cfg).loop, cfg["spins"]["position"])
    assert np.array(ens.flux_per_moment) == pytest.approx(ref)


def test_custom_loop_and_generic_species():
    cfg = config.resolve({
        "qubit": {"loop_vertices": [[0, 0], [5e-6, 0], [5e-6, 4e-6], [0, 4e-6]]},
        "spins": {"species": "generic", "spin": 0.5, "g": [[2, 0, 0], [0, 2, 0], [0, 0, 3]],
                  "orientations": "single", "flux_per_moment": [0, 0, 1e-9]},
    })
    exp = config.build_experiment(cfg)
    assert exp.qubit.loop_area == pytest.approx(20e-12)
    assert exp.spins.system.g_tensor[2, 2] == 3


def test_nv_requires_scalar_g():
    cfg = config.resolve({"spins": {"g": [[2, 0, 0], [0, 2, 0], [0, 0, 2]]}})
    with pytest.raises(config.ConfigError):
        config.build_ensemble(cfg)

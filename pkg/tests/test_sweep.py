import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxepr import config
from fluxepr.constants import BOLTZMANN, FLUX_QUANTUM, PLANCK
from fluxepr.errors import DegenerateModelError, InvalidArgumentError, SimulationError
from fluxepr.fluxqubit import FluxQubit, flux_to_frequency_slope
from fluxepr.readout import ReadoutModel
from fluxepr.spinsys import FieldConfig, SpinSystem, build_hamiltonian, diagonalize
from fluxepr.sweep import (
    DriveConfig,
    ExperimentConfig,
    Relaxation,
    SpinEnsemble,
    driven_populations,
    ensemble_response,
    rate_steady_state,
    saturation_factor,
    simulate_epr_sweep,
    simulate_polarization_map,
    simulate_qubit_spectrum,
    static_flux,
    static_shift,
    three_level_steady_state,
)


def _spin_half_experiment(**kw) -> ExperimentConfig:
    sys = SpinSystem.isotropic(0.5, 2.0)
    ens = SpinEnsemble(sys, 1e5, (1e-8, 0.0, 0.0))
    base = dict(
        qubit=FluxQubit(), readout=ReadoutModel(), spins=ens, field=FieldConfig(4e-3),
        temperature=0.05, drive=DriveConfig(0.05e9, 0.17e9, 121, 2e6, 10.0),
        relaxation=Relaxation(1e3, 0.0, 0.0), shot_noise=False,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50e6, 50e6), st.floats(1e5, 1e7), st.floats(0.0, 1e3))
def test_saturation_factor_bounds(delta, gamma, s0):
    s = saturation_factor(3e9 + delta, 3e9, gamma, s0)
    assert 0.0 <= s <= 1.0
    assert saturation_factor(3e9, 3e9, gamma, s0) >= s - 1e-15


def test_saturation_factor_limits():
    assert saturation_factor(1.0, 1.0, 1.0, math.inf) == 1.0
    assert saturation_factor(1.0, 1.0, 1.0, 0.0) == 0.0
    assert saturation_factor(1.0, 1.0, 1.0, 1.0) == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        saturation_factor(1.0, 1.0, 0.0, 1.0)


def test_rate_steady_state_detailed_balance():
    r = np.array([[0, 2.0, 0], [1.0, 0, 3.0], [0, 1.5, 0]])
    p = rate_steady_state(r)
    assert p.sum() == pytest.approx(1.0)
    gen = r.T - np.diag(r.sum(axis=1))
    assert gen @ p == pytest.approx(np.zeros(3), abs=1e-14)


def test_rate_steady_state_degenerate():
    with pytest.raises(DegenerateModelError):
        rate_steady_state(np.zeros((3, 3)))
    with pytest.raises(InvalidArgumentError):
        rate_steady_state(-np.ones((2, 2)))


def test_three_level_closed_form():
    # pump 0<->1 only, decay 1->0 and 2->0; level 2 empties
    p = three_level_steady_state(5.0, 0.0, 1.0, 1.0, 0.0)
    assert p == pytest.approx([6 / 11, 5 / 11, 0.0])


def test_two_level_saturation_matches_closed_form():
    cfg = _spin_half_experiment()
    sys = cfg.spins.system
    spec = diagonalize(build_hamiltonian(sys, cfg.field))
    f0 = spec.eigenvalues[1] - spec.eigenvalues[0]
    x = PLANCK * f0 / (BOLTZMANN * cfg.temperature)
    pol_thermal = math.tanh(x / 2)
    for det in (0.0, 2e6, 7e6):
        p = driven_populations(spec, f0 + det, cfg)
        s = saturation_factor(f0 + det, f0, cfg.drive.linewidth, cfg.drive.saturation)
        assert p[0] - p[1] == pytest.approx(pol_thermal * (1 - s), rel=1e-10)


def test_spin_half_static_shift_closed_form():
    cfg = _spin_half_experiment()
    shift, flux = static_shift(cfg)
    # moment along +x for the ground state: -mu_B g <S_x> = +mu_B at g=2
    spec = diagonalize(build_hamiltonian(cfg.spins.system, cfg.field))
    f0 = spec.eigenvalues[1] - spec.eigenvalues[0]
    pol = math.tanh(PLANCK * f0 / (2 * BOLTZMANN * cfg.temperature))
    mu_b = 9.2740100783e-24
    assert flux == pytest.approx(1e5 * pol * mu_b * 1e-8, rel=1e-6)
    slope = flux_to_frequency_slope(cfg.qubit, cfg.working_flux)
    assert shift == pytest.approx(slope * flux, rel=1e-9)


def test_zero_spin_count_gives_flat_zero_baseline():
    cfg = _spin_half_experiment(spins=SpinEnsemble(SpinSystem.isotropic(0.5, 2.0), 0.0, (1e-8, 0, 0)))
    recs = simulate_epr_sweep(cfg)
    assert all(r.qubit_shift == 0.0 for r in recs)
    assert len({r.switching_probability for r in recs}) == 1


def test_sweep_dip_at_resonance():
    cfg = _spin_half_experiment()
    recs = simulate_epr_sweep(cfg)
    base, _ = static_shift(cfg)
    spec = diagonalize(build_hamiltonian(cfg.spins.system, cfg.field))
    f0 = spec.eigenvalues[1] - spec.eigenvalues[0]
    k = int(np.argmax([abs(r.qubit_shift - base) for r in recs]))
    step = cfg.drive.frequencies()[1] - cfg.drive.frequencies()[0]
    assert abs(recs[k].drive_frequency - f0) <= step
    # saturation removes polarization: the shift moves toward zero on resonance
    assert abs(recs[k].qubit_shift) < abs(recs[0].qubit_shift)


def test_flux_shift_is_shift_over_slope():
    cfg = _spin_half_experiment()
    slope = flux_to_frequency_slope(cfg.qubit, cfg.working_flux)
    for r in simulate_epr_sweep(cfg)[::20]:
        assert r.flux_shift == pytest.approx(r.qubit_shift / slope, rel=1e-12)


def test_sweep_seed_determinism_and_noise():
    cfg = _spin_half_experiment(shot_noise=True, seed=5)
    a = simulate_epr_sweep(cfg)
    assert a == simulate_epr_sweep(cfg)
    assert a != simulate_epr_sweep(replace(cfg, seed=6))


def test_dynamic_range_clipping():
    cfg = _spin_half_experiment()
    free = ensemble_response(cfg, cfg.drive.frequencies())[0]
    bound = 0.5 * np.abs(free).max()
    recs = simulate_epr_sweep(replace(cfg, dynamic_range=bound))
    assert max(abs(r.qubit_shift) for r in recs) <= bound
    assert any(abs(r.qubit_shift) == bound for r in recs)


def test_symmetry_point_working_flux_rejected():
    cfg = _spin_half_experiment(working_flux=FLUX_QUANTUM / 2)
    with pytest.raises(SimulationError):
        simulate_epr_sweep(cfg)


def test_four_level_spin_rejected_in_drive():
    cfg = _spin_half_experiment(spins=SpinEnsemble(SpinSystem.isotropic(1.5, 2.0), 1.0, (1e-8, 0, 0)))
    with pytest.raises(SimulationError):
        simulate_epr_sweep(cfg)


def test_experiment_validation():
    with pytest.raises(InvalidArgumentError):
        _spin_half_experiment(temperature=0.0)
    with pytest.raises(InvalidArgumentError):
        _spin_half_experiment(relaxation=Relaxation(-1.0))
    with pytest.raises(InvalidArgumentError):
        _spin_half_experiment(drive=DriveConfig(3e9, 2e9))
    with pytest.raises(InvalidArgumentError):
        _spin_half_experiment(excitation_side=0)
    with pytest.raises(InvalidArgumentError):
        SpinEnsemble(SpinSystem.isotropic(0.5, 2.0), -1.0)
    with pytest.raises(InvalidArgumentError):
        SpinEnsemble(SpinSystem.isotropic(0.5, 2.0), 1.0, weights=(0.5, 0.5))


def test_nv_preset_two_same_sign_dips():
    cfg = config.load(preset="nv-5p8mT")
    cfg["sweep"]["shot_noise"] = False
    exp = config.build_experiment(cfg)
    recs = simulate_epr_sweep(exp)
    base, _ = static_shift(exp)
    shifts = np.array([r.qubit_shift for r in recs]) - base
    f = np.array([r.drive_frequency for r in recs])
    lo = shifts[(f > 2.75e9) & (f < 2.85e9)]
    hi = shifts[(f > 2.95e9) & (f < 3.05e9)]
    d_lo = lo[np.argmax(np.abs(lo))]
    d_hi = hi[np.argmax(np.abs(hi))]
    assert np.sign(d_lo) == np.sign(d_hi) != 0
    assert abs(d_lo) != pytest.approx(abs(d_hi), rel=0.05)


def test_orientation_collapse_along_100():
    # along [100] all four NV orientations are equivalent for a coupling along x
    cfg = config.load(preset="nv-5p8mT")
    cfg["spins"].pop("position")
    cfg["spins"]["flux_per_moment"] = [2e-9, 0.0, 0.0]
    cfg = config.resolve(cfg)
    four = config.build_experiment(cfg)
    one = replace(four, spins=replace(four.spins, orientations=(np.eye(3),), weights=None))
    freqs = np.linspace(2.7e9, 3.1e9, 9)
    assert ensemble_response(four, freqs)[0] == pytest.approx(ensemble_response(one, freqs)[0], rel=1e-9)


def test_curie_regime_and_polarization_map():
    exp = config.build_experiment(config.load(preset="er-polarization"))
    pm = simulate_polarization_map(exp, [0.1, 0.2], [1e-3, 2e-3])
    assert pm.flux.shape == (2, 2)
    # high-temperature limit: flux ~ B/T
    assert pm.flux[0, 1] / pm.flux[0, 0] == pytest.approx(2.0, rel=1e-2)
    assert pm.flux[0, 0] / pm.flux[1, 0] == pytest.approx(2.0, rel=1e-2)
    with pytest.raises(InvalidArgumentError):
        simulate_polarization_map(exp, [0.0], [1e-3])


def test_qubit_spectrum_ridge():
    exp = config.build_experiment(config.load(preset="er-polarization"))
    flux = FLUX_QUANTUM * (0.5 + np.linspace(-2e-3, 2e-3, 41))
    exc = np.linspace(4.5e9, 6e9, 31)
    qs = simulate_qubit_spectrum(exp, flux, exc)
    assert qs.p_e.shape == (41, 31)
    assert qs.delta_flux == pytest.approx(static_flux(exp, exp.temperature))
    assert qs.ridge_center == pytest.approx(FLUX_QUANTUM / 2 - qs.delta_flux, rel=1e-15)
    with pytest.raises(InvalidArgumentError):
        simulate_qubit_spectrum(exp, flux[::-1], exc)

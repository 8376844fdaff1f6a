import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxepr.analysis import (
    PeakObservation,
    SensitivityInputs,
    consistent_flux_per_spin,
    detect_peaks,
    estimate_sensitivity,
    fit_linear,
    fit_lorentzian,
    fit_spin_hamiltonian,
    levenberg_marquardt,
    numerical_jacobian,
    spin_model_curve,
)
from fluxepr.errors import IdentifiabilityError, InsufficientDataError, InvalidArgumentError
from fluxepr.readout import lorentzian
from fluxepr.spinsys import FieldConfig, SpinSystem, build_hamiltonian, diagonalize
from fluxepr.sweep import SweepRecord

FIELDS = (2e-3, 4e-3, 5.8e-3, 8e-3)


def _nv_peaks(g=2.05, d=2.883e9, e=5e6, fields=FIELDS):
    out = []
    for b in fields:
        spec = diagonalize(build_hamiltonian(SpinSystem.nv_center(g, d, e), FieldConfig(b)))
        for k, f in spec.transitions_from_ground:
            out.append((b, f, k))
    return out


def test_lm_rosenbrock():
    def resid(p):
        return np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]])

    p, r, _, _, ok, _ = levenberg_marquardt(resid, [-1.2, 1.0], max_iter=500)
    assert ok
    assert p == pytest.approx([1.0, 1.0], abs=1e-8)


def test_numerical_jacobian():
    jac = numerical_jacobian(lambda p: np.array([p[0] ** 2, p[0] * p[1]]), np.array([3.0, 2.0]))
    assert jac == pytest.approx(np.array([[6.0, 0.0], [2.0, 3.0]]), rel=1e-8)


def test_fit_linear_exact_and_uncertainty():
    x = np.arange(10.0)
    rep = fit_linear(x, 3 * x - 2)
    assert rep.parameters == pytest.approx({"slope": 3.0, "intercept": -2.0})
    assert rep.extra["r_squared"] == pytest.approx(1.0)
    rng = np.random.default_rng(1)
    y = 3 * x - 2 + rng.normal(0, 0.1, 10)
    rep = fit_linear(x, y)
    coef, unscaled = np.polyfit(x, y, 1, cov="unscaled")
    assert rep.values == pytest.approx(coef)
    rss = np.sum((y - np.polyval(coef, x)) ** 2)
    assert rep.covariance == pytest.approx(unscaled * rss / (10 - 2), rel=1e-9)
    with pytest.raises(InsufficientDataError):
        fit_linear([1.0, 1.0], [2.0, 3.0])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(-20e6, 20e6), st.floats(5e6, 40e6))
def test_fit_lorentzian_noiseless_recovery(v, c, g):
    f = np.linspace(7e9 - 100e6, 7e9 + 100e6, 201)
    rep = fit_lorentzian(f, lorentzian(f, v, 7e9 + c, g))
    p = rep.parameters
    assert p["visibility"] == pytest.approx(v, rel=1e-7)
    assert p["center"] == pytest.approx(7e9 + c, abs=1e-6 * g)
    assert p["linewidth"] == pytest.approx(g, rel=1e-7)


def test_fit_lorentzian_noise_coverage():
    f = np.linspace(6.9e9, 7.1e9, 101)
    rng = np.random.default_rng(3)
    hits = 0
    for _ in range(40):
        p = lorentzian(f, 0.6, 7e9, 20e6) + rng.normal(0, 0.01, f.size)
        rep = fit_lorentzian(f, p, sigma=0.01)
        hits += abs(rep.parameters["center"] - 7e9) < 3 * rep.stderr["center"]
    assert hits >= 36


def test_fit_lorentzian_insufficient():
    with pytest.raises(InsufficientDataError):
        fit_lorentzian([1.0, 2.0, 3.0], [0.1, 0.2, 0.1])


def test_spin_fit_round_trip_noiseless():
    template = SpinSystem.nv_center(2.0028, 2.87e9, 5e6)
    rep = fit_spin_hamiltonian(_nv_peaks(), template)
    assert rep.converged
    assert rep.parameters["g_e"] == pytest.approx(2.05, rel=1e-8)
    assert rep.parameters["D"] == pytest.approx(2.883e9, rel=1e-10)
    curve = spin_model_curve(rep, template, [5.8e-3], 1)
    assert curve[0] == pytest.approx(_nv_peaks(fields=(5.8e-3,))[0][1], rel=1e-9)


def test_spin_fit_accepts_peak_objects_and_misalignment():
    peaks = [PeakObservation(b, f, k) for b, f, k in _nv_peaks()]
    template = SpinSystem.nv_center(2.0028, 2.87e9, 5e6)
    rep = fit_spin_hamiltonian(peaks, template, free=("g_e", "D", "E"))
    assert rep.parameters["E"] == pytest.approx(5e6, rel=1e-5)


def test_spin_fit_identifiability():
    template = SpinSystem.nv_center()
    zero = [(0.0, 2.878e9, 1), (0.0, 2.888e9, 2)]
    with pytest.raises(IdentifiabilityError):
        fit_spin_hamiltonian(zero, template)
    with pytest.raises(IdentifiabilityError):
        fit_spin_hamiltonian(_nv_peaks(fields=(4e-3,)), template)
    with pytest.raises(IdentifiabilityError):
        fit_spin_hamiltonian(zero, template, free=("misalignment_deg",))
    with pytest.raises(InvalidArgumentError):
        fit_spin_hamiltonian(_nv_peaks(), template, free=("g_e", "bogus"))
    with pytest.raises(InvalidArgumentError):
        fit_spin_hamiltonian([(1e-3, 2.9e9, 3)], template, free=("D",))


def test_sensitivity_worked_example():
    inp = SensitivityInputs(0.01, 0.6, 10e6, g_z=4.4e3)
    value, err = estimate_sensitivity(inp, "coupling")
    assert value == pytest.approx(0.01 * 8 * 10e6 / (3 * math.sqrt(3) * 0.6 * 4.4e3), rel=1e-12)
    assert value == pytest.approx(58.3, abs=0.1)
    assert err == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 0.1), st.floats(0.1, 1.0), st.floats(1e6, 1e8), st.floats(50e-9, 1e-6),
       st.floats(100.0, 1e5), st.sampled_from([1, 2]))
def test_sensitivity_routes_agree_with_consistent_flux(dpe, v, gamma, ip, gz, factor):
    phi = consistent_flux_per_spin(gz, factor, ip)
    inp = SensitivityInputs(dpe, v, gamma, ip, phi, gz, factor)
    a, _ = estimate_sensitivity(inp, "flux")
    b, _ = estimate_sensitivity(inp, "coupling")
    assert a == pytest.approx(b, rel=1e-9)


def test_sensitivity_error_propagation_matches_finite_difference():
    base = dict(dPe=0.01, visibility=0.6, gamma_q=10e6, g_z=4.4e3)
    errs = dict(dPe_err=0.002, visibility_err=0.05, gamma_q_err=1e6, g_z_err=500.0)
    value, err = estimate_sensitivity(SensitivityInputs(**base, **errs), "coupling")
    total = 0.0
    for name, e in zip(base, errs.values()):
        up = dict(base)
        dn = dict(base)
        up[name] *= 1 + 1e-6
        dn[name] *= 1 - 1e-6
        d = (estimate_sensitivity(SensitivityInputs(**up), "coupling")[0]
             - estimate_sensitivity(SensitivityInputs(**dn), "coupling")[0]) / (2e-6 * base[name])
        total += (d * e) ** 2
    assert err == pytest.approx(math.sqrt(total), rel=1e-6)


def test_sensitivity_validation():
    with pytest.raises(InvalidArgumentError):
        SensitivityInputs(0.01, 0.6, 10e6, per_spin_shift_factor=3)
    with pytest.raises(InvalidArgumentError):
        SensitivityInputs(-0.01, 0.6, 10e6)
    with pytest.raises(InvalidArgumentError):
        estimate_sensitivity(SensitivityInputs(0.01, 0.6, 10e6), "flux")
    with pytest.raises(InvalidArgumentError):
        estimate_sensitivity(SensitivityInputs(0.01, 0.6, 10e6), "coupling")
    with pytest.raises(InvalidArgumentError):
        estimate_sensitivity(SensitivityInputs(0.01, 0.6, 10e6, g_z=1.0), "magic")


def _records(f, s):
    return [SweepRecord(float(a), float(b), 0.0, 0.0, 0.0) for a, b in zip(f, s)]


def test_detect_peaks_parabolic_apex_and_sign():
    f = np.linspace(2.7e9, 3.1e9, 401)
    s = -5e6 * lorentzian(f, 1.0, 2.8e9 + 0.3e6, 5e6) - 2e6 * lorentzian(f, 1.0, 3.0e9, 5e6)
    peaks = detect_peaks(_records(f, s), 1e5, baseline=0.0)
    assert len(peaks) == 2
    assert peaks[0].frequency == pytest.approx(2.8003e9, abs=0.1e6)
    assert peaks[0].depth < 0 and peaks[1].depth < 0
    assert peaks[1].frequency == pytest.approx(3.0e9, abs=1e3)


def test_detect_peaks_plateau_resolves_low():
    f = np.arange(10.0)
    s = np.array([0, 0, 1, 3, 3, 3, 1, 0, 0, 0.0])
    peaks = detect_peaks(_records(f, s), 0.5, baseline=0.0)
    assert [p.frequency for p in peaks] == [3.0]


def test_detect_peaks_order_independent_and_insufficient():
    f = np.linspace(0, 1, 21)
    s = np.exp(-((f - 0.5) / 0.05) ** 2)
    recs = _records(f, s)
    assert detect_peaks(recs, 0.1) == detect_peaks(recs[::-1], 0.1)
    assert detect_peaks(recs, 2.0) == []
    with pytest.raises(InsufficientDataError):
        detect_peaks(recs[:4], 0.1)

"""End-to-end experiment simulation.

A continuous spin drive is represented by steady-state level populations: each
driven pair (j, k) receives a symmetric pump rate
``W = s0 * L(delta) * (G_down + G_up) / 2`` with ``L`` a Lorentzian of width
``gamma_s``. For an isolated two-level system this reproduces
``saturation_factor`` exactly. Relaxation runs downhill at the configured rates
and uphill by detailed balance, so an undriven ensemble sits at thermal
equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .constants import BOLTZMANN, FLUX_QUANTUM, MU_B_OVER_H, PLANCK
from .errors import DegenerateModelError, InvalidArgumentError, SimulationError
from .fluxqubit import FluxQubit, flux_to_frequency_slope, qubit_frequency, working_point
from .readout import ReadoutModel, lorentzian, optimal_working_point, simulate_readout
from .spinsys import (
    FieldConfig,
    SpinSpectrum,
    SpinSystem,
    build_hamiltonian,
    diagonalize,
    expectation,
    moment_vectors,
    spin_operators,
    thermal_populations,
)


def saturation_factor(drive_f, transition_f, gamma_s: float, s0: float):
    """Fraction of a transition's polarization removed by the drive, in [0, 1]."""
    if not gamma_s > 0:
        raise InvalidArgumentError("spin linewidth must be positive")
    if s0 < 0:
        raise InvalidArgumentError("saturation parameter must be non-negative")
    if math.isinf(s0):
        return 1.0 if np.ndim(drive_f) == 0 else np.ones_like(np.asarray(drive_f, dtype=float))
    delta = np.asarray(drive_f, dtype=float) - transition_f
    x = s0 * gamma_s**2 / (delta**2 + gamma_s**2)
    out = x / (1.0 + x)
    return float(out) if np.ndim(out) == 0 else out


def rate_steady_state(rates) -> NDArray[np.float64]:
    """Stationary populations for ``rates[i, j]`` = transfer rate i -> j (1/s)."""
    r = np.array(rates, dtype=float)
    n = r.shape[0]
    if (r < 0).any():
        raise InvalidArgumentError("rates must be non-negative")
    np.fill_diagonal(r, 0.0)
    gen = r.T - np.diag(r.sum(axis=1))
    if np.linalg.matrix_rank(gen, tol=1e-12 * max(1.0, np.abs(gen).max())) < n - 1:
        raise DegenerateModelError("rate model has no unique steady state (missing decay paths)")
    a = gen.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    p = np.linalg.solve(a, b)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def three_level_steady_state(pump1: float, pump2: float, gamma10: float, gamma20: float,
                             gamma21: float) -> NDArray[np.float64]:
    """Populations (p0, p1, p2) for pumps 0<->1, 0<->2 and downhill relaxation."""
    for v in (pump1, pump2, gamma10, gamma20, gamma21):
        if v < 0:
            raise InvalidArgumentError("rates must be non-negative")
    r = np.zeros((3, 3))
    r[0, 1] = r[1, 0] = pump1
    r[0, 2] = r[2, 0] = pump2
    r[1, 0] += gamma10
    r[2, 0] += gamma20
    r[2, 1] += gamma21
    return rate_steady_state(r)


@dataclass(frozen=True)
class SpinEnsemble:
    """Spins sharing a coupling to the loop.

    ``orientations`` are rigid rotations applied to ``system`` (e.g. the four NV
    axes); ``flux_per_moment`` is the lab-frame flux per unit moment at the
    representative spin position; ``moment_sign`` flips the moment convention.
    """

    system: SpinSystem
    count: float = 0.0
    flux_per_moment: tuple = (0.0, 0.0, 0.0)
    orientations: tuple = (np.eye(3),)
    weights: tuple | None = None
    moment_sign: float = 1.0

    def __post_init__(self):
        if self.count < 0:
            raise InvalidArgumentError("spin count must be non-negative")
        if self.moment_sign not in (1, -1, 1.0, -1.0):
            raise InvalidArgumentError("moment_sign must be +1 or -1")
        w = self.weights
        if w is None:
            w = tuple([1.0 / len(self.orientations)] * len(self.orientations))
        if len(w) != len(self.orientations) or any(x < 0 for x in w):
            raise InvalidArgumentError("weights must be non-negative, one per orientation")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    def members(self) -> list[tuple[float, SpinSystem]]:
        return [(w, self.system.rotated(r)) for w, r in zip(self.weights, self.orientations)]


@dataclass(frozen=True)
class DriveConfig:
    start: float = 2.6e9
    stop: float = 3.2e9
    points: int = 601
    linewidth: float = 5e6
    saturation: float = 10.0
    asymmetry: float = 0.0

    def frequencies(self) -> NDArray[np.float64]:
        return np.linspace(self.start, self.stop, int(self.points))


@dataclass(frozen=True)
class Relaxation:
    gamma10: float = 1.0
    gamma20: float = 1.0
    gamma21: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    qubit: FluxQubit
    readout: ReadoutModel
    spins: SpinEnsemble
    field: FieldConfig
    temperature: float = 0.02
    drive: DriveConfig = field(default_factory=DriveConfig)
    relaxation: Relaxation = field(default_factory=Relaxation)
    working_flux: float = FLUX_QUANTUM * (0.5 + 0.003)
    dynamic_range: float | None = None
    shot_noise: bool = True
    excitation_side: int = 1
    seed: int = 0

    def __post_init__(self):
        rl = self.relaxation
        if min(rl.gamma10, rl.gamma20, rl.gamma21) < 0:
            raise InvalidArgumentError("relaxation rates must be non-negative")
        d = self.drive
        if not (0 < d.start < d.stop) or d.points < 2:
            raise InvalidArgumentError("drive range must be positive and ascending")
        if not self.temperature > 0:
            raise InvalidArgumentError("temperature must be positive")
        if self.excitation_side not in (1, -1):
            raise InvalidArgumentError("excitation_side must be +1 or -1")
        if self.dynamic_range is not None and not self.dynamic_range > 0:
            raise InvalidArgumentError("dynamic range must be positive")


@dataclass(frozen=True)
class SweepRecord:
    drive_frequency: float
    qubit_shift: float
    flux_shift: float
    switching_probability: float
    noise: float


@dataclass(frozen=True)
class _Member:
    weight: float
    spectrum: SpinSpectrum
    shifts: NDArray[np.float64]    # per-level qubit shift (Hz), cos(theta) included
    fluxes: NDArray[np.float64]    # per-level threaded flux (Wb)


def _coupling_in_spin_frame(sys: SpinSystem, qubit: FluxQubit, fpm) -> NDArray[np.float64]:
    # sigma_z = +1 circulates against the vertex order: B = -I_p * fpm
    b = -qubit.persistent_current * np.asarray(fpm, dtype=float)
    return sys.zfs_axes.T @ (MU_B_OVER_H * (sys.g_tensor.T @ b))


def _prepare(cfg: ExperimentConfig, field_cfg: FieldConfig | None = None) -> list[_Member]:
    field_cfg = cfg.field if field_cfg is None else field_cfg
    wp = working_point(cfg.qubit, cfg.working_flux)
    cos_t = math.cos(wp.mixing_angle)
    fpm = np.asarray(cfg.spins.flux_per_moment, dtype=float)
    members = []
    for w, sys in cfg.spins.members():
        spec = diagonalize(build_hamiltonian(sys, field_cfg))
        g = _coupling_in_spin_frame(sys, cfg.qubit, fpm)
        sx, sy, sz = spin_operators(sys.spin)
        per_level = 2.0 * expectation(spec, g[0] * sx + g[1] * sy + g[2] * sz)
        fluxes = moment_vectors(sys, spec) @ fpm
        members.append(_Member(w, spec, cos_t * per_level, fluxes))
    return members


def _relaxation_rates(spec: SpinSpectrum, rl: Relaxation, T: float) -> NDArray[np.float64]:
    n = len(spec.eigenvalues)
    if n == 2:
        down = {(1, 0): rl.gamma10}
    elif n == 3:
        down = {(1, 0): rl.gamma10, (2, 0): rl.gamma20, (2, 1): rl.gamma21}
    else:
        raise SimulationError("drive simulation supports two- and three-level spins only")
    lam = spec.eigenvalues
    r = np.zeros((n, n))
    for (k, j), g in down.items():
        r[k, j] = g
        r[j, k] = g * math.exp(-PLANCK * (lam[k] - lam[j]) / (BOLTZMANN * T))
    return r


def driven_populations(spec: SpinSpectrum, drive_f: float, cfg: ExperimentConfig) -> NDArray[np.float64]:
    relax = _relaxation_rates(spec, cfg.relaxation, cfg.temperature)
    d = cfg.drive
    lam = spec.eigenvalues
    n = len(lam)
    rates = relax.copy()
    if d.saturation > 0:
        for j in range(n):
            for k in range(j + 1, n):
                ref = relax[k, j] + relax[j, k]
                if ref == 0.0:
                    ref = relax[k, :].sum()
                lor = d.linewidth**2 / ((drive_f - (lam[k] - lam[j])) ** 2 + d.linewidth**2)
                w = 0.5 * d.saturation * lor * ref
                rates[j, k] += w
                rates[k, j] += w
    return rate_steady_state(rates)


def _ensemble_response(members: list[_Member], pops: list[NDArray[np.float64]], cfg) -> tuple[float, float]:
    scale = cfg.spins.moment_sign * cfg.spins.count
    shift = scale * sum(m.weight * (p @ m.shifts) for m, p in zip(members, pops))
    flux = scale * sum(m.weight * (p @ m.fluxes) for m, p in zip(members, pops))
    return float(shift), float(flux)


def static_shift(cfg: ExperimentConfig) -> tuple[float, float]:
    """Undriven (thermal) ensemble response: (qubit shift Hz, threaded flux Wb)."""
    members = _prepare(cfg)
    pops = [thermal_populations(m.spectrum, cfg.temperature) for m in members]
    return _ensemble_response(members, pops, cfg)


def ensemble_response(cfg: ExperimentConfig, drive_frequencies) -> tuple[NDArray, NDArray]:
    """Unclipped (qubit shift, flux) for each drive frequency, before readout."""
    members = _prepare(cfg)
    shifts, fluxes = [], []
    for f in drive_frequencies:
        pops = [driven_populations(m.spectrum, f, cfg) for m in members]
        s, fl = _ensemble_response(members, pops, cfg)
        shifts.append(s)
        fluxes.append(fl)
    return np.array(shifts), np.array(fluxes)


def _one_sided_smear(values: NDArray, step: float, scale: float) -> NDArray:
    """Convolve with a normalized exponential tail extending to higher frequency."""
    m = max(1, int(math.ceil(14.0 * scale / step)))
    kernel = np.exp(-np.arange(m + 1) * step / scale)
    kernel /= kernel.sum()
    padded = np.concatenate([np.full(m, values[0]), values])
    return np.convolve(padded, kernel, mode="full")[m:m + len(values)]


def simulate_epr_sweep(cfg: ExperimentConfig) -> list[SweepRecord]:
    """Dual-tone EPR sweep with the qubit parked at the readout's steepest point."""
    freqs = cfg.drive.frequencies()
    slope = flux_to_frequency_slope(cfg.qubit, cfg.working_flux)
    if slope == 0.0:
        raise SimulationError("working point at the symmetry point: zero flux sensitivity")
    shifts, _ = ensemble_response(cfg, freqs)
    base_shift, _ = static_shift(cfg)
    if cfg.drive.asymmetry > 0:
        step = freqs[1] - freqs[0]
        shifts = base_shift + _one_sided_smear(shifts - base_shift, step, cfg.drive.asymmetry)
    if cfg.dynamic_range is not None:
        shifts = np.clip(shifts, -cfg.dynamic_range, cfg.dynamic_range)
        base_shift = float(np.clip(base_shift, -cfg.dynamic_range, cfg.dynamic_range))

    f_bare = qubit_frequency(cfg.qubit, cfg.working_flux)
    offset, _ = optimal_working_point(cfg.readout)
    f_exc = f_bare + base_shift + cfg.excitation_side * offset
    ro = cfg.readout
    records = []
    for i, (f, s) in enumerate(zip(freqs, shifts)):
        p = float(lorentzian(f_exc, ro.visibility, f_bare + s, ro.linewidth))
        if cfg.shot_noise:
            p_meas, sigma = simulate_readout(ro, p, cfg.seed, stream=(i,))
        else:
            p_meas, sigma = p, math.sqrt(p * (1 - p) / ro.n_repetitions)
        records.append(SweepRecord(float(f), float(s), float(s) / slope, p_meas, sigma))
    return records


@dataclass(frozen=True)
class PolarizationMap:
    temperatures: NDArray[np.float64]
    fields: NDArray[np.float64]
    flux: NDArray[np.float64]    # shape (len(temperatures), len(fields)), Wb

    def rows(self):
        for i, t in enumerate(self.temperatures):
            for j, b in enumerate(self.fields):
                yield float(t), float(b), float(self.flux[i, j])


def static_flux(cfg: ExperimentConfig, temperature: float, b_parallel: float | None = None) -> float:
    fc = cfg.field if b_parallel is None else replace(cfg.field, b_parallel=b_parallel)
    members = _prepare(cfg, fc)
    pops = [thermal_populations(m.spectrum, temperature) for m in members]
    return _ensemble_response(members, pops, cfg)[1]


def simulate_polarization_map(cfg: ExperimentConfig, T_list, B_list) -> PolarizationMap:
    """Static ensemble flux on a (temperature, in-plane field) grid."""
    t = np.asarray(T_list, dtype=float)
    b = np.asarray(B_list, dtype=float)
    if (t <= 0).any() or (b <= 0).any():
        raise InvalidArgumentError("temperatures and fields must be positive")
    flux = np.array([[static_flux(cfg, ti, bj) for bj in b] for ti in t])
    return PolarizationMap(t, b, flux)


@dataclass(frozen=True)
class QubitSpectrum:
    flux: NDArray[np.float64]          # applied flux (Wb)
    excitation: NDArray[np.float64]    # Hz
    p_e: NDArray[np.float64]           # shape (len(flux), len(excitation))
    delta_flux: float                  # spin-ensemble flux (Wb)

    @property
    def ridge_center(self) -> float:
        """Applied flux at which the shifted spectrum reaches its minimum Delta."""
        return FLUX_QUANTUM / 2.0 - self.delta_flux


def simulate_qubit_spectrum(cfg: ExperimentConfig, flux_range, excitation_range) -> QubitSpectrum:
    """P_e over (applied flux, excitation frequency) with the thermal spin flux added."""
    flux = np.asarray(flux_range, dtype=float)
    exc = np.asarray(excitation_range, dtype=float)
    if (np.diff(flux) <= 0).any() or (np.diff(exc) <= 0).any():
        raise InvalidArgumentError("ranges must be ascending")
    dphi = static_flux(cfg, cfg.temperature)
    fq = qubit_frequency(cfg.qubit, flux + dphi)
    ro = cfg.readout
    grid = lorentzian(exc[None, :], ro.visibility, np.atleast_1d(fq)[:, None], ro.linewidth)
    return QubitSpectrum(flux, exc, grid, dphi)

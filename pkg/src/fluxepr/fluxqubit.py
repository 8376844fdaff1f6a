"""Flux-qubit dispersion and the longitudinal frequency shift from coupled spins.

f_q(Phi) = sqrt(eps^2 + Delta^2) with eps = 2 I_p (Phi - Phi0/2) / h. Far from
the symmetry point the spin interaction reduces to h (f_q/2 + g.S) sigma_z, so a
spin in eigenstate |i> moves the qubit transition by 2 <i|g.S|i>.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .constants import FLUX_QUANTUM, PLANCK
from .coupling import LoopGeometry, square_vertices
from .errors import InvalidArgumentError
from .spinsys import SpinSpectrum, expectation, spin_operators

#: invented defaults: not stated in the source experiment
DEFAULT_PERSISTENT_CURRENT = 300e-9
DEFAULT_GAP = 5e9
#: designed loop area 47.2 um^2, modelled as a square
DEFAULT_LOOP_SIDE = math.sqrt(47.2e-12)


class FarDetuningWarning(UserWarning):
    """Working point too close to the symmetry point for the longitudinal approximation."""


@dataclass(frozen=True)
class FluxQubit:
    persistent_current: float = DEFAULT_PERSISTENT_CURRENT
    gap: float = DEFAULT_GAP
    loop: NDArray[np.float64] = field(default_factory=lambda: square_vertices(DEFAULT_LOOP_SIDE))

    def __post_init__(self):
        if not self.persistent_current > 0:
            raise InvalidArgumentError("persistent current must be positive")
        if not self.gap > 0:
            raise InvalidArgumentError("gap must be positive")
        # validates the polygon
        object.__setattr__(self, "loop", LoopGeometry(self.loop, 1.0).vertices)

    @property
    def loop_area(self) -> float:
        return LoopGeometry(self.loop, 1.0).area

    def sigma_z_loop(self) -> LoopGeometry:
        """Loop carrying the sigma_z = +1 circulating current (against vertex order)."""
        return LoopGeometry(self.loop, -self.persistent_current)


@dataclass(frozen=True)
class WorkingPoint:
    flux: float
    detuning: float
    frequency: float
    mixing_angle: float


def detuning(q: FluxQubit, flux: float) -> float:
    return 2.0 * q.persistent_current * (flux - FLUX_QUANTUM / 2.0) / PLANCK


def flux_for_detuning(q: FluxQubit, eps: float) -> float:
    return FLUX_QUANTUM / 2.0 + eps * PLANCK / (2.0 * q.persistent_current)


def qubit_frequency(q: FluxQubit, flux):
    eps = detuning(q, np.asarray(flux, dtype=float))
    f = np.hypot(eps, q.gap)
    return float(f) if np.ndim(f) == 0 else f


def flux_to_frequency_slope(q: FluxQubit, flux: float) -> float:
    """Exact df_q/dPhi (Hz/Wb); tends to 2 I_p / h far from the symmetry point."""
    eps = detuning(q, flux)
    return eps / math.hypot(eps, q.gap) * 2.0 * q.persistent_current / PLANCK


def mixing_angle(q: FluxQubit, flux: float) -> float:
    """theta = atan2(Delta, eps), in (0, pi)."""
    return math.atan2(q.gap, detuning(q, flux))


def working_point(q: FluxQubit, flux: float) -> WorkingPoint:
    eps = detuning(q, flux)
    return WorkingPoint(flux, eps, math.hypot(eps, q.gap), math.atan2(q.gap, eps))


def dispersive_shift_per_spin(g, spin_state: int, spec: SpinSpectrum,
                              theta: float | None = None) -> float:
    """Qubit transition shift 2 <state| g.S |state> (Hz) from one spin.

    ``g`` is the coupling vector in the spin's zero-field-splitting frame. Pass
    the working-point mixing angle ``theta`` to be warned when the neglected
    transverse term is not small (sin theta > 0.1).
    """
    if theta is not None and math.sin(theta) > 0.1:
        warnings.warn(f"sin(theta) = {math.sin(theta):.3f} > 0.1: transverse coupling "
                      "is not negligible at this working point", FarDetuningWarning, stacklevel=2)
    dim = spec.eigenvectors.shape[0]
    sx, sy, sz = spin_operators((dim - 1) / 2)
    g = np.asarray(g, dtype=float)
    op = g[0] * sx + g[1] * sy + g[2] * sz
    return 2.0 * float(expectation(spec, op)[spin_state])


def ensemble_flux_shift(moment_total: float, flux_per_moment: float) -> float:
    """Flux (Wb) threaded by an ensemble moment (J/T) through the loop."""
    return moment_total * flux_per_moment

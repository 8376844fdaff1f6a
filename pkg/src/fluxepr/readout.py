"""Switching-probability readout: Lorentzian resonance, steepest working point,
and seeded Monte Carlo of repeated single-shot readout.

Random streams: every draw uses numpy's PCG64 bit generator seeded through
``numpy.random.SeedSequence([seed, *stream_key])``. A Bernoulli trial succeeds
when a ``Generator.random()`` double is strictly below the success
probability. Batches derive their stream from ``(seed, batch_index)`` so results
do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError

#: seconds per shot; 5000 repetitions integrate for one second
DEFAULT_REPETITION_PERIOD = 200e-6


@dataclass(frozen=True)
class ReadoutModel:
    visibility: float = 0.6
    linewidth: float = 20e6
    center: float = 7e9
    n_repetitions: int = 1000
    repetition_period: float = DEFAULT_REPETITION_PERIOD
    drift_floor: float = 0.0

    def __post_init__(self):
        if not 0 < self.visibility <= 1:
            raise InvalidArgumentError("visibility must lie in (0, 1]")
        if not self.linewidth > 0:
            raise InvalidArgumentError("linewidth must be positive")
        if int(self.n_repetitions) != self.n_repetitions or self.n_repetitions < 1:
            raise InvalidArgumentError("n_repetitions must be a positive integer")
        if self.repetition_period <= 0:
            raise InvalidArgumentError("repetition period must be positive")
        if self.drift_floor < 0:
            raise InvalidArgumentError("drift floor must be non-negative")

    def with_center(self, center: float) -> ReadoutModel:
        return replace(self, center=center)


def make_rng(seed: int, *stream_key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream_key)])))


def lorentzian(f, visibility: float, center: float, linewidth: float):
    return visibility * linewidth**2 / ((np.asarray(f, dtype=float) - center) ** 2 + linewidth**2)


def switching_probability(m: ReadoutModel, f):
    p = lorentzian(f, m.visibility, m.center, m.linewidth)
    return float(p) if np.ndim(p) == 0 else p


def switching_slope(m: ReadoutModel, f):
    """dP_e/df of the Lorentzian (1/Hz)."""
    d = np.asarray(f, dtype=float) - m.center
    s = -2.0 * m.visibility * m.linewidth**2 * d / (d**2 + m.linewidth**2) ** 2
    return float(s) if np.ndim(s) == 0 else s


def optimal_working_point(m: ReadoutModel) -> tuple[float, float]:
    """Detuning of the steepest point and the magnitude of the slope there."""
    offset = m.linewidth / math.sqrt(3.0)
    slope = 3.0 * math.sqrt(3.0) * m.visibility / (8.0 * m.linewidth)
    return offset, slope


def simulate_readout(m: ReadoutModel, p_true: float, seed: int, stream: tuple = ()) -> tuple[float, float]:
    """Average ``n_repetitions`` Bernoulli shots; returns (estimate, standard error)."""
    if not 0.0 <= p_true <= 1.0:
        raise InvalidArgumentError("p_true must lie in [0, 1]")
    rng = make_rng(seed, *stream)
    n = int(m.n_repetitions)
    hits = np.count_nonzero(rng.random(n) < p_true)
    p_hat = hits / n
    return p_hat, math.sqrt(p_hat * (1.0 - p_hat) / n)


@dataclass(frozen=True)
class NoiseRow:
    n_rep: int
    sigma_model: float
    sigma_empirical: float
    integration_time: float

    @property
    def one_second(self) -> bool:
        return abs(self.integration_time - 1.0) < 1e-9


def noise_model(p: float, n_rep, drift_floor: float):
    """Shot noise plus additive drift floor: sqrt(p(1-p)/N + sigma_d^2)."""
    return np.sqrt(p * (1 - p) / np.asarray(n_rep, dtype=float) + drift_floor**2)


def noise_vs_repetitions(m: ReadoutModel, p_true: float, n_list, seed: int,
                         n_batches: int = 400, drift: str = "random",
                         drift_period: float = 50.0) -> list[NoiseRow]:
    """Model and Monte Carlo noise of the averaged switching probability.

    Each batch averages N shots around ``p_true`` shifted by a drift offset of rms
    ``drift_floor``: Gaussian per batch (``drift="random"``) or a slow sinusoid
    over the batch index (``drift="sinusoidal"``, phenomenological).
    """
    n_list = [int(n) for n in n_list]
    if not n_list or any(n < 1 for n in n_list) or n_list != sorted(n_list):
        raise InvalidArgumentError("N list must be positive and ascending")
    if drift not in ("random", "sinusoidal"):
        raise InvalidArgumentError(f"unknown drift mode {drift!r}")
    rows = []
    for i, n in enumerate(n_list):
        estimates = np.empty(n_batches)
        for b in range(n_batches):
            rng = make_rng(seed, i, b)
            if drift == "random":
                offset = m.drift_floor * rng.standard_normal()
            else:
                offset = math.sqrt(2.0) * m.drift_floor * math.sin(2 * math.pi * b / drift_period)
            p = min(1.0, max(0.0, p_true + offset))
            estimates[b] = np.count_nonzero(rng.random(n) < p) / n
        rows.append(NoiseRow(n, float(noise_model(p_true, n, m.drift_floor)),
                             float(np.std(estimates, ddof=1)), n * m.repetition_period))
    return rows

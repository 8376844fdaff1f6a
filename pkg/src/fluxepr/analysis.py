"""Parameter extraction and sensitivity estimation.

Nonlinear fits use a small damped least-squares (Levenberg-Marquardt) solver
with central-difference Jacobians, so models built on the eigensolver need no
derivative code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .constants import PLANCK
from .errors import IdentifiabilityError, InsufficientDataError, InvalidArgumentError
from .readout import lorentzian
from .spinsys import FieldConfig, SpinSystem, build_hamiltonian, diagonalize

REL_STEP = 1e-6


@dataclass
class FitReport:
    names: list[str]
    values: NDArray[np.float64]
    covariance: NDArray[np.float64]
    residual_norm: float
    iterations: int
    converged: bool
    gradient_norm: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def parameters(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    @property
    def stderr(self) -> dict[str, float]:
        return {n: float(math.sqrt(max(c, 0.0))) for n, c in zip(self.names, np.diag(self.covariance))}

    def to_dict(self) -> dict:
        return {
            "parameters": self.parameters,
            "stderr": self.stderr,
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            **self.extra,
        }


def numerical_jacobian(fun: Callable, p: NDArray, rel_step: float = REL_STEP) -> NDArray:
    p = np.asarray(p, dtype=float)
    cols = []
    for j in range(len(p)):
        h = rel_step * max(abs(p[j]), 1.0 if p[j] == 0 else abs(p[j]))
        up = p.copy()
        dn = p.copy()
        up[j] += h
        dn[j] -= h
        cols.append((fun(up) - fun(dn)) / (up[j] - dn[j]))
    return np.column_stack(cols)


def _gradient_cosine(jac: NDArray, r: NDArray) -> float:
    # MINPACK-style scale-free gradient measure
    rn = np.linalg.norm(r)
    if rn == 0.0:
        return 0.0
    cn = np.linalg.norm(jac, axis=0)
    cn[cn == 0] = 1.0
    return float(np.max(np.abs(jac.T @ r) / (cn * rn)))


def levenberg_marquardt(fun: Callable, p0, max_iter: int = 200, gtol: float = 1e-10,
                        xtol: float = 1e-15, ftol: float = 1e-16,
                        rel_step: float = REL_STEP) -> tuple[NDArray, NDArray, NDArray, int, bool, float]:
    """Minimize ||fun(p)||^2 with Marquardt's diagonal scaling.

    Returns (p, residual, jacobian, iterations, converged, gradient) where
    ``gradient`` is ||J^T r||_inf relative to its starting value. Convergence
    means that relative gradient, or the scale-free cosine between residual and
    Jacobian columns, fell below ``gtol``.
    """
    p = np.array(p0, dtype=float)
    r = fun(p)
    cost = r @ r
    jac = numerical_jacobian(fun, p, rel_step)
    g0 = max(float(np.abs(jac.T @ r).max()), 1e-300)

    def rel_grad(j, res):
        return float(np.abs(j.T @ res).max()) / g0

    def done(j, res):
        return rel_grad(j, res) <= gtol or _gradient_cosine(j, res) <= gtol

    a = jac.T @ jac
    mu = 1e-3
    nu = 2.0
    it = 0
    for it in range(1, max_iter + 1):
        if done(jac, r):
            return p, r, jac, it - 1, True, rel_grad(jac, r)
        d = np.diag(a).copy()
        d[d == 0] = 1.0
        step = np.linalg.lstsq(a + mu * np.diag(d), -(jac.T @ r), rcond=None)[0]
        p_new = p + step
        r_new = fun(p_new)
        cost_new = r_new @ r_new
        predicted = cost - np.sum((r + jac @ step) ** 2)
        rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
        if rho > 0:
            small_step = np.all(np.abs(step) <= xtol * (np.abs(p) + xtol))
            small_gain = (cost - cost_new) <= ftol * cost
            p, r, cost = p_new, r_new, cost_new
            jac = numerical_jacobian(fun, p, rel_step)
            a = jac.T @ jac
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if small_step or small_gain:
                break
        else:
            mu *= nu
            nu *= 2.0
            if mu > 1e20:
                break
    return p, r, jac, it, done(jac, r), rel_grad(jac, r)


def _covariance(jac: NDArray, r: NDArray, absolute_sigma: bool) -> NDArray:
    m, n = jac.shape
    cov = np.linalg.pinv(jac.T @ jac)
    if not absolute_sigma:
        dof = m - n
        cov = cov * ((r @ r) / dof if dof > 0 else 0.0)
    return 0.5 * (cov + cov.T)


# --------------------------------------------------------------------------- linear


def fit_linear(x, y) -> FitReport:
    """Ordinary least squares y = slope*x + intercept, closed form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(np.unique(x)) < 2:
        raise InsufficientDataError("need at least two distinct x values")
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    rss = float(resid @ resid)
    s2 = rss / (n - 2) if n > 2 else 0.0
    cov = s2 * np.array([[1.0 / sxx, -xm / sxx], [-xm / sxx, 1.0 / n + xm**2 / sxx]])
    syy = np.sum((y - ym) ** 2)
    r2 = 1.0 - rss / syy if syy > 0 else 1.0
    return FitReport(["slope", "intercept"], np.array([slope, intercept]), cov,
                     math.sqrt(rss), 0, True, 0.0, {"r_squared": float(r2)})


# ----------------------------------------------------------------------- lorentzian


def lorentzian_guess(f: NDArray, p: NDArray) -> tuple[float, float, float]:
    """Peak height, peak position, and half width at half maximum."""
    i = int(np.argmax(p))
    v = float(p[i])
    f0 = float(f[i])
    above = f[p >= v / 2.0]
    width = 0.5 * float(above.max() - above.min()) if len(above) > 1 else 0.0
    if width <= 0:
        width = float(np.ptp(f)) / 10.0 or 1.0
    return v, f0, width


def fit_lorentzian(f, p, guess: Sequence[float] | None = None, sigma: float | None = None,
                   max_iter: int = 200) -> FitReport:
    """Fit P_e(f) = V gamma^2 / ((f - f0)^2 + gamma^2); reports (V, f_q0, gamma_q)."""
    f = np.asarray(f, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(f) != len(p) or len(f) < 4 or len(np.unique(f)) < 3:
        raise InsufficientDataError("Lorentzian fit needs >= 4 points at >= 3 frequencies")
    v0, c0, w0 = lorentzian_guess(f, p) if guess is None else guess
    # work in centred, scaled frequency units for conditioning
    shift = float(np.mean(f))
    scale = float(np.ptp(f)) or 1.0
    x = (f - shift) / scale

    def resid(q):
        return lorentzian(x, q[0], q[1], q[2]) - p

    q0 = np.array([v0, (c0 - shift) / scale, abs(w0) / scale])
    q, r, jac, it, ok, grad = levenberg_marquardt(resid, q0, max_iter=max_iter)
    q[2] = abs(q[2])
    if sigma is not None:
        cov_q = _covariance(jac / sigma, r / sigma, True)
    else:
        cov_q = _covariance(jac, r, False)
    t = np.diag([1.0, scale, scale])
    vals = np.array([q[0], q[1] * scale + shift, q[2] * scale])
    return FitReport(["visibility", "center", "linewidth"], vals, t @ cov_q @ t,
                     float(np.linalg.norm(r)), it, ok, grad)


# --------------------------------------------------------------------- spin model


SPIN_PARAMS = ("g_e", "D", "E", "misalignment_deg")


@dataclass(frozen=True)
class PeakObservation:
    b_parallel: float
    frequency: float
    branch: int


def _as_peaks(peaks) -> list[PeakObservation]:
    out = []
    for pk in peaks:
        if isinstance(pk, PeakObservation):
            out.append(pk)
        else:
            b, f, k = pk
            out.append(PeakObservation(float(b), float(f), int(k)))
    return out


def _spin_model(template: SpinSystem, field_template: FieldConfig, names: list[str],
                fixed: dict, peaks: list[PeakObservation]) -> Callable:
    by_field: dict[float, list[int]] = {}
    for i, pk in enumerate(peaks):
        by_field.setdefault(pk.b_parallel, []).append(i)

    def model(q):
        par = dict(fixed)
        par.update(zip(names, q))
        sys = SpinSystem(template.spin, par["g_e"] * np.eye(3), par["D"], par["E"], template.zfs_axes)
        out = np.empty(len(peaks))
        for b, idx in by_field.items():
            fc = replace(field_template, b_parallel=b, misalignment_deg=par["misalignment_deg"])
            lam = diagonalize(build_hamiltonian(sys, fc)).eigenvalues
            for i in idx:
                out[i] = lam[peaks[i].branch] - lam[0]
        return out

    return model


def fit_spin_hamiltonian(peaks, model: SpinSystem, free: Sequence[str] = ("g_e", "D"),
                         field_template: FieldConfig | None = None,
                         guess: dict | None = None, sigma: float | None = None,
                         max_iter: int = 100) -> FitReport:
    """Fit spin-Hamiltonian constants to EPR peak positions.

    ``peaks`` holds (B_parallel T, transition Hz, branch) with branch k meaning
    the ground -> k-th excited transition. ``model`` supplies the spin, the ZFS
    frame and starting values (isotropic g taken from its g_tensor trace).
    """
    peaks = _as_peaks(peaks)
    free = list(free)
    for name in free:
        if name not in SPIN_PARAMS:
            raise InvalidArgumentError(f"unknown fit parameter {name!r}")
    dim = model.dim
    if any(not 1 <= pk.branch < dim for pk in peaks):
        raise InvalidArgumentError("branch index out of range")
    fields = {pk.b_parallel for pk in peaks}
    if "g_e" in free and (max(fields, default=0.0) <= 0.0 or len(fields) < 2):
        raise IdentifiabilityError("g_e needs peaks at two or more field values (non-zero)")
    if "misalignment_deg" in free and max(fields, default=0.0) <= 0.0:
        raise IdentifiabilityError("misalignment needs non-zero field data")
    if len(peaks) < len(free):
        raise IdentifiabilityError("fewer peak observations than free parameters")

    field_template = field_template or FieldConfig()
    start = {"g_e": float(np.trace(model.g_tensor)) / 3.0, "D": model.zfs_D, "E": model.strain_E,
             "misalignment_deg": field_template.misalignment_deg}
    start.update(guess or {})
    fixed = {k: v for k, v in start.items() if k not in free}
    fn = _spin_model(model, field_template, free, fixed, peaks)
    obs = np.array([pk.frequency for pk in peaks])
    # relative parameter scaling keeps the Jacobian balanced (g ~ 2, D ~ 3e9)
    scales = np.array([abs(start[n]) if start[n] != 0 else 1.0 for n in free])

    def resid(u):
        return fn(u * scales) - obs

    j0 = numerical_jacobian(resid, np.ones(len(free)))
    if np.linalg.matrix_rank(j0, tol=1e-9 * max(np.abs(j0).max(), 1e-300)) < len(free):
        raise IdentifiabilityError("free parameters are not identifiable from these peaks")
    u, r, jac, it, ok, grad = levenberg_marquardt(resid, np.ones(len(free)), max_iter=max_iter)
    if sigma is not None:
        cov_u = _covariance(jac / sigma, r / sigma, True)
    else:
        cov_u = _covariance(jac, r, False)
    t = np.diag(scales)
    return FitReport(free, u * scales, t @ cov_u @ t, float(np.linalg.norm(r)), it, ok, grad,
                     {"fixed": fixed})


def spin_model_curve(report: FitReport, model: SpinSystem, fields, branch: int,
                     field_template: FieldConfig | None = None) -> NDArray:
    """Transition frequency vs field evaluated with fitted constants."""
    field_template = field_template or FieldConfig()
    par = {"g_e": float(np.trace(model.g_tensor)) / 3.0, "D": model.zfs_D, "E": model.strain_E,
           "misalignment_deg": field_template.misalignment_deg}
    par.update(report.extra.get("fixed", {}))
    par.update(report.parameters)
    peaks = [PeakObservation(float(b), 0.0, branch) for b in fields]
    names = list(SPIN_PARAMS)
    return _spin_model(model, field_template, names, {}, peaks)(np.array([par[n] for n in names]))


# -------------------------------------------------------------------- sensitivity


@dataclass(frozen=True)
class SensitivityInputs:
    """Inputs of the minimum-detectable-spins estimate; ``*_err`` are 1-sigma."""

    dPe: float
    visibility: float
    gamma_q: float
    persistent_current: float | None = None
    flux_per_spin: float | None = None
    g_z: float | None = None
    per_spin_shift_factor: int = 1
    dPe_err: float = 0.0
    visibility_err: float = 0.0
    gamma_q_err: float = 0.0
    persistent_current_err: float = 0.0
    flux_per_spin_err: float = 0.0
    g_z_err: float = 0.0

    def __post_init__(self):
        if self.per_spin_shift_factor not in (1, 2):
            raise InvalidArgumentError("per-spin shift factor must be 1 or 2")
        for name in ("dPe", "visibility", "gamma_q", "persistent_current", "flux_per_spin", "g_z"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidArgumentError(f"{name} must be positive")


def _route_terms(inp: SensitivityInputs, route: str):
    k = 3.0 * math.sqrt(3.0)
    if route == "flux":
        if inp.persistent_current is None or inp.flux_per_spin is None:
            raise InvalidArgumentError("flux route needs persistent_current and flux_per_spin")
        value = inp.dPe * 4.0 * PLANCK * inp.gamma_q / (k * inp.visibility * inp.persistent_current) \
            / inp.flux_per_spin
        # every factor enters as a power +-1: relative errors add in quadrature
        rel = [(inp.dPe_err, inp.dPe), (inp.gamma_q_err, inp.gamma_q),
               (inp.visibility_err, inp.visibility),
               (inp.persistent_current_err, inp.persistent_current),
               (inp.flux_per_spin_err, inp.flux_per_spin)]
    elif route == "coupling":
        if inp.g_z is None:
            raise InvalidArgumentError("coupling route needs g_z")
        value = inp.dPe * 8.0 * inp.gamma_q / (k * inp.visibility * inp.per_spin_shift_factor * inp.g_z)
        rel = [(inp.dPe_err, inp.dPe), (inp.gamma_q_err, inp.gamma_q),
               (inp.visibility_err, inp.visibility), (inp.g_z_err, inp.g_z)]
    else:
        raise InvalidArgumentError(f"unknown route {route!r}")
    return value, rel


def estimate_sensitivity(inp: SensitivityInputs, route: str) -> tuple[float, float]:
    """Minimum detectable spins per sqrt(Hz) and its first-order uncertainty.

    route ``flux``: dPe * 4 h gamma / (3 sqrt3 V I_p) / (flux per spin).
    route ``coupling``: dPe * 8 gamma / (3 sqrt3 V * factor * g_z).
    """
    value, rel = _route_terms(inp, route)
    err = value * math.sqrt(sum((e / v) ** 2 for e, v in rel))
    return value, err


def consistent_flux_per_spin(g_z: float, factor: int, persistent_current: float) -> float:
    """Flux per spin that makes both sensitivity routes coincide: h*factor*g_z/(2 I_p)."""
    return PLANCK * factor * g_z / (2.0 * persistent_current)


# -------------------------------------------------------------------------- peaks


@dataclass(frozen=True)
class Peak:
    frequency: float
    depth: float


def detect_peaks(records, prominence: float, baseline: float | None = None) -> list[Peak]:
    """Local extrema of |qubit_shift - baseline| exceeding ``prominence`` (Hz).

    The apex is refined by a three-point parabola; plateaus resolve to their
    lowest-frequency sample. ``depth`` keeps the sign of the excursion.
    """
    if len(records) < 5:
        raise InsufficientDataError("peak detection needs at least 5 records")
    f = np.array([r.drive_frequency for r in records], dtype=float)
    s = np.array([r.qubit_shift for r in records], dtype=float)
    order = np.argsort(f, kind="stable")
    f, s = f[order], s[order]
    base = float(np.median(s)) if baseline is None else baseline
    a = np.abs(s - base)
    peaks = []
    i = 1
    n = len(a)
    while i < n - 1:
        if a[i] > a[i - 1] and a[i] >= a[i + 1] and a[i] >= prominence:
            j = i
            while j + 1 < n and a[j + 1] == a[i]:
                j += 1
            if j == n - 1 or a[j + 1] < a[i]:
                fi = f[i]
                if j == i:
                    y0, y1, y2 = a[i - 1], a[i], a[i + 1]
                    den = y0 - 2 * y1 + y2
                    if den < 0:
                        frac = 0.5 * (y0 - y2) / den
                        fi = f[i] + frac * 0.5 * (f[i + 1] - f[i - 1])
                peaks.append(Peak(float(fi), float(s[i] - base)))
            i = j + 1
        else:
            i += 1
    return peaks

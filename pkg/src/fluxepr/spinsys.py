"""Spin operators, the zero-field-splitting + Zeeman spin Hamiltonian, and
thermal observables.

All Hamiltonians are stored as frequencies (energy / h, Hz). Spin operators
are written in the Sz eigenbasis of the zero-field-splitting frame, ordered
m = S, S-1, ..., -S.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.typing import NDArray

from .constants import BOHR_MAGNETON, BOLTZMANN, MU_B_OVER_H, PLANCK
from .errors import InvalidArgumentError

_ORTHO_TOL = 1e-12

#: the four <111> NV symmetry axes in the cubic crystal frame
NV_AXES = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
) / math.sqrt(3.0)

#: C2 rotations mapping the [111] axis onto each of NV_AXES in turn
NV_ORIENTATION_ROTATIONS = (
    np.eye(3),
    np.diag([1.0, -1.0, -1.0]),
    np.diag([-1.0, 1.0, -1.0]),
    np.diag([-1.0, -1.0, 1.0]),
)


def _spin_dimension(S) -> int:
    two_s = Fraction(S).limit_denominator(1000) * 2
    if two_s.denominator != 1 or two_s < 1 or abs(float(two_s) - 2 * float(S)) > 1e-12:
        raise InvalidArgumentError(f"spin must be a positive half-integer, got {S!r}")
    return int(two_s) + 1


def spin_operators(S) -> tuple[NDArray[np.complex128], NDArray[np.complex128], NDArray[np.complex128]]:
    """Return (Sx, Sy, Sz) for spin ``S`` in the descending-m Sz eigenbasis."""
    dim = _spin_dimension(S)
    s = (dim - 1) / 2.0
    m = s - np.arange(dim)
    # <m+1|S+|m> sits one row above the diagonal in descending-m ordering
    s_plus = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    s_minus = s_plus.conj().T
    sx = 0.5 * (s_plus + s_minus)
    sy = -0.5j * (s_plus - s_minus)
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def rotation_matrix(axis, angle: float) -> NDArray[np.float64]:
    """Rodrigues rotation by ``angle`` (rad) about ``axis``."""
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    k = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def frame_from_axis(z_axis) -> NDArray[np.float64]:
    """Right-handed orthonormal frame (columns x', y', z') with z' along ``z_axis``."""
    z = np.asarray(z_axis, dtype=float)
    z = z / np.linalg.norm(z)
    trial = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = trial - z * (trial @ z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass(frozen=True)
class SpinSystem:
    """Single spin species.

    ``g_tensor`` is expressed in the lab frame; ``zfs_axes`` holds the zero-field
    splitting frame axes as columns, written in lab coordinates.
    """

    spin: float
    g_tensor: NDArray[np.float64]
    zfs_D: float = 0.0
    strain_E: float = 0.0
    zfs_axes: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        _spin_dimension(self.spin)
        g = np.asarray(self.g_tensor, dtype=float)
        if g.shape != (3, 3):
            raise InvalidArgumentError("g_tensor must be 3x3")
        if not np.allclose(g, g.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
            raise InvalidArgumentError("g_tensor must be symmetric")
        if np.linalg.eigvalsh(g).min() < -1e-12 * max(1.0, np.abs(g).max()):
            raise InvalidArgumentError("g_tensor must be positive semidefinite")
        r = np.asarray(self.zfs_axes, dtype=float)
        if r.shape != (3, 3) or np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL \
                or abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise InvalidArgumentError("zfs_axes must be a proper rotation matrix")
        if abs(self.strain_E) > abs(self.zfs_D):
            warnings.warn("|E| exceeds |D|; axis labelling is unconventional", stacklevel=3)
        object.__setattr__(self, "g_tensor", g)
        object.__setattr__(self, "zfs_axes", r)

    @classmethod
    def isotropic(cls, spin, g: float, zfs_D: float = 0.0, strain_E: float = 0.0,
                  zfs_axes=None) -> SpinSystem:
        axes = np.eye(3) if zfs_axes is None else zfs_axes
        return cls(spin, g * np.eye(3), zfs_D, strain_E, axes)

    @classmethod
    def nv_center(cls, g: float = 2.0028, zfs_D: float = 2.87e9, strain_E: float = 0.0,
                  orientation: int = 0) -> SpinSystem:
        """NV centre with its symmetry axis along ``NV_AXES[orientation]``.

        The crystal frame coincides with the lab frame ([100] = lab x).
        """
        base = frame_from_axis(NV_AXES[0])
        axes = NV_ORIENTATION_ROTATIONS[orientation] @ base
        return cls.isotropic(1, g, zfs_D, strain_E, axes)

    @property
    def dim(self) -> int:
        return _spin_dimension(self.spin)

    def rotated(self, rot) -> SpinSystem:
        """Same species with g-tensor and ZFS frame rigidly rotated by ``rot``."""
        rot = np.asarray(rot, dtype=float)
        return SpinSystem(self.spin, rot @ self.g_tensor @ rot.T, self.zfs_D,
                          self.strain_E, rot @ self.zfs_axes)

    def lab_spin_operators(self) -> list[NDArray[np.complex128]]:
        """Spin operators along lab x, y, z expressed in the ZFS-frame basis."""
        s_local = spin_operators(self.spin)
        r = self.zfs_axes
        return [sum(r[i, j] * s_local[j] for j in range(3)) for i in range(3)]

    def moment_operators(self) -> list[NDArray[np.complex128]]:
        """Lab-frame magnetic moment operators mu = -mu_B g S (J/T)."""
        s_lab = self.lab_spin_operators()
        g = self.g_tensor
        return [-BOHR_MAGNETON * sum(g[i, k] * s_lab[k] for k in range(3)) for i in range(3)]


@dataclass(frozen=True)
class FieldConfig:
    """Static field B = B_par * d_par(tilted) + B_perp * n_perp (tesla).

    The in-plane direction is tilted by ``misalignment_deg`` about ``tilt_axis``.
    """

    b_parallel: float = 0.0
    b_perpendicular: float = 0.0
    parallel_direction: tuple = (1.0, 0.0, 0.0)
    misalignment_deg: float = 0.0
    tilt_axis: tuple = (0.0, 0.0, 1.0)
    perpendicular_direction: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.b_parallel < 0 or self.b_perpendicular < 0:
            raise InvalidArgumentError("field magnitudes must be non-negative")
        for name in ("parallel_direction", "perpendicular_direction"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise InvalidArgumentError(f"{name} must be a unit 3-vector")

    def parallel_vector(self) -> NDArray[np.float64]:
        d = np.asarray(self.parallel_direction, dtype=float)
        if self.misalignment_deg:
            d = rotation_matrix(self.tilt_axis, math.radians(self.misalignment_deg)) @ d
        return self.b_parallel * d

    def vector(self) -> NDArray[np.float64]:
        return self.parallel_vector() + self.b_perpendicular * np.asarray(
            self.perpendicular_direction, dtype=float)


@dataclass(frozen=True)
class SpinHamiltonian:
    matrix: NDArray[np.complex128]
    spin: float


@dataclass(frozen=True)
class SpinSpectrum:
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.complex128]

    @property
    def transitions_from_ground(self) -> list[tuple[int, float]]:
        return transition_frequencies(self)


def build_hamiltonian(sys: SpinSystem, field: FieldConfig) -> SpinHamiltonian:
    """H/h = (mu_B/h) B^T g S + D Sz'^2 + E (Sy'^2 - Sx'^2)."""
    sx, sy, sz = spin_operators(sys.spin)
    b_lab = field.vector()
    # effective Zeeman field in the ZFS frame: R^T g^T B
    b_eff = sys.zfs_axes.T @ (sys.g_tensor.T @ b_lab)
    h = MU_B_OVER_H * (b_eff[0] * sx + b_eff[1] * sy + b_eff[2] * sz)
    h = h + sys.zfs_D * (sz @ sz) + sys.strain_E * (sy @ sy - sx @ sx)
    h = 0.5 * (h + h.conj().T)
    return SpinHamiltonian(h, sys.spin)


def _jacobi_eigh(a: NDArray[np.complex128], tol: float = 1e-15, max_sweeps: int = 50):
    """Cyclic Jacobi diagonalization of a complex Hermitian matrix."""
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = np.abs(a).max()
    if scale == 0.0 or n == 1:
        return np.real(np.diag(a)).copy(), v
    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(np.diag(a))).max()
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                c = a[p, q]
                mag = abs(c)
                if mag <= 1e-300 or mag <= 1e-18 * scale:
                    continue
                phase = c / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                # V = diag(1,..,conj(phase) at q) followed by a real Givens rotation
                col_p = a[:, p].copy()
                col_q = a[:, q] * phase.conjugate()
                a[:, p] = cs * col_p - sn * col_q
                a[:, q] = sn * col_p + cs * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :] * phase
                a[p, :] = cs * row_p - sn * row_q
                a[q, :] = sn * row_p + cs * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q] * phase.conjugate()
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
    return np.real(np.diag(a)).copy(), v


def diagonalize(H) -> SpinSpectrum:
    """Eigen-decompose a Hermitian matrix (or SpinHamiltonian), eigenvalues ascending."""
    mat = np.asarray(H.matrix if isinstance(H, SpinHamiltonian) else H, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidArgumentError("matrix must be square")
    if mat.shape[0] > 16:
        raise InvalidArgumentError("dimension limited to 16")
    norm = np.abs(mat).max()
    if np.abs(mat - mat.conj().T).max() > 1e-9 * max(norm, 1e-300):
        raise InvalidArgumentError("matrix is not Hermitian")
    w, v = _jacobi_eigh(0.5 * (mat + mat.conj().T))
    order = np.argsort(w, kind="stable")
    return SpinSpectrum(w[order], v[:, order])


def transition_frequencies(spec: SpinSpectrum) -> list[tuple[int, float]]:
    lam = spec.eigenvalues
    return [(k, float(lam[k] - lam[0])) for k in range(1, len(lam))]


def thermal_populations(spec: SpinSpectrum, T: float, zero_temperature: bool = False) -> NDArray[np.float64]:
    """Boltzmann populations of the eigenlevels at temperature ``T`` (K).

    ``zero_temperature=True`` returns the ground-state indicator and ignores T.
    """
    lam = spec.eigenvalues
    if zero_temperature:
        p = np.zeros(len(lam))
        p[0] = 1.0
        return p
    if not T > 0:
        raise InvalidArgumentError("temperature must be positive")
    x = -PLANCK * (lam - lam[0]) / (BOLTZMANN * T)
    w = np.exp(x)
    return w / w.sum()


def expectation(spec: SpinSpectrum, op) -> NDArray[np.float64]:
    """Diagonal expectation values <i|op|i> for every eigenstate."""
    v = spec.eigenvectors
    return np.real(np.einsum("ji,jk,ki->i", v.conj(), op, v))


def magnetization(sys: SpinSystem, spec: SpinSpectrum, T: float, axis,
                  zero_temperature: bool = False, populations=None) -> float:
    """Thermal magnetic moment (J/T) of one spin projected on ``axis``."""
    a = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise InvalidArgumentError("axis must be normalized")
    p = thermal_populations(spec, T, zero_temperature) if populations is None else populations
    mu = sys.moment_operators()
    op = a[0] * mu[0] + a[1] * mu[1] + a[2] * mu[2]
    return float(p @ expectation(spec, op))


def moment_vectors(sys: SpinSystem, spec: SpinSpectrum) -> NDArray[np.float64]:
    """Per-eigenstate lab moment vectors, shape (levels, 3), J/T."""
    mu = sys.moment_operators()
    return np.column_stack([expectation(spec, m) for m in mu])

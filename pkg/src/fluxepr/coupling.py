"""Biot-Savart field of the qubit loop, spin-qubit coupling vector, and
sensing-volume bookkeeping.

Sign convention: a loop's vertex order defines the positive circulation; the
positive flux direction is the right-hand normal of that circulation. The
sigma_z = +1 qubit state is the one whose energy rises with applied flux, i.e.
it circulates *against* the vertex order. ``coupling_vector`` uses the field of
that state's current, so a spin's qubit-frequency shift equals
(2 I_p / h) * (flux its moment threads through the loop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .constants import MU_0, MU_B_OVER_H, SPEED_OF_LIGHT
from .errors import InvalidArgumentError, SingularGeometryError

_ON_WIRE = 1e-12


def _as_vertices(vertices) -> NDArray[np.float64]:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] not in (2, 3):
        raise InvalidArgumentError("vertices must be an (N, 2) or (N, 3) array")
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    elif np.abs(v[:, 2] - v[0, 2]).max() > 0:
        raise InvalidArgumentError("loop must be planar in the lab xy-plane")
    if len(v) >= 2 and np.array_equal(v[0], v[-1]):
        v = v[:-1]
    return v


def signed_area(vertices) -> float:
    """Shoelace area; positive for counter-clockwise vertex order."""
    v = _as_vertices(vertices)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 != 0 and d3 * d4 != 0:
        return True
    return False


def is_simple_polygon(vertices) -> bool:
    v = _as_vertices(vertices)
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


def square_vertices(side: float, center=(0.0, 0.0)) -> NDArray[np.float64]:
    """Counter-clockwise square in the xy-plane."""
    h = side / 2.0
    cx, cy = center
    return np.array([[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]])


@dataclass(frozen=True)
class LoopGeometry:
    vertices: NDArray[np.float64]
    current: float

    def __post_init__(self):
        v = _as_vertices(self.vertices)
        if len(v) < 3:
            raise InvalidArgumentError("loop needs at least 3 vertices")
        if not is_simple_polygon(v):
            raise InvalidArgumentError("loop polygon self-intersects")
        if abs(signed_area(v)) <= 0:
            raise InvalidArgumentError("loop polygon has zero area")
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        return abs(signed_area(self.vertices))

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]


def _point_segment_distance(p, a, b) -> float:
    d = b - a
    t = np.clip((p - a) @ d / (d @ d), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * d)))


def segment_field(start, end, current: float, point) -> NDArray[np.float64]:
    """Exact field (T) of a finite straight segment carrying ``current`` start->end."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    p = np.asarray(point, dtype=float)
    if _point_segment_distance(p, start, end) <= _ON_WIRE:
        raise SingularGeometryError(f"point {p.tolist()} lies on a wire segment")
    a = start - p
    b = end - p
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    c = np.cross(a, b)
    dot = a @ b
    if dot >= 0.0:
        factor = (na + nb) / (na * nb * (na * nb + dot))
    else:
        # |a||b| + a.b cancels near a long wire; use |a x b|^2 / (|a||b| - a.b)
        factor = (na + nb) * (na * nb - dot) / (na * nb * (c @ c))
    return MU_0 * current / (4 * math.pi) * c * factor


def biot_savart_field(loop: LoopGeometry, point) -> NDArray[np.float64]:
    """Field of the closed polygonal loop at ``point`` (m), summed edge by edge."""
    total = np.zeros(3)
    for a, b in loop.edges():
        total = total + segment_field(a, b, loop.current, point)
    return total


def flux_per_moment(loop_vertices, point) -> NDArray[np.float64]:
    """Flux (Wb) threaded through the loop per unit dipole moment (J/T) at ``point``.

    By reciprocity this is the loop field per ampere of positive circulation.
    """
    return biot_savart_field(LoopGeometry(loop_vertices, 1.0), point)


def coupling_vector(qubit_or_loop, sys, position) -> NDArray[np.float64]:
    """Coupling vector g (Hz) in the spin's zero-field-splitting frame.

    ``g = (mu_B/h) g_tensor^T B_loop(position)`` rotated by ``zfs_axes^T``. Given a
    FluxQubit, the loop carries the sigma_z = +1 current; a LoopGeometry is used
    as-is. This is the single place to change the coupling normalization.
    """
    loop = qubit_or_loop if isinstance(qubit_or_loop, LoopGeometry) else qubit_or_loop.sigma_z_loop()
    b = biot_savart_field(loop, position)
    return sys.zfs_axes.T @ (MU_B_OVER_H * (sys.g_tensor.T @ b))


class SensingVolume(NamedTuple):
    volume: float
    wavelength_fraction: float | None


def sensing_volume(loop, effective_thickness: float, f_ref: float | None = None) -> SensingVolume:
    """Loop area times effective thickness; optionally as a fraction of (c/f_ref)^3."""
    if not effective_thickness > 0:
        raise InvalidArgumentError("effective thickness must be positive")
    area = loop if isinstance(loop, (int, float)) else loop.area
    volume = area * effective_thickness
    frac = None
    if f_ref is not None:
        frac = volume / (SPEED_OF_LIGHT / f_ref) ** 3
    return SensingVolume(volume, frac)


def spins_in_volume(density: float, volume: float) -> float:
    if density < 0:
        raise InvalidArgumentError("density must be non-negative")
    return density * volume

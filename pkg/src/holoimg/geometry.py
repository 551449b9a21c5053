"""Planar element layouts and pairwise geometry.

Arrays, RIS panels and ROI grids are all uniform rectangular grids lying in a
plane. Each layout carries a right-handed local frame ``(u, v, normal)`` built
deterministically from the plane normal, so repeated runs produce identical
element orderings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegenerateGeometryError",
    "ArrayGeometry",
    "RoiGrid",
    "PairGeometry",
    "plane_axes",
    "build_planar_layout",
    "build_roi",
    "pair_geometry",
    "is_radiative_near_field",
]


class DegenerateGeometryError(ValueError):
    """Raised when two element sets share a point (zero distance)."""


def _vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


def plane_axes(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the local frame ``(u, v, n)`` of a plane.

    ``u`` is the normalized projection of the global x axis onto the plane
    (global y when x is parallel to the normal) and ``v = n x u``.
    """
    n = _vec3(normal, "normal")
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise ValueError("normal must be nonzero")
    n = n / norm
    for ref in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        u = ref - n * (n @ ref)
        if np.linalg.norm(u) > 1e-9:
            break
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v, n


def _grid_points(rows: int, cols: int, spacing: float, center, normal):
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise ValueError(f"rows and cols must be positive integers, got {rows}x{cols}")
    if not np.isfinite(spacing) or spacing <= 0:
        raise ValueError(f"spacing must be positive and finite, got {spacing}")
    c = _vec3(center, "center")
    u, v, n = plane_axes(normal)
    col_off = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    row_off = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    # row-major: index = r * cols + q
    cc, rr = np.meshgrid(col_off, row_off)
    pts = c + cc.reshape(-1, 1) * u + rr.reshape(-1, 1) * v
    return pts, c, n, u, v


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform rectangular layout of antenna or RIS elements.

    Elements are stored row-major: element ``r * cols + q`` sits at row ``r``
    (along ``v``) and column ``q`` (along ``u``).
    """

    positions: np.ndarray
    rows: int
    cols: int
    spacing: float
    center: np.ndarray
    normal: np.ndarray
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("positions", "center", "normal", "u", "v"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def side(self) -> float:
        """Physical side length of the (square) aperture, ``cols * spacing``."""
        return max(self.rows, self.cols) * self.spacing

    @property
    def frame(self) -> np.ndarray:
        return np.stack([self.u, self.v, self.normal])


@dataclass(frozen=True)
class RoiGrid:
    """Grid of ``N = nx * ny`` square ROI cells of side ``cell_size``.

    Cell ``j * nx + i`` is image pixel ``(row j, column i)``.
    """

    cells: np.ndarray
    nx: int
    ny: int
    cell_size: float
    center: np.ndarray
    normal: np.ndarray
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("cells", "center", "normal", "u", "v"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return self.cells.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.cells

    @property
    def shape(self) -> tuple[int, int]:
        """Image matrix shape ``(ny, nx)``."""
        return (self.ny, self.nx)

    @property
    def side(self) -> float:
        return max(self.nx, self.ny) * self.cell_size

    @property
    def frame(self) -> np.ndarray:
        return np.stack([self.u, self.v, self.normal])


@dataclass(frozen=True)
class PairGeometry:
    """Distances and angles between every (a_i, b_j) element pair.

    Angles give the direction from ``a_i`` to ``b_j`` in side A's local frame:
    azimuth ``atan2(d.u, d.n)`` and elevation ``asin(d.v)``, so the plane
    broadside is ``(0, 0)``.
    """

    distances: np.ndarray
    azimuths: np.ndarray
    elevations: np.ndarray


def build_planar_layout(rows: int, cols: int, spacing: float, center=(0.0, 0.0, 0.0),
                        normal=(0.0, 1.0, 0.0)) -> ArrayGeometry:
    """Centered uniform rectangular array in the plane orthogonal to ``normal``.

    Args:
        rows, cols: Grid dimensions (>= 1).
        spacing: Element pitch in meters.
        center: Array center in meters.
        normal: Broadside direction (any nonzero length).
    """
    pts, c, n, u, v = _grid_points(rows, cols, spacing, center, normal)
    return ArrayGeometry(pts, int(rows), int(cols), float(spacing), c, n, u, v)


def build_roi(nx: int, ny: int, cell_size: float, center=(0.0, 10.0, 0.0),
              normal=(0.0, 1.0, 0.0)) -> RoiGrid:
    """ROI of ``nx`` columns by ``ny`` rows of cells centered on ``center``."""
    pts, c, n, u, v = _grid_points(ny, nx, cell_size, center, normal)
    return RoiGrid(pts, int(nx), int(ny), float(cell_size), c, n, u, v)


def _points_and_frame(obj):
    if hasattr(obj, "positions"):
        pts = np.asarray(obj.positions, dtype=float)
        frame = getattr(obj, "frame", None)
    else:
        pts = np.asarray(obj, dtype=float)
        frame = None
    pts = np.atleast_2d(pts)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ValueError(f"element set must be a nonempty (n, 3) array, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("element positions must be finite")
    if frame is None:
        frame = np.eye(3)[[0, 2, 1]]  # u=x, v=z, n=y
    return pts, frame


def pair_geometry(a, b) -> PairGeometry:
    """Pairwise distances (rows = side A) and angles seen from side A.

    Raises:
        DegenerateGeometryError: if any pair of points coincides.
    """
    pa, frame = _points_and_frame(a)
    pb, _ = _points_and_frame(b)
    diff = pb[None, :, :] - pa[:, None, :]
    dist = np.linalg.norm(diff, axis=2)
    if np.min(dist) <= 0.0:
        raise DegenerateGeometryError("degenerate geometry: coincident points across element sets")
    unit = diff / dist[..., None]
    du, dv, dn = (unit @ frame[k] for k in range(3))
    az = np.arctan2(du, dn)
    el = np.arcsin(np.clip(dv, -1.0, 1.0))
    return PairGeometry(dist, az, el)


def is_radiative_near_field(D: float, N: int, wavelength: float, d: float) -> bool:
    """True when ``2 D sqrt(2N) <= d <= 2 (D sqrt(2N))^2 / wavelength``.

    ``D`` is the largest aperture side, ``N`` its element (or pixel) count.
    """
    a = D * np.sqrt(2.0 * N)
    return bool(2.0 * a <= d <= 2.0 * a * a / wavelength)

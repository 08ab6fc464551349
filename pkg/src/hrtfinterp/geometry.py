"""Source-position geometry: coordinates, sampling grids and neighborhoods.

Positions are Cartesian 3-vectors in meters with the origin at the head
center. Azimuth is measured counter-clockwise from +x in the x-y plane and
elevation upward from the x-y plane, both in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

PLANE_TOL_DEG = 0.5
POLE_TOL_DEG = 1e-12

GridKind = Literal["geographical", "quasi-uniform", "loaded"]
Plane = Literal["horizontal", "median", "frontal"]


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class SphericalPos:
    azimuth: float
    elevation: float
    radius: float

    def __post_init__(self):
        if not (0.0 <= self.azimuth < 360.0):
            raise GeometryError(f"azimuth {self.azimuth} outside [0, 360)")
        if not (-90.0 <= self.elevation <= 90.0):
            raise GeometryError(f"elevation {self.elevation} outside [-90, 90]")
        if not self.radius > 0:
            raise GeometryError(f"radius must be positive, got {self.radius}")


def sph_to_cart(s: SphericalPos) -> np.ndarray:
    az = math.radians(s.azimuth)
    el = math.radians(s.elevation)
    return np.array(
        [
            s.radius * math.cos(el) * math.cos(az),
            s.radius * math.cos(el) * math.sin(az),
            s.radius * math.sin(el),
        ]
    )


def cart_to_sph(p) -> SphericalPos:
    az, el, r = cart_to_sph_array(np.asarray(p, dtype=float)[None, :])
    return SphericalPos(float(az[0]), float(el[0]), float(r[0]))


def sph_to_cart_array(az, el, r) -> np.ndarray:
    """Vectorized :func:`sph_to_cart`; angles in degrees, returns ``(..., 3)``."""
    az = np.radians(np.asarray(az, dtype=float))
    el = np.radians(np.asarray(el, dtype=float))
    r = np.asarray(r, dtype=float)
    ce = np.cos(el)
    return np.stack(
        np.broadcast_arrays(r * ce * np.cos(az), r * ce * np.sin(az), r * np.sin(el)),
        axis=-1,
    )


def cart_to_sph_array(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`cart_to_sph` over ``(n, 3)`` points.

    Returns azimuth, elevation (degrees) and radius arrays. Points at a pole
    get azimuth 0.
    """
    points = np.asarray(points, dtype=float)
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    if np.any(r == 0):
        raise GeometryError("zero vector has no spherical representation")
    el = np.degrees(np.arctan2(z, np.hypot(x, y)))
    az = np.mod(np.degrees(np.arctan2(y, x)), 360.0)
    az = np.where(az >= 360.0, 0.0, az)
    az = np.where(np.abs(np.abs(el) - 90.0) <= POLE_TOL_DEG, 0.0, az)
    return az, el, r


@dataclass(frozen=True, eq=False)
class Grid:
    positions: np.ndarray
    kind: GridKind
    radius: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GeometryError(f"grid positions must be (n, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("grid positions must be finite")
        if min_pairwise_distance(pos) <= 1e-9:
            raise GeometryError("grid positions must be pairwise distinct")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.radius == other.radius
            and np.array_equal(self.positions, other.positions)
        )


def min_pairwise_distance(points: np.ndarray) -> float:
    from scipy.spatial import cKDTree

    if len(points) < 2:
        return math.inf
    d, _ = cKDTree(points).query(points, k=2)
    return float(d[:, 1].min())


def nearest_neighbor_distances(points: np.ndarray) -> np.ndarray:
    from scipy.spatial import cKDTree

    d, _ = cKDTree(points).query(points, k=2)
    return d[:, 1]


def make_geographical_grid(step_el: float, gc_step_az: float, radius: float) -> Grid:
    """Rings of constant elevation with roughly constant great-circle spacing.

    Ring elevations are ``-90 + k * step_el``; a ring at elevation ``el``
    holds ``max(1, round(360 cos(el) / gc_step_az))`` equally spaced
    azimuths starting at 0. Ordered by elevation, then azimuth.
    """
    if not (0 < step_el <= 90):
        raise GeometryError("step_el must lie in (0, 90]")
    if not gc_step_az > 0:
        raise GeometryError("gc_step_az must be positive")
    n_rings = int(math.floor(180.0 / step_el + 1e-9)) + 1
    az_all, el_all = [], []
    for k in range(n_rings):
        el = -90.0 + k * step_el
        if abs(abs(el) - 90.0) < 1e-9:
            count = 1
        else:
            count = max(1, int(round(360.0 * math.cos(math.radians(el)) / gc_step_az)))
        az_all.extend(360.0 * np.arange(count) / count)
        el_all.extend([el] * count)
    pos = sph_to_cart_array(np.array(az_all), np.array(el_all), radius)
    return Grid(pos, "geographical", float(radius))


def make_quasi_uniform_grid(n: int, radius: float) -> Grid:
    """Fibonacci-sphere layout: ``z_i = 1 - (2i + 1)/n`` with golden-angle azimuth steps."""
    if n < 2:
        raise GeometryError("need at least 2 points")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    pos = radius * np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    return Grid(pos, "quasi-uniform", float(radius))


def neighborhood_indices(points: np.ndarray, p, delta: float) -> np.ndarray:
    """Indices of points with ``0 < |q - p| < delta``, nearest first.

    Ties in distance keep ascending index order.
    """
    if not delta > 0:
        raise GeometryError("delta must be positive")
    diff = np.asarray(points, dtype=float) - np.asarray(p, dtype=float)
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    idx = np.flatnonzero((d > 0) & (d < delta))
    return idx[np.argsort(d[idx], kind="stable")]


def neighborhood(grid: Grid, p, delta: float) -> list[np.ndarray]:
    idx = neighborhood_indices(grid.positions, p, delta)
    return [grid.positions[i].copy() for i in idx]


def sample_neighbors(candidates, n: int, mode: Literal["train", "test"], rng_seed=None):
    """Pick ``n`` neighbors out of a distance-sorted candidate list.

    ``train`` draws uniformly with replacement; ``test`` takes the ``n``
    closest, cycling through the list when fewer than ``n`` exist.
    ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    Returns a list of the selected candidates.
    """
    idx = sample_indices(len(candidates), n, mode, rng_seed)
    return [candidates[i] for i in idx]


def sample_indices(n_candidates: int, n: int, mode: str, rng_seed=None) -> np.ndarray:
    if n_candidates == 0:
        raise GeometryError("target has no neighbors within delta")
    if mode == "train":
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        return rng.integers(0, n_candidates, size=n)
    if mode == "test":
        return np.arange(n) % n_candidates
    raise GeometryError(f"unknown sampling mode {mode!r}")


def plane_membership(p, tol: float = PLANE_TOL_DEG) -> set[Plane]:
    p = np.asarray(p, dtype=float)
    r = float(np.linalg.norm(p))
    if r == 0:
        raise GeometryError("zero vector has no plane membership")
    # angular distance to a plane through the origin = asin(|normal . u|)
    u = p / r
    out: set[Plane] = set()
    if math.degrees(math.asin(min(1.0, abs(u[2])))) <= tol:
        out.add("horizontal")
    if math.degrees(math.asin(min(1.0, abs(u[1])))) <= tol:
        out.add("median")
    if math.degrees(math.asin(min(1.0, abs(u[0])))) <= tol:
        out.add("frontal")
    return out


def plane_masks(points: np.ndarray, tol: float = PLANE_TOL_DEG) -> dict[str, np.ndarray]:
    u = np.asarray(points, dtype=float)
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    ang = np.degrees(np.arcsin(np.minimum(1.0, np.abs(u))))
    return {"horizontal": ang[:, 2] <= tol, "median": ang[:, 1] <= tol, "frontal": ang[:, 0] <= tol}


def downsample_grid(grid: Grid, t: int) -> Grid:
    """Keep every ``t``-th point of the grid's ordering."""
    if int(t) != t or t < 1:
        raise GeometryError("downsample factor must be a positive integer")
    if t == 1:
        return grid
    return Grid(grid.positions[:: int(t)], grid.kind, grid.radius)

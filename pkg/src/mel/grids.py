"""Geometric substrate: radial grids, masked Cartesian grids, boundary distance,
foliation slices and cell-sum quadrature.

Shapes are restricted to the unit disk, the unit ball and axis-aligned
rectangles, all of which have exact boundary-distance functions, so the
distance field carries no discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, GridMismatch

__all__ = [
    "RadialGrid",
    "CartesianGrid",
    "SliceQuadrature",
    "GridFunction",
    "build_radial_grid",
    "build_masked_grid",
    "boundary_distance",
    "foliation_slice",
    "integrate_weighted",
]


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radial nodes r_0 < ... < r_{N-1} in dimension n >= 2."""

    n: int
    r: np.ndarray
    law: str  # "uniform" | "logarithmic"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        if self.n < 2:
            raise DomainError(f"radial grid needs n >= 2, got {self.n}")
        if r.size < 3:
            raise DomainError("radial grid needs at least 3 nodes")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise DomainError("radial nodes must be positive and strictly increasing")

    @property
    def count(self) -> int:
        return int(self.r.size)

    def cell_volumes(self) -> np.ndarray:
        """Volume |S^{n-1}| r^{n-1} dr attached to each node (trapezoid cells)."""
        r = self.r
        edges = np.concatenate([[r[0]], 0.5 * (r[1:] + r[:-1]), [r[-1]]])
        return sphere_area(self.n) * r ** (self.n - 1) * np.diff(edges)

    def descriptor(self) -> dict:
        return {
            "n": self.n,
            "r_min": float(self.r[0]),
            "r_max": float(self.r[-1]),
            "count": self.count,
            "law": self.law,
        }


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    from math import gamma, pi

    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


def build_radial_grid(n: int, r_min: float, r_max: float, count: int, law: str = "uniform") -> RadialGrid:
    if n < 2:
        raise DomainError(f"n >= 2 required, got {n}")
    if not (0 < r_min < r_max):
        raise DomainError(f"need 0 < r_min < r_max, got ({r_min}, {r_max})")
    if count < 3:
        raise DomainError(f"count >= 3 required, got {count}")
    if law == "uniform":
        r = np.linspace(r_min, r_max, count)
    elif law == "logarithmic":
        r = np.geomspace(r_min, r_max, count)
    else:
        raise DomainError(f"unknown spacing law {law!r}")
    return RadialGrid(n=n, r=r, law=law)


_SHAPES = ("disk", "ball", "rectangle")


@dataclass(frozen=True)
class CartesianGrid:
    """Lattice points strictly inside the domain plus a Dirichlet ghost layer.

    Interior nodes sit at integer multiples of h (so the origin, when inside,
    is always a node).  Ghosts are the non-interior lattice points adjacent to
    an interior node along an axis; each carries its nearest point of the
    continuous boundary.
    """

    dim: int
    shape: str
    h: float
    points: np.ndarray          # (Ni, dim) interior node coordinates
    rho: np.ndarray             # (Ni,) exact boundary distance
    neighbors: np.ndarray       # (Ni, 2*dim) interior index, or -(g+1) for ghost g
    ghost_points: np.ndarray    # (Ng, dim) ghost lattice coordinates
    ghost_boundary: np.ndarray  # (Ng, dim) nearest point on the true boundary
    bounds: Optional[tuple] = None  # rectangle only: (lo, hi) arrays

    @property
    def interior_count(self) -> int:
        return int(self.points.shape[0])

    @property
    def ghost_count(self) -> int:
        return int(self.ghost_points.shape[0])

    def cell_volume(self) -> float:
        return self.h ** self.dim

    def nearest_interior(self, x) -> int:
        x = np.asarray(x, dtype=float)
        return int(np.argmin(np.sum((self.points - x) ** 2, axis=1)))

    def nearest_ghost(self, x) -> int:
        x = np.asarray(x, dtype=float)
        return int(np.argmin(np.sum((self.ghost_boundary - x) ** 2, axis=1)))

    def max_rho(self) -> float:
        return float(self.rho.max())

    def descriptor(self) -> dict:
        return {"dim": self.dim, "shape": self.shape, "h": self.h}


def _distance_field(shape: str, pts: np.ndarray, bounds=None) -> np.ndarray:
    """Exact signed distance to the boundary (positive inside)."""
    if shape in ("disk", "ball"):
        return 1.0 - np.sqrt(np.sum(pts ** 2, axis=-1))
    lo, hi = bounds
    return np.minimum((pts - lo).min(axis=-1), (hi - pts).min(axis=-1))


def _project_to_boundary(shape: str, pts: np.ndarray, bounds=None) -> np.ndarray:
    if shape in ("disk", "ball"):
        norms = np.sqrt(np.sum(pts ** 2, axis=-1, keepdims=True))
        norms[norms == 0] = 1.0
        return pts / norms
    lo, hi = bounds
    proj = np.clip(pts, lo, hi)
    # snap the closest coordinate onto a face
    d_lo = proj - lo
    d_hi = hi - proj
    stacked = np.concatenate([d_lo, d_hi], axis=-1)
    k = np.argmin(stacked, axis=-1)
    out = proj.copy()
    dim = pts.shape[-1]
    for i, ki in enumerate(k):
        if ki < dim:
            out[i, ki] = lo[ki]
        else:
            out[i, ki - dim] = hi[ki - dim]
    return out


def build_masked_grid(dim: int, shape: str, h: float, bounds=None) -> CartesianGrid:
    """Build the masked lattice for the unit disk/ball or a rectangle.

    For ``rectangle`` pass ``bounds=(lo, hi)`` (defaults to the unit square/cube).
    """
    if dim not in (2, 3):
        raise DomainError(f"dim must be 2 or 3, got {dim}")
    if shape not in _SHAPES:
        raise DomainError(f"unknown shape {shape!r}")
    if h <= 0:
        raise DomainError("h must be positive")
    if shape == "disk" and dim != 2:
        raise DomainError("disk is 2-D")
    if shape == "ball" and dim != 3:
        raise DomainError("ball is 3-D")

    if shape == "rectangle":
        if bounds is None:
            lo = np.zeros(dim)
            hi = np.ones(dim)
        else:
            lo = np.asarray(bounds[0], dtype=float)
            hi = np.asarray(bounds[1], dtype=float)
        b = (lo, hi)
        ranges = [np.arange(int(np.floor(lo[d] / h)) - 1, int(np.ceil(hi[d] / h)) + 2) for d in range(dim)]
    else:
        b = None
        m = int(np.ceil(1.0 / h)) + 1
        ranges = [np.arange(-m, m + 1)] * dim

    mesh = np.meshgrid(*ranges, indexing="ij")
    idx = np.stack([g.ravel() for g in mesh], axis=1)  # integer lattice coords
    pts = idx * h
    rho = _distance_field(shape, pts, b)
    inside = rho > 1e-12 * max(1.0, h)

    if not np.any(inside):
        raise DomainError(f"no interior lattice point for shape={shape}, h={h}")

    int_idx = idx[inside]
    int_pts = pts[inside]
    int_rho = rho[inside]
    if int_pts.shape[0] < 9:
        raise DomainError(f"interior too small ({int_pts.shape[0]} nodes); decrease h")

    # linear lattice keys for a vectorized neighbor lookup
    lo_corner = int_idx.min(axis=0) - 2
    hi_corner = int_idx.max(axis=0) + 2
    extent = hi_corner - lo_corner + 1
    strides = np.ones(dim, dtype=np.int64)
    for d in range(dim - 2, -1, -1):
        strides[d] = strides[d + 1] * extent[d + 1]

    def to_key(rows):
        return (rows - lo_corner) @ strides

    keys = to_key(int_idx)
    order = np.argsort(keys)
    sorted_keys = keys[order]

    ni = int_pts.shape[0]
    neighbors = np.empty((ni, 2 * dim), dtype=np.int64)
    miss_rows, miss_keys, miss_slots = [], [], []
    for d in range(dim):
        for s, col in ((1, 2 * d), (-1, 2 * d + 1)):
            shifted = int_idx.copy()
            shifted[:, d] += s
            skeys = to_key(shifted)
            pos = np.searchsorted(sorted_keys, skeys)
            pos_c = np.minimum(pos, ni - 1)
            hit = sorted_keys[pos_c] == skeys
            neighbors[:, col] = np.where(hit, order[pos_c], -1)
            if not np.all(hit):
                miss = ~hit
                miss_rows.append(shifted[miss])
                miss_keys.append(skeys[miss])
                miss_slots.append((col, np.where(miss)[0]))

    if miss_keys:
        all_keys = np.concatenate(miss_keys)
        uniq_keys, first = np.unique(all_keys, return_index=True)
        all_rows = np.concatenate(miss_rows, axis=0)
        ghost_idx = all_rows[first]
        offset = 0
        for rows_d, keys_d, (col, where_rows) in zip(miss_rows, miss_keys, miss_slots):
            ranks = np.searchsorted(uniq_keys, keys_d)
            neighbors[where_rows, col] = -(ranks + 1)
            offset += keys_d.size
    else:
        ghost_idx = np.empty((0, dim), dtype=np.int64)
    ghost_pts = ghost_idx * h
    ghost_b = _project_to_boundary(shape, ghost_pts, b) if ghost_pts.size else ghost_pts

    return CartesianGrid(
        dim=dim,
        shape=shape,
        h=float(h),
        points=int_pts,
        rho=int_rho,
        neighbors=neighbors,
        ghost_points=ghost_pts,
        ghost_boundary=ghost_b,
        bounds=b,
    )


@dataclass
class GridFunction:
    """Values at the interior nodes of a grid, with optional ghost values."""

    grid: object
    values: np.ndarray
    ghost_values: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = self.grid.interior_count if isinstance(self.grid, CartesianGrid) else self.grid.count
        if self.values.shape != (expected,):
            raise GridMismatch(f"expected {expected} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("grid function has non-finite values")

    @classmethod
    def constant(cls, grid, c: float) -> "GridFunction":
        n = grid.interior_count if isinstance(grid, CartesianGrid) else grid.count
        return cls(grid, np.full(n, float(c)))

    @classmethod
    def from_callable(cls, grid, f) -> "GridFunction":
        if isinstance(grid, CartesianGrid):
            vals = np.array([f(x) for x in grid.points], dtype=float)
        else:
            vals = np.array([f(r) for r in grid.r], dtype=float)
        return cls(grid, vals)

    def same_grid(self, other: "GridFunction") -> None:
        if self.grid is not other.grid:
            raise GridMismatch("grid functions live on different grids")


def boundary_distance(grid: CartesianGrid) -> GridFunction:
    """Exact distance to the boundary; zero only on the ghost layer."""
    gf = GridFunction(grid, grid.rho.copy())
    gf.ghost_values = np.zeros(grid.ghost_count)
    return gf


@dataclass(frozen=True)
class SliceQuadrature:
    """Nodes and surface weights approximating the foliation slice {rho = t}."""

    t: float
    node_indices: np.ndarray
    weights: np.ndarray

    def total_weight(self) -> float:
        return float(self.weights.sum())


def _exact_slice_measure(grid: CartesianGrid, t: float) -> float:
    if grid.shape == "disk":
        return 2.0 * np.pi * (1.0 - t)
    if grid.shape == "ball":
        return 4.0 * np.pi * (1.0 - t) ** 2
    lo, hi = grid.bounds
    sides = (hi - lo) - 2.0 * t
    if np.any(sides <= 0):
        raise DomainError(f"slice level t={t} outside the rectangle inradius")
    if grid.dim == 2:
        return float(2.0 * sides.sum())
    return float(2.0 * (sides[0] * sides[1] + sides[0] * sides[2] + sides[1] * sides[2]))


def foliation_slice(grid: CartesianGrid, t: float) -> SliceQuadrature:
    """Node band of width h around {rho = t}, rescaled to the exact slice measure."""
    if not (0.0 < t < grid.max_rho()):
        raise DomainError(f"slice level t={t} outside (0, {grid.max_rho():.4g})")
    band = np.where(np.abs(grid.rho - t) <= grid.h / 2.0)[0]
    if band.size == 0:
        raise DomainError(f"empty slice band at t={t}")
    w = np.full(band.size, grid.h ** (grid.dim - 1))
    w *= _exact_slice_measure(grid, t) / w.sum()
    return SliceQuadrature(t=float(t), node_indices=band, weights=w)


def integrate_weighted(f: GridFunction, w: GridFunction) -> float:
    """Cell-sum quadrature sum f*w*h^dim over interior nodes."""
    f.same_grid(w)
    grid = f.grid
    if not isinstance(grid, CartesianGrid):
        raise GridMismatch("integrate_weighted expects a Cartesian grid")
    return float(np.sum(f.values * w.values) * grid.cell_volume())

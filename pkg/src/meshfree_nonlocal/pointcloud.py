"""
Quasi-uniform 2D point clouds, the Dirichlet collar around them, and
fixed-radius neighbor search.

Points are stored row-major by lattice index; region tags split them into
interior points (closed rectangle) and the volumetric boundary layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import NeighborhoodError

# relative slack on the horizon so lattice points sitting exactly on the
# ball boundary are included regardless of rounding
RADIUS_TOL = 1e-12


class Region(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1


@dataclass(frozen=True)
class Rectangle:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    def contains(self, pts, tol=0.0):
        pts = np.asarray(pts, dtype=float)
        return ((pts[..., 0] >= self.x0 - tol) & (pts[..., 0] <= self.x1 + tol)
                & (pts[..., 1] >= self.y0 - tol) & (pts[..., 1] <= self.y1 + tol))


UNIT_SQUARE = Rectangle(0.0, 0.0, 1.0, 1.0)


@dataclass
class PointCloud:
    """Discretization points with region tags.

    Attributes
    ----------
    points : (M, 2) ndarray
    region : (M,) int8 ndarray of :class:`Region` values
    h : float
        Lattice spacing (fill distance of the generating grid).
    delta : float
        Horizon the boundary layer was sized for.
    domain : Rectangle
    lattice : (M, 2) int ndarray
        Generating lattice index of every point; fixes the ordering.
    """

    points: np.ndarray
    region: np.ndarray
    h: float
    delta: float
    domain: Rectangle
    lattice: np.ndarray
    perturbed: bool = False
    _index: "CellList | None" = field(default=None, repr=False, compare=False)

    def __len__(self):
        return self.points.shape[0]

    @property
    def interior(self):
        return np.flatnonzero(self.region == Region.INTERIOR)

    @property
    def dirichlet(self):
        return np.flatnonzero(self.region == Region.DIRICHLET)

    def index(self, radius=None):
        """Cell list over all points; rebuilt when a different cell size is asked for."""
        radius = self.delta if radius is None else radius
        if self._index is None or self._index.cell != radius:
            self._index = CellList(self.points, radius)
        return self._index


@dataclass(frozen=True)
class Neighborhood:
    center_index: int
    neighbor_indices: np.ndarray

    def __len__(self):
        return len(self.neighbor_indices)


@dataclass(frozen=True)
class PerturbationSpec:
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.ratio < 1.0):
            raise ValueError(f"perturbation ratio must lie in [0, 1), got {self.ratio}")


def _layer_rings(h, delta):
    # 1e-9 keeps integer ratios (delta = 3h) from rounding up to an extra ring
    return int(math.ceil(delta / h - 1e-9))


def _intervals(length, h):
    n = length / h
    k = int(round(n))
    if abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"side length {length} is not a multiple of h={h}")
    return k


def build_uniform_grid(domain: Rectangle, h: float, delta: float,
                       cell_centered: bool = False, closed: bool = True) -> PointCloud:
    """Lattice of spacing ``h`` over the domain plus a collar of ``ceil(delta/h)`` rings.

    With ``cell_centered=False`` lattice nodes sit on the domain edges and
    the closed rectangle is interior. With ``cell_centered=True`` nodes sit
    at cell midpoints (``nx`` by ``ny`` interior points), which is how the
    impact plate is discretized.

    ``closed=False`` treats the domain as open: nodes lying on its edges
    join the boundary layer instead of the interior.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    if not delta >= h * (1 - 1e-12):
        raise ValueError(f"delta={delta} must be at least h={h}")
    nx = _intervals(domain.width, h)
    ny = _intervals(domain.height, h)
    rings = _layer_rings(h, delta)
    if cell_centered:
        ix = np.arange(-rings, nx + rings)
        iy = np.arange(-rings, ny + rings)
        shift = 0.5
        inside_x = (ix >= 0) & (ix < nx)
        inside_y = (iy >= 0) & (iy < ny)
    else:
        ix = np.arange(-rings, nx + rings + 1)
        iy = np.arange(-rings, ny + rings + 1)
        shift = 0.0
        lo = 0 if closed else 1
        inside_x = (ix >= lo) & (ix <= nx - lo)
        inside_y = (iy >= lo) & (iy <= ny - lo)
    # row-major: y is the slow index
    jj, ii = np.meshgrid(iy, ix, indexing="ij")
    lattice = np.column_stack([ii.ravel(), jj.ravel()])
    pts = np.column_stack([domain.x0 + (lattice[:, 0] + shift) * h,
                           domain.y0 + (lattice[:, 1] + shift) * h])
    inside = (inside_y[:, None] & inside_x[None, :]).ravel()
    region = np.where(inside, Region.INTERIOR, Region.DIRICHLET).astype(np.int8)
    return PointCloud(pts, region, float(h), float(delta), domain, lattice)


def perturb_grid(cloud: PointCloud, spec: PerturbationSpec) -> PointCloud:
    """Move every point by independent offsets drawn from U[-rh, rh]^2."""
    if cloud.perturbed:
        raise ValueError("perturb_grid expects an unperturbed lattice")
    if spec.ratio == 0.0:
        return replace(cloud, points=cloud.points.copy(), region=cloud.region.copy(), _index=None)
    rng = np.random.default_rng(spec.seed)
    amp = spec.ratio * cloud.h
    offsets = rng.uniform(-amp, amp, size=cloud.points.shape)
    return replace(cloud, points=cloud.points + offsets, region=cloud.region.copy(),
                   perturbed=True, _index=None)


class CellList:
    """Uniform binning with square cells of side ``cell`` for radius queries."""

    def __init__(self, points, cell):
        if not cell > 0:
            raise ValueError("cell size must be positive")
        self.points = np.asarray(points, dtype=float)
        self.cell = float(cell)
        self.origin = self.points.min(axis=0)
        ij = np.floor((self.points - self.origin) / self.cell).astype(np.int64)
        self.ny = int(ij[:, 1].max()) + 3
        keys = (ij[:, 0] + 1) * self.ny + (ij[:, 1] + 1)
        self._ij = ij
        order = np.argsort(keys, kind="stable")
        self._order = order
        self._sorted_keys = keys[order]

    def _cell_members(self, keys):
        lo = np.searchsorted(self._sorted_keys, keys, side="left")
        hi = np.searchsorted(self._sorted_keys, keys, side="right")
        return [self._order[a:b] for a, b in zip(lo, hi)]

    def query(self, centers, radius):
        """Sorted neighbor index arrays (self excluded) for each center id."""
        if radius > self.cell * (1 + 1e-12):
            raise ValueError("query radius exceeds cell size")
        centers = np.asarray(centers, dtype=np.int64)
        r2 = (radius * (1 + RADIUS_TOL)) ** 2
        result = [None] * len(centers)
        ij = self._ij[centers]
        ckeys = (ij[:, 0] + 1) * self.ny + (ij[:, 1] + 1)
        # process centers cell by cell so candidate gathering is shared
        corder = np.argsort(ckeys, kind="stable")
        ck_sorted = ckeys[corder]
        bounds = np.flatnonzero(np.diff(ck_sorted)) + 1
        groups = np.split(corder, bounds)
        offsets = np.array([dx * self.ny + dy for dx in (-1, 0, 1) for dy in (-1, 0, 1)])
        for grp in groups:
            key = ckeys[grp[0]]
            cand = np.concatenate(self._cell_members(key + offsets))
            cand.sort()
            diff = self.points[cand][None, :, :] - self.points[centers[grp]][:, None, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            hit = d2 <= r2
            for row, g in enumerate(grp):
                nb = cand[hit[row]]
                result[g] = nb[nb != centers[g]]
        return result


def brute_force_neighbors(points, centers, radius):
    """O(M^2) reference for :meth:`CellList.query`."""
    points = np.asarray(points, dtype=float)
    r2 = (radius * (1 + RADIUS_TOL)) ** 2
    out = []
    for c in centers:
        d = points - points[c]
        d2 = np.einsum("ij,ij->i", d, d)
        nb = np.flatnonzero(d2 <= r2)
        out.append(nb[nb != c])
    return out


def build_neighborhoods(cloud: PointCloud, delta: float | None = None) -> list[Neighborhood]:
    """Neighborhoods ``B_delta(x_i)`` minus the center, for every interior point."""
    delta = cloud.delta if delta is None else delta
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    centers = cloud.interior
    lists = cloud.index(delta).query(centers, delta)
    nbhds = []
    for c, nb in zip(centers, lists):
        if nb.size == 0:
            raise NeighborhoodError(
                f"interior point {c} has no neighbors within delta={delta:g}")
        nbhds.append(Neighborhood(int(c), nb))
    return nbhds


def write_point_table(cloud: PointCloud, path):
    """Write ``id x y region`` lines under a ``# h=.. delta=..`` header."""
    lines = [f"# h={cloud.h!r} delta={cloud.delta!r}"]
    for i, (p, r) in enumerate(zip(cloud.points, cloud.region)):
        lines.append(f"{i} {float(p[0])!r} {float(p[1])!r} {int(r)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_point_table(path):
    """Inverse of :func:`write_point_table`; returns ``(points, region, h, delta)``."""
    text = Path(path).read_text().splitlines()
    header = dict(tok.split("=") for tok in text[0].lstrip("# ").split())
    rows = np.array([ln.split() for ln in text[1:] if ln.strip()], dtype=float)
    order = rows[:, 0].astype(int)
    points = np.empty((len(rows), 2))
    region = np.empty(len(rows), dtype=np.int8)
    points[order] = rows[:, 1:3]
    region[order] = rows[:, 3].astype(np.int8)
    return points, region, float(header["h"]), float(header["delta"])

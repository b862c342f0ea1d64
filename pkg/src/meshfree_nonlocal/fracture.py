"""
Bond states, critical-stretch breaking, damage and the Kalthoff-Winkler driver.

Bonds are the directed pairs ``(i -> j)`` of the interior neighborhoods,
flattened in neighborhood order, i.e. in the same order as the bond lists of
:class:`~meshfree_nonlocal.operators.NonlocalOperator`. A bond state is kept
for every directed copy; breaking always acts on both copies of a pair.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .kernel import KernelSpec, bulk_modulus_from_young, constant_coefficient
from .operators import assemble_peridynamic
from .pointcloud import Rectangle, build_neighborhoods, build_uniform_grid
from .quadrature import Mode, build_basis, generate_all_weights
from .solver import LinearSolver, TimeIntegratorState, cfl_number, step_peridynamic, write_snapshot

INTACT = -1
# broken_at value for bonds cut before the first step (notches, free sides)
INITIAL = 0


@dataclass
class BondStateField:
    """Per-bond intact flags with the step at which each bond broke.

    ``broken_at`` is ``-1`` for intact bonds, ``0`` for bonds cut during
    initialization and the step index otherwise. ``reverse[b]`` is the
    directed copy ``(j -> i)`` of bond ``b``, or ``-1`` when ``j`` is not an
    interior point.
    """

    row: np.ndarray
    col: np.ndarray
    offsets: np.ndarray
    theta: np.ndarray
    broken_at: np.ndarray
    reverse: np.ndarray

    @classmethod
    def intact(cls, nbhds, n_points=None):
        row = np.concatenate([np.full(len(nb), nb.center_index) for nb in nbhds]).astype(np.int64)
        col = np.concatenate([nb.neighbor_indices for nb in nbhds]).astype(np.int64)
        sizes = [len(nb) for nb in nbhds]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        n = int(max(row.max(), col.max())) + 1 if n_points is None else int(n_points)
        key = row * n + col
        order = np.argsort(key)
        rkey = col * n + row
        pos = np.searchsorted(key[order], rkey)
        pos = np.minimum(pos, len(key) - 1)
        found = key[order][pos] == rkey
        reverse = np.where(found, order[pos], -1)
        return cls(row, col, offsets, np.ones(row.size, dtype=bool),
                   np.full(row.size, INTACT, dtype=np.int64), reverse)

    def __len__(self):
        return self.theta.size

    def copy(self):
        return BondStateField(self.row, self.col, self.offsets, self.theta.copy(),
                              self.broken_at.copy(), self.reverse)

    def break_bonds(self, mask, step):
        """Break bonds in ``mask`` (and their reverse copies) at ``step``; returns the new count."""
        mask = np.asarray(mask, dtype=bool)
        both = mask.copy()
        has_rev = self.reverse >= 0
        both[self.reverse[has_rev & mask]] = True
        new = both & self.theta
        self.theta[new] = False
        self.broken_at[new] = step
        return int(np.count_nonzero(new))


def bond_stretch(u, i, j, points):
    """Relative elongation ``(|y - x + u(y) - u(x)| - |y - x|) / |y - x|`` of bond (i, j)."""
    xi, xj = np.asarray(points[i], dtype=float), np.asarray(points[j], dtype=float)
    r = math.hypot(*(xj - xi))
    if r == 0.0:
        raise ValueError(f"points {i} and {j} coincide")
    u = np.asarray(u, dtype=float)
    deformed = (xj - xi) + (u[j] - u[i])
    return (math.hypot(*deformed) - r) / r


def bond_stretches(u, row, col, points):
    z = points[col] - points[row]
    r = np.hypot(z[:, 0], z[:, 1])
    if np.any(r == 0.0):
        raise ValueError("bond between coincident points")
    dz = z + (u[col] - u[row])
    return (np.hypot(dz[:, 0], dz[:, 1]) - r) / r


@dataclass(frozen=True)
class Segment2:
    a: tuple
    b: tuple

    def __post_init__(self):
        if tuple(self.a) == tuple(self.b):
            raise ValueError("degenerate segment")


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(p, q, seg: Segment2):
    """Vectorized test of segments ``p[k] q[k]`` against one segment; touching counts."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    (ax, ay), (bx, by) = seg.a, seg.b
    d1 = _orient(ax, ay, bx, by, p[:, 0], p[:, 1])
    d2 = _orient(ax, ay, bx, by, q[:, 0], q[:, 1])
    d3 = _orient(p[:, 0], p[:, 1], q[:, 0], q[:, 1], ax, ay)
    d4 = _orient(p[:, 0], p[:, 1], q[:, 0], q[:, 1], bx, by)
    hit = (d1 * d2 <= 0) & (d3 * d4 <= 0)
    # all four orientations vanish only for collinear pairs; require overlap then
    collinear = (d1 == 0) & (d2 == 0)
    if np.any(collinear):
        ox = (np.minimum(p[:, 0], q[:, 0]) <= max(ax, bx)) & (np.maximum(p[:, 0], q[:, 0]) >= min(ax, bx))
        oy = (np.minimum(p[:, 1], q[:, 1]) <= max(ay, by)) & (np.maximum(p[:, 1], q[:, 1]) >= min(ay, by))
        hit = np.where(collinear, ox & oy, hit)
    return hit


def initialize_prenotch(theta: BondStateField, notches, points) -> BondStateField:
    """Copy of ``theta`` with every bond crossing a notch (or free side) segment cut."""
    out = theta.copy()
    p, q = points[out.row], points[out.col]
    for seg in notches:
        out.break_bonds(segments_intersect(p, q, seg), INITIAL)
    return out


def _threshold(s0, theta, points):
    if callable(s0):
        return np.asarray(s0(points[theta.row], points[theta.col]), dtype=float)
    return np.asarray(s0, dtype=float)


def update_bond_states(theta: BondStateField, u, s0, step, points):
    """Break bonds stretched beyond ``s0``; returns ``(new_field, newly_broken)``.

    ``s0`` may be a scalar, a per-bond array or a two-point evaluator.
    The count is over directed bonds, so one broken pair counts twice.
    """
    u = np.asarray(u, dtype=float)
    s = bond_stretches(u, theta.row, theta.col, points)
    over = theta.theta & (s > _threshold(s0, theta, points))
    out = theta.copy()
    count = out.break_bonds(over, int(step))
    return out, count


def damage(theta: BondStateField, nbhds=None, growth_only=False):
    """Fraction of broken bonds per interior point, in neighborhood order.

    ``growth_only`` ignores bonds cut at initialization.
    """
    broken = ~theta.theta
    if growth_only:
        broken = broken & (theta.broken_at > INITIAL)
    sizes = np.diff(theta.offsets)
    if np.any(sizes == 0):
        raise ValueError("damage is undefined for an empty neighborhood")
    counts = np.add.reduceat(broken.astype(np.int64), theta.offsets[:-1])
    return counts / sizes


def fragments(theta: BondStateField, interior, n_points, min_size=1):
    """Connected pieces of the intact interior bond graph with at least ``min_size`` points."""
    interior = np.asarray(interior)
    is_int = np.zeros(n_points, dtype=bool)
    is_int[interior] = True
    keep = theta.theta & is_int[theta.col]
    g = coo_matrix((np.ones(int(keep.sum())), (theta.row[keep], theta.col[keep])),
                   shape=(n_points, n_points))
    _, labels = connected_components(g, directed=False)
    sizes = np.bincount(labels[interior])
    return int(np.count_nonzero(sizes >= min_size))


def crack_angle(points, damage_values, tip, radius, threshold=0.35, link=None,
                seed_radius=None, below_only=True):
    """Angle (degrees) between a fitted crack line and the vertical.

    Points with damage above ``threshold`` inside a disc of ``radius`` around
    ``tip`` are fitted by a principal-axis line. With ``link`` set, damaged
    points are first grouped into clusters (points closer than ``link`` are
    connected) and only clusters reaching within ``seed_radius`` of the tip
    are kept, so unrelated damage inside the window is ignored. Returns
    ``nan`` when fewer than three points qualify.
    """
    pts = np.asarray(points, dtype=float)
    dmg = np.asarray(damage_values)
    cand = np.flatnonzero(dmg > threshold)
    q = pts[cand]
    dist = np.hypot(q[:, 0] - tip[0], q[:, 1] - tip[1])
    sel = dist <= radius
    if below_only:
        sel &= q[:, 1] <= tip[1]
    if link is not None and q.shape[0]:
        pairs = cKDTree(q).query_pairs(link, output_type="ndarray")
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(q), len(q)))
        _, labels = connected_components(g, directed=False)
        seed = radius if seed_radius is None else seed_radius
        sel &= np.isin(labels, np.unique(labels[dist <= seed]))
    if np.count_nonzero(sel) < 3:
        return float("nan")
    c = q[sel] - q[sel].mean(axis=0)
    _, _, vt = np.linalg.svd(c, full_matrices=False)
    return float(np.degrees(np.arccos(min(1.0, abs(vt[0][1])))))


@dataclass
class KWConfig:
    """Kalthoff-Winkler setup in cm, ms and kg.

    The plate is ``length x width`` with two vertical notches running from
    the impacted (top) edge down to ``notch_depth`` below it. The material
    values give ``kappa = E / 3(1 - 2 nu)`` and a fracture energy chosen so
    that ``s0 = s0_coefficient / sqrt(delta)``.
    """

    N: int = 64
    dh_ratio: float = 3.0
    poly_order: int = 3
    dt: float = 2e-4
    steps: int = 500
    length: float = 20.0
    width: float = 10.0
    notch_x: tuple = (7.5, 12.5)
    notch_depth: float = 5.0
    speed: float = 3.2
    E: float = 1910.0
    nu: float = 0.25
    rho: float = 8e-3
    s0_coefficient: float = 0.0099
    s: float = 1.0
    snapshot_every: int = 0
    snapshot_path: str | None = None
    workers: int | None = None

    @property
    def h(self):
        return self.width / self.N

    @property
    def delta(self):
        return self.dh_ratio * self.h

    @property
    def kappa(self):
        return bulk_modulus_from_young(self.E, self.nu)

    @property
    def fracture_energy(self):
        return 3.0 * self.kappa * self.s0_coefficient ** 2 / math.pi

    @property
    def s0(self):
        return self.s0_coefficient / math.sqrt(self.delta)

    @property
    def tips(self):
        return [(x, self.width - self.notch_depth) for x in self.notch_x]


@dataclass
class KWResult:
    config: KWConfig
    points: np.ndarray
    interior: np.ndarray
    u: np.ndarray
    bonds: BondStateField
    damage: np.ndarray
    growth_damage: np.ndarray
    first_crack: list
    angles: list
    fragments: int
    cfl: float
    broken_per_step: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def kw_geometry(cfg: KWConfig):
    """Cloud, neighborhoods, prescribed-motion masks and cut segments."""
    plate = Rectangle(0.0, 0.0, cfg.length, cfg.width)
    cloud = build_uniform_grid(plate, cfg.h, cfg.delta, cell_centered=True)
    nbhds = build_neighborhoods(cloud)
    d = cfg.delta
    x0, x1 = sorted(cfg.notch_x)
    top = cfg.width
    pts = cloud.points
    layer = cloud.dirichlet
    driven = layer[(pts[layer, 1] > top) & (pts[layer, 0] > x0) & (pts[layer, 0] < x1)]
    # free sides extend a horizon past the corners so no bond sneaks around them
    cuts = [
        Segment2((0.0, -d), (0.0, top + d)),
        Segment2((cfg.length, -d), (cfg.length, top + d)),
        Segment2((-d, 0.0), (cfg.length + d, 0.0)),
    ]
    # notches run through the top layer so it cannot tie the pieces together
    cuts += [Segment2((x, cfg.width - cfg.notch_depth), (x, top + d)) for x in cfg.notch_x]
    return cloud, nbhds, driven, cuts


def run_kalthoff_winkler(cfg: KWConfig, log=None) -> KWResult:
    """Semi-implicit dynamic fracture run; see :class:`KWConfig` for units."""
    timings = {}
    t0 = time.perf_counter()
    cloud, nbhds, driven, cuts = kw_geometry(cfg)
    spec = KernelSpec(cfg.delta, cfg.s)
    space = build_basis(cfg.poly_order, spec, Mode.PERIDYNAMIC)
    weights = generate_all_weights(cloud, nbhds, space, spec, workers=cfg.workers)
    timings["weights"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pts = cloud.points
    bonds = initialize_prenotch(BondStateField.intact(nbhds, len(cloud)), cuts, pts)
    op = assemble_peridynamic(cloud, nbhds, weights, constant_coefficient(cfg.kappa), spec, theta=bonds)
    timings["assembly"] = time.perf_counter() - t0

    layer = cloud.dirichlet
    is_driven = np.isin(layer, driven)

    def u_D(p, t):
        out = np.zeros((len(layer), 2))
        out[is_driven, 1] = -cfg.speed * t
        return out

    def f(p, t):
        return np.zeros((len(p), 2))

    m = cfg.rho / cfg.dt ** 2
    solver = LinearSolver(op, layer, m)
    # u^0 = u^1 = 0; the first solve produces the state at t = 2 dt
    state = TimeIntegratorState(cfg.dt, 1, np.zeros((len(cloud), 2)), np.zeros((len(cloud), 2)))
    interior = cloud.interior
    tip_radius = 2.0 * cfg.delta
    first_crack = None
    broken_per_step = []
    handle = open(cfg.snapshot_path, "w") if cfg.snapshot_path else None
    t_solve = 0.0
    try:
        for k in range(cfg.steps):
            step = state.step
            bonds, n_new = update_bond_states(bonds, state.u_curr, cfg.s0, step, pts)
            broken_per_step.append(n_new)
            ts = time.perf_counter()
            try:
                state = step_peridynamic(state, op, pts, layer, f, u_D, cfg.dt, cfg.rho,
                                         theta=bonds, solver=solver)
            except Exception as exc:
                raise type(exc)(f"step {step}: {exc}") from exc
            t_solve += time.perf_counter() - ts
            grown = damage(bonds, growth_only=True)
            if first_crack is None and np.any(grown > 0.35):
                hit = interior[grown > 0.35]
                first_crack = [(int(i), float(min(math.hypot(*(pts[i] - np.array(tp))) for tp in cfg.tips)))
                               for i in hit]
                first_crack = {"step": state.step, "points": first_crack,
                               "near_tips": all(dist <= tip_radius for _, dist in first_crack)}
            if handle and cfg.snapshot_every and state.step % cfg.snapshot_every == 0:
                write_snapshot(handle, state.step, state.t, pts, state.u_curr,
                               damage(bonds), ids=interior)
            if log and (k + 1) % max(1, cfg.steps // 10) == 0:
                log(f"step {state.step} t={state.t:.4e} broken={int((~bonds.theta).sum())}")
    finally:
        if handle:
            handle.close()
    timings["solve"] = t_solve

    dmg = damage(bonds)
    grown = damage(bonds, growth_only=True)
    # fit the crack cluster grown out of each tip, down to the far edge
    angles = [crack_angle(pts[interior], grown, tip, cfg.notch_depth, link=1.5 * cfg.h,
                          seed_radius=tip_radius) for tip in cfg.tips]
    n_frag = fragments(bonds, interior, len(cloud), min_size=max(10, len(interior) // 100))
    return KWResult(cfg, pts, interior, state.u_curr, bonds, dmg, grown,
                    first_crack or {"step": None, "points": [], "near_tips": False},
                    angles, n_frag, cfl_number(cfg.E, cfg.nu, cfg.rho, cfg.dt, cfg.h),
                    broken_per_step, timings)

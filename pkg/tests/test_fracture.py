import math

import numpy as np
import pytest

from meshfree_nonlocal.fracture import (INITIAL, INTACT, BondStateField, KWConfig, Segment2, bond_stretch,
                                        bond_stretches, crack_angle, damage, fragments, initialize_prenotch,
                                        kw_geometry, run_kalthoff_winkler, segments_intersect,
                                        update_bond_states)
from meshfree_nonlocal.kernel import bulk_modulus_from_young, critical_stretch_value
from meshfree_nonlocal.pointcloud import Neighborhood, Rectangle, build_neighborhoods, build_uniform_grid


def _line_cloud(n=6, h=1.0, delta=1.5):
    """Points on a row with every pair closer than delta bonded."""
    pts = np.column_stack([np.arange(n) * h, np.zeros(n)])
    nbhds = []
    for i in range(n):
        d = np.abs(pts[:, 0] - pts[i, 0])
        nbhds.append(Neighborhood(i, np.flatnonzero((d > 0) & (d <= delta))))
    return pts, nbhds


def test_bond_stretch_examples():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert bond_stretch(np.array([[0.0, 0.0], [0.2, 0.0]]), 0, 1, pts) == pytest.approx(0.1)
    assert bond_stretch(np.array([[0.0, 0.0], [-0.5, 0.0]]), 0, 1, pts) == pytest.approx(-0.25)
    # a rotation of the bond does not stretch it
    rot = np.array([[0.0, 0.0], [2 * math.cos(0.3) - 2, 2 * math.sin(0.3)]])
    assert bond_stretch(rot, 0, 1, pts) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        bond_stretch(np.zeros((2, 2)), 0, 0, pts)


def test_vectorized_stretch_matches_scalar():
    rng = np.random.default_rng(0)
    pts = rng.random((10, 2))
    u = 0.01 * rng.normal(size=(10, 2))
    row, col = np.array([0, 1, 2, 3]), np.array([4, 5, 6, 7])
    s = bond_stretches(u, row, col, pts)
    assert np.allclose(s, [bond_stretch(u, i, j, pts) for i, j in zip(row, col)], rtol=1e-12)


def test_reverse_map_and_symmetric_breaking():
    pts, nb = _line_cloud()
    th = BondStateField.intact(nb)
    r = th.reverse
    assert np.all(r >= 0)
    assert np.array_equal(th.row[r], th.col) and np.array_equal(th.col[r], th.row)
    th2 = th.copy()
    assert th2.break_bonds(np.arange(len(th)) == 0, 4) == 2
    assert not th2.theta[0] and not th2.theta[r[0]]
    assert th2.broken_at[0] == 4 and th.theta.all()


def test_damage_fraction():
    nb = [Neighborhood(0, np.arange(1, 13))]
    th = BondStateField.intact(nb, n_points=13)
    th.break_bonds(np.isin(np.arange(12), [0, 5, 9]), 1)
    assert damage(th)[0] == pytest.approx(0.25)
    assert damage(th, growth_only=True)[0] == pytest.approx(0.25)
    th.break_bonds(np.arange(12) == 2, INITIAL)
    assert damage(th)[0] == pytest.approx(4 / 12)
    assert damage(th, growth_only=True)[0] == pytest.approx(0.25)


def test_segment_intersection():
    seg = Segment2((1.0, -1.0), (1.0, 1.0))
    p = np.array([[0.0, 0.0], [0.0, 2.0], [0.0, 0.0], [1.0, 0.0], [2.0, 1.0]])
    q = np.array([[2.0, 0.0], [2.0, 2.0], [0.5, 0.0], [2.0, 0.0], [1.0, 3.0]])
    hits = segments_intersect(p, q, seg)
    # crossing, passing above, stopping short, touching the segment, touching its end extension
    assert hits.tolist() == [True, False, False, True, False]
    collinear = segments_intersect(np.array([[1.0, 0.5], [1.0, 2.0]]), np.array([[1.0, 3.0], [1.0, 3.0]]), seg)
    assert collinear.tolist() == [True, False]
    with pytest.raises(ValueError):
        Segment2((0.0, 0.0), (0.0, 0.0))


def test_prenotch_cuts_crossing_bonds_only():
    pts, nb = _line_cloud()
    th = initialize_prenotch(BondStateField.intact(nb), [Segment2((2.5, -1), (2.5, 1))], pts)
    cut = ~th.theta
    crosses = (pts[th.row, 0] - 2.5) * (pts[th.col, 0] - 2.5) < 0
    assert np.array_equal(cut, crosses)
    assert np.all(th.broken_at[cut] == INITIAL) and np.all(th.broken_at[~cut] == INTACT)
    assert fragments(th, np.arange(6), 6) == 2


def test_update_breaks_overstretched_bonds_and_is_idempotent():
    pts, nb = _line_cloud()
    th = BondStateField.intact(nb)
    u = np.zeros((6, 2))
    u[3:, 0] = 0.5
    th1, n1 = update_bond_states(th, u, 0.3, 7, pts)
    s = bond_stretches(u, th.row, th.col, pts)
    assert np.array_equal(~th1.theta, s > 0.3)
    assert n1 == int(np.count_nonzero(s > 0.3))
    assert np.all(th1.broken_at[~th1.theta] == 7)
    th2, n2 = update_bond_states(th1, u, 0.3, 8, pts)
    assert n2 == 0 and np.array_equal(th2.broken_at, th1.broken_at)
    # bonds never heal once the load is removed
    th3, _ = update_bond_states(th2, np.zeros((6, 2)), 0.3, 9, pts)
    assert np.array_equal(th3.theta, th1.theta)


def test_threshold_forms_agree():
    pts, nb = _line_cloud()
    th = BondStateField.intact(nb)
    u = np.zeros((6, 2))
    u[:, 0] = 0.2 * pts[:, 0] ** 2
    a, _ = update_bond_states(th, u, 0.5, 1, pts)
    b, _ = update_bond_states(th, u, np.full(len(th), 0.5), 1, pts)
    c, _ = update_bond_states(th, u, lambda xi, xj: np.full(len(xi), 0.5), 1, pts)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.theta, c.theta)


def test_fragments_ignores_tiny_pieces():
    pts, nb = _line_cloud(n=10)
    th = BondStateField.intact(nb)
    cut = initialize_prenotch(th, [Segment2((1.5, -1), (1.5, 1))], pts)
    assert fragments(cut, np.arange(10), 10) == 2
    assert fragments(cut, np.arange(10), 10, min_size=3) == 1


def test_critical_stretch_from_fracture_energy():
    kappa = bulk_modulus_from_young(1910.0)
    G = 3 * kappa * 0.0099 ** 2 / math.pi
    assert critical_stretch_value(kappa, G, 0.25) == pytest.approx(0.0099 / math.sqrt(0.25), rel=1e-12)
    cfg = KWConfig()
    assert cfg.s0 == pytest.approx(0.0099 / math.sqrt(cfg.delta), rel=1e-12)


def test_crack_angle_on_synthetic_line():
    tip = (7.5, 5.0)
    t = np.linspace(0, 4, 40)
    ang = math.radians(65)
    line = np.column_stack([tip[0] + t * math.sin(ang), tip[1] - t * math.cos(ang)])
    noise = np.random.default_rng(2).random((200, 2)) * [20, 10]
    pts = np.vstack([line, noise])
    dmg = np.concatenate([np.ones(40), np.zeros(200)])
    assert crack_angle(pts, dmg, tip, 5.0) == pytest.approx(65.0, abs=1e-6)
    assert math.isnan(crack_angle(pts, np.zeros(240), tip, 5.0))
    # an unrelated damaged patch far from the tip is dropped by the cluster filter
    patch = np.array([[10.0, 1.0], [10.1, 1.0], [10.0, 1.1], [10.1, 1.1]])
    pts2 = np.vstack([pts, patch])
    dmg2 = np.concatenate([dmg, np.ones(4)])
    assert crack_angle(pts2, dmg2, tip, 5.0, link=0.2, seed_radius=0.5) == pytest.approx(65.0, abs=1e-6)


def test_kw_geometry():
    cfg = KWConfig(N=16)
    cloud, nbhds, driven, cuts = kw_geometry(cfg)
    p = cloud.points[driven]
    assert np.all((p[:, 0] > 7.5) & (p[:, 0] < 12.5) & (p[:, 1] > 10))
    assert len(cuts) == 5
    assert cfg.tips == [(7.5, 5.0), (12.5, 5.0)]


@pytest.mark.slow
def test_resting_plate_stays_intact():
    res = run_kalthoff_winkler(KWConfig(N=16, steps=20, speed=0.0))
    assert np.abs(res.u).max() == 0.0
    assert res.growth_damage.max() == 0.0
    assert res.first_crack["step"] is None

import math

import numpy as np
import pytest

from meshfree_nonlocal.errors import QuadratureError
from meshfree_nonlocal.kernel import KernelSpec
from meshfree_nonlocal.pointcloud import (UNIT_SQUARE, Neighborhood, PerturbationSpec, build_neighborhoods,
                                          build_uniform_grid, perturb_grid)
from meshfree_nonlocal.quadrature import (Mode, build_basis, generate_all_weights, min_norm_weights,
                                          moment_integrals, monomial_exponents, relative_residual,
                                          solve_weights, write_weights)

from oracles import dense_kkt_weights, polar_moment


def test_graded_lex_order():
    assert monomial_exponents(2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def test_basis_sizes():
    spec = KernelSpec(0.3, 0.0)
    assert len(build_basis(2, spec)) == 6
    assert len(build_basis(3, KernelSpec(0.3, 1.0), Mode.PERIDYNAMIC)) == 30


def test_basis_admissibility():
    with pytest.raises(ValueError):
        build_basis(0, KernelSpec(0.3, 2.0))
    with pytest.raises(ValueError):
        build_basis(-1, KernelSpec(0.3, 0.0))


def test_divergent_monomials_are_dropped():
    # s = 3: the constant term r^-3 r dr diverges, the linear term r^-2 r dr as well
    space = build_basis(3, KernelSpec(0.3, 3.0))
    assert all(a + b >= 2 for a, b, _, _ in space.basis)


def test_frozen_moment_values():
    # adaptive polar quadrature, delta = 0.5, s = 1
    spec = KernelSpec(0.5, 1.0)
    sp = build_basis(4, spec, Mode.DIFFUSION)
    g = moment_integrals(sp, spec)
    assert g[sp.basis.index((4, 0, 0, 0))] == pytest.approx(0.11250000000000002, rel=1e-12)
    pd = build_basis(4, spec, Mode.PERIDYNAMIC)
    gp = moment_integrals(pd, spec)
    assert gp[pd.basis.index((2, 2, 2, 0))] == pytest.approx(0.01875000000000001, rel=1e-12)


def test_odd_moments_vanish():
    spec = KernelSpec(0.4, 1.0)
    sp = build_basis(5, spec, Mode.PERIDYNAMIC)
    g = moment_integrals(sp, spec)
    for k, (a, b, c, e) in enumerate(sp.basis):
        if (a + c) % 2 or (b + e) % 2:
            assert g[k] == 0.0


def test_moment_vector_is_a_copy():
    spec = KernelSpec(0.4, 0.0)
    sp = build_basis(2, spec)
    g = moment_integrals(sp, spec)
    g[:] = 7
    assert moment_integrals(sp, spec)[0] != 7


@pytest.mark.parametrize("s", [0.0, 1.0])
@pytest.mark.parametrize("mode", [Mode.DIFFUSION, Mode.PERIDYNAMIC])
def test_moments_against_polar_quadrature(s, mode):
    spec = KernelSpec(0.4375, s)
    sp = build_basis(5, spec, mode)
    g = moment_integrals(sp, spec)
    for k, (a, b, c, e) in enumerate(sp.basis):
        ref = polar_moment(a, b, c, e, s, spec.delta, spec.D0, mode)
        assert abs(g[k] - ref) <= 1e-9 * max(abs(ref), 1e-300) or abs(g[k] - ref) < 1e-15


def _centre(cloud):
    return int(np.argmin(np.linalg.norm(cloud.points - 0.5, axis=1)))


def test_constant_kernel_weights_sum_to_ball_area():
    h = 1 / 16
    c = build_uniform_grid(UNIT_SQUARE, h, 3.5 * h)
    spec = KernelSpec(3.5 * h, 0.0)
    nb = [n for n in build_neighborhoods(c) if n.center_index == _centre(c)]
    fam = solve_weights(nb[0].center_index, nb[0], c, build_basis(2, spec), spec)
    assert fam.weights.sum() == pytest.approx(math.pi * spec.delta ** 2, rel=1e-12)


def test_weights_match_dense_saddle_point_and_kkt():
    c = perturb_grid(build_uniform_grid(UNIT_SQUARE, 1 / 12, 3.5 / 12), PerturbationSpec(0.3, 5))
    spec = KernelSpec(c.delta, 1.0)
    sp = build_basis(3, spec, Mode.DIFFUSION)
    nb = build_neighborhoods(c)[40]
    fam = solve_weights(nb.center_index, nb, c, sp, spec)
    z = c.points[nb.neighbor_indices] - c.points[nb.center_index]
    gam = spec(np.hypot(z[:, 0], z[:, 1]))
    B = sp.matrix(z, gam)
    w_ref, lam_ref = dense_kkt_weights(B, 2 * gam, moment_integrals(sp, spec))
    assert np.allclose(fam.weights, w_ref, rtol=1e-9, atol=1e-12 * np.abs(w_ref).max())
    # stationarity: W w = B^T lam
    assert np.allclose(2 * gam * fam.weights, B.T @ fam.multipliers, rtol=1e-8,
                       atol=1e-10 * np.abs(2 * gam * fam.weights).max())
    assert np.allclose(fam.multipliers, lam_ref, rtol=1e-7, atol=1e-9 * np.abs(lam_ref).max())


def test_weights_minimize_energy_among_feasible_points():
    rng = np.random.default_rng(0)
    c = build_uniform_grid(UNIT_SQUARE, 1 / 10, 0.3)
    spec = KernelSpec(0.3, 0.0)
    sp = build_basis(2, spec)
    nb = build_neighborhoods(c)[60]
    fam = solve_weights(nb.center_index, nb, c, sp, spec)
    z = c.points[nb.neighbor_indices] - c.points[nb.center_index]
    gam = spec(np.hypot(z[:, 0], z[:, 1]))
    B = sp.matrix(z, gam)
    null = np.linalg.svd(B)[2][np.linalg.matrix_rank(B):]
    energy = np.sum(gam * fam.weights ** 2)
    for _ in range(20):
        w = fam.weights + null.T @ rng.normal(size=null.shape[0]) * 1e-3
        assert np.sum(gam * w ** 2) >= energy


def test_rank_deficient_constraints_handled():
    # on a symmetric stencil odd moments are dependent; tensor identity removes more in PD mode
    h = 1 / 16
    c = build_uniform_grid(UNIT_SQUARE, h, 3.5 * h)
    spec = KernelSpec(3.5 * h, 1.0)
    sp = build_basis(3, spec, Mode.PERIDYNAMIC)
    nb = [n for n in build_neighborhoods(c) if n.center_index == _centre(c)][0]
    fam = solve_weights(nb.center_index, nb, c, sp, spec)
    assert fam.rank == 18
    assert relative_residual(fam, sp, spec) < 1e-12


def test_underdetermined_neighborhood_raises():
    c = build_uniform_grid(UNIT_SQUARE, 1 / 4, 0.25)
    spec = KernelSpec(0.25, 0.0)
    nb = build_neighborhoods(c)[0]
    with pytest.raises(QuadratureError, match="underdetermined"):
        solve_weights(nb.center_index, nb, c, build_basis(3, spec), spec)


def test_coincident_neighbor_raises():
    c = build_uniform_grid(UNIT_SQUARE, 1 / 8, 3 / 8)
    spec = KernelSpec(3 / 8, 1.0)
    nb = build_neighborhoods(c)[10]
    bad = Neighborhood(nb.center_index, np.append(nb.neighbor_indices, nb.center_index))
    with pytest.raises(QuadratureError):
        solve_weights(bad.center_index, bad, c, build_basis(2, spec), spec)


def test_min_norm_handles_empty_constraints():
    w, lam, k = min_norm_weights(np.zeros((2, 3)), np.ones(3), np.zeros(2))
    assert k == 0 and not w.any()


def test_threaded_generation_is_identical(tmp_path):
    c = perturb_grid(build_uniform_grid(UNIT_SQUARE, 1 / 10, 0.35), PerturbationSpec(0.2, 1))
    spec = KernelSpec(0.35, 1.0)
    sp = build_basis(3, spec, Mode.PERIDYNAMIC)
    nb = build_neighborhoods(c)
    a = generate_all_weights(c, nb, sp, spec)
    b = generate_all_weights(c, nb, sp, spec, workers=3)
    assert all(np.array_equal(x.weights, y.weights) for x, y in zip(a, b))
    write_weights(a[:2], tmp_path / "w.txt")
    first = (tmp_path / "w.txt").read_text().splitlines()[0].split()
    assert int(first[0]) == a[0].center_index and int(first[1]) == len(a[0].weights)

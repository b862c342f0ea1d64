"""Small builders shared by the test modules."""

import numpy as np

from meshfree_nonlocal.kernel import KernelSpec, constant_coefficient
from meshfree_nonlocal.operators import assemble_diffusion, assemble_peridynamic
from meshfree_nonlocal.pointcloud import (UNIT_SQUARE, PerturbationSpec, build_neighborhoods,
                                          build_uniform_grid, perturb_grid)
from meshfree_nonlocal.quadrature import Mode, build_basis, generate_all_weights


def make_operator(kind="diffusion", N=8, ratio=3.0, n=2, s=1.0, perturbation=0.0, seed=0, A=None):
    h = 1.0 / N
    delta = ratio * h
    cloud = build_uniform_grid(UNIT_SQUARE, h, delta)
    if perturbation:
        cloud = perturb_grid(cloud, PerturbationSpec(perturbation, seed))
    spec = KernelSpec(delta, s)
    nb = build_neighborhoods(cloud)
    mode = Mode.DIFFUSION if kind == "diffusion" else Mode.PERIDYNAMIC
    w = generate_all_weights(cloud, nb, build_basis(n, spec, mode), spec)
    coef = constant_coefficient(1.0) if A is None else A
    if kind == "diffusion":
        op = assemble_diffusion(cloud, nb, w, coef, spec)
    else:
        op = assemble_peridynamic(cloud, nb, w, coef, spec)
    return cloud, op


def rigid_field(points, a, b, c):
    """Translation plus infinitesimal rotation."""
    x, y = points[:, 0], points[:, 1]
    return np.column_stack([a - c * y, b + c * x])

"""
Discrete nonlocal diffusion and bond-based peridynamic operators.

Both are stored as flat bond lists: for bond ``b = (i -> j)`` a scalar
coefficient ``coef[b]`` and, for peridynamics, the unit bond direction. Row
``i`` of the diffusion operator acts as ``sum_j coef (u_j - u_i)``; the
peridynamic row uses the rank-one block ``coef * e e^T``. Sign conventions
follow the continuous operators, so constants (rigid translations) are
annihilated and ``-L`` is positive semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .kernel import KernelSpec

PD_CONSTANT_2D = 24.0 / 5.0


class OperatorKind(Enum):
    DIFFUSION = "diffusion"
    PERIDYNAMIC = "peridynamic"


@dataclass
class NonlocalOperator:
    kind: OperatorKind
    n_points: int
    centers: np.ndarray
    offsets: np.ndarray
    row: np.ndarray
    col: np.ndarray
    coef: np.ndarray
    unit: np.ndarray | None = None
    theta: np.ndarray | None = None
    version: int = field(default=0)

    @property
    def n_bonds(self):
        return self.row.size

    @property
    def components(self):
        return 1 if self.kind is OperatorKind.DIFFUSION else 2

    def effective_coef(self):
        if self.theta is None:
            return self.coef
        return np.where(self.theta, self.coef, 0.0)

    def set_bond_mask(self, theta):
        """Mask bonds (``theta[b] = False`` removes bond ``b``); bumps ``version`` on change."""
        theta = np.asarray(theta, dtype=bool)
        if theta.shape != self.coef.shape:
            raise ValueError(f"bond mask has {theta.size} entries, operator has {self.coef.size} bonds")
        if self.theta is None or not np.array_equal(theta, self.theta):
            self.theta = theta.copy()
            self.version += 1

    def apply(self, u):
        return apply(self, u)

    def to_sparse(self):
        """Sparse matrix over all points; boundary-layer rows are empty.

        Peridynamic unknowns are interleaved as ``(u_0x, u_0y, u_1x, ...)``.
        """
        w = self.effective_coef()
        n = self.n_points
        if self.kind is OperatorKind.DIFFUSION:
            rows = np.concatenate([self.row, self.row])
            cols = np.concatenate([self.col, self.row])
            vals = np.concatenate([w, -w])
            return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        e = self.unit
        rows, cols, vals = [], [], []
        for a in range(2):
            for b in range(2):
                blk = w * e[:, a] * e[:, b]
                rows += [2 * self.row + a, 2 * self.row + a]
                cols += [2 * self.col + b, 2 * self.row + b]
                vals += [blk, -blk]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(2 * n, 2 * n))

    def export_coo(self, path):
        """Interior-restricted operator as ``i j value`` lines (dof indices)."""
        A = self.to_sparse().tocoo()
        Path(path).write_text("".join(f"{i} {j} {float(v)!r}\n" for i, j, v in zip(A.row, A.col, A.data)))


def _flatten(nbhds, weights):
    if len(weights) != len(nbhds):
        raise ValueError(f"{len(nbhds)} neighborhoods but {len(weights)} weight families")
    by_center = {fam.center_index: fam for fam in weights}
    rows, cols, ws, sizes = [], [], [], []
    for nb in nbhds:
        fam = by_center.get(nb.center_index)
        if fam is None:
            raise ValueError(f"missing weight family for interior point {nb.center_index}")
        if not np.array_equal(fam.neighbor_indices, nb.neighbor_indices):
            raise ValueError(f"weights of point {nb.center_index} do not match its neighborhood")
        rows.append(np.full(len(nb), nb.center_index))
        cols.append(nb.neighbor_indices)
        ws.append(fam.weights)
        sizes.append(len(nb))
    centers = np.array([nb.center_index for nb in nbhds], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return centers, offsets, np.concatenate(rows), np.concatenate(cols), np.concatenate(ws)


def assemble_diffusion(cloud, nbhds, weights, A, spec: KernelSpec) -> NonlocalOperator:
    """Bond coefficients ``2 A(x_i, x_j) gamma(|x_i - x_j|) w_ij``."""
    centers, offsets, row, col, w = _flatten(nbhds, weights)
    xi, xj = cloud.points[row], cloud.points[col]
    z = xj - xi
    coef = 2.0 * np.asarray(A(xi, xj), dtype=float) * spec(np.hypot(z[:, 0], z[:, 1])) * w
    return NonlocalOperator(OperatorKind.DIFFUSION, len(cloud), centers, offsets, row, col, coef)


def assemble_peridynamic(cloud, nbhds, weights, kappa, spec: KernelSpec, theta=None,
                         c=PD_CONSTANT_2D) -> NonlocalOperator:
    """Bond coefficients ``c kappa gamma w_ij`` with unit bond directions."""
    centers, offsets, row, col, w = _flatten(nbhds, weights)
    xi, xj = cloud.points[row], cloud.points[col]
    z = xj - xi
    r = np.hypot(z[:, 0], z[:, 1])
    coef = c * np.asarray(kappa(xi, xj), dtype=float) * spec(r) * w
    op = NonlocalOperator(OperatorKind.PERIDYNAMIC, len(cloud), centers, offsets, row, col,
                          coef, unit=z / r[:, None])
    if theta is not None:
        op.set_bond_mask(getattr(theta, "theta", theta))
    return op


def apply(op: NonlocalOperator, u):
    """Matrix-free action; rows of boundary-layer points are zero."""
    u = np.asarray(u, dtype=float)
    w = op.effective_coef()
    n = op.n_points
    if op.kind is OperatorKind.DIFFUSION:
        if u.shape != (n,):
            raise ValueError(f"expected scalar field of shape ({n},), got {u.shape}")
        return np.bincount(op.row, weights=w * (u[op.col] - u[op.row]), minlength=n)
    if u.shape != (n, 2):
        raise ValueError(f"expected vector field of shape ({n}, 2), got {u.shape}")
    du = u[op.col] - u[op.row]
    proj = w * np.einsum("ij,ij->i", op.unit, du)
    out = np.empty((n, 2))
    out[:, 0] = np.bincount(op.row, weights=proj * op.unit[:, 0], minlength=n)
    out[:, 1] = np.bincount(op.row, weights=proj * op.unit[:, 1], minlength=n)
    return out

"""
Optimization-based quadrature weights.

For each interior point ``x_i`` the weights ``w_ij`` over its neighbors solve

    min  sum_j w_ij^2 gamma(x_i, x_j)   s.t.  sum_j q(x_j - x_i) w_ij = int_{B_delta} q

for every ``q = p * gamma * C`` with ``p`` a polynomial of degree <= n. The
closed form ``w = W^-1 B^T (B W^-1 B^T)^-1 g`` is evaluated through a
column-pivoted QR of the scaled constraint matrix so redundant constraints
(odd moments on symmetric stencils, tensor identities) drop out cleanly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import QuadratureError
from .kernel import KernelSpec, kernel_scaling_constant

PIVOT_TOL = 1e-12
RESIDUAL_TOL = 1e-10


class Mode(Enum):
    DIFFUSION = "diffusion"
    PERIDYNAMIC = "peridynamic"


# independent entries of (z x z)/|z|^2 as exponent pairs of z1, z2
_TENSOR_ENTRIES = {
    Mode.DIFFUSION: ((0, 0),),
    Mode.PERIDYNAMIC: ((2, 0), (1, 1), (0, 2)),
}


def monomial_exponents(n):
    """Graded lexicographic exponents: 1, z1, z2, z1^2, z1 z2, z2^2, ..."""
    return tuple((k - b, b) for k in range(n + 1) for b in range(k + 1))


@dataclass(frozen=True)
class ReproducingSpace:
    """Constraint functions ``z1^a z2^b gamma(|z|) [z1^c z2^e / |z|^2]``.

    ``basis`` holds ``(a, b, c, e)`` tuples in canonical order.
    """

    n: int
    s: float
    mode: Mode
    basis: tuple
    d: int = 2

    def __len__(self):
        return len(self.basis)

    @property
    def exponents(self):
        return np.array(self.basis, dtype=np.int64).reshape(-1, 4)

    def matrix(self, z, gamma):
        """Constraint matrix ``B[alpha, j] = q_alpha(z_j)``."""
        z = np.asarray(z, dtype=float)
        ex, ey = _power_index(self.basis)
        # power tables by repeated multiplication, then gathered per row
        top = max(int(ex.max()), int(ey.max())) + 1
        px = np.empty((top, z.shape[0]))
        py = np.empty((top, z.shape[0]))
        px[0] = py[0] = 1.0
        for k in range(1, top):
            px[k] = px[k - 1] * z[:, 0]
            py[k] = py[k - 1] * z[:, 1]
        B = px[ex] * py[ey] * gamma[None, :]
        if self.mode is Mode.PERIDYNAMIC:
            B = B / np.einsum("ij,ij->i", z, z)[None, :]
        return B


@lru_cache(maxsize=64)
def _power_index(basis):
    e = np.array(basis, dtype=np.int64).reshape(-1, 4)
    return e[:, 0] + e[:, 2], e[:, 1] + e[:, 3]


def _radial_power(a, b, s):
    # q_alpha = r^m * angular(theta); the tensor factor is degree 0 in r
    return a + b - s


def build_basis(n: int, spec: KernelSpec, mode: Mode = Mode.DIFFUSION) -> ReproducingSpace:
    """Enumerate the reproducing space of order ``n`` for the kernel in ``spec``.

    Monomials whose ball integral diverges against the kernel are left out,
    which only happens for ``s >= 2``.
    """
    if n < 0 or int(n) != n:
        raise ValueError(f"polynomial order must be a nonnegative integer, got {n}")
    d = spec.d
    if not n > d + spec.s - 3:
        raise ValueError(f"order n={n} is inadmissible for s={spec.s}: need n > {d + spec.s - 3:g}")
    entries = _TENSOR_ENTRIES[Mode(mode)]
    basis = []
    for a, b in monomial_exponents(int(n)):
        # integrability of r^m over B_delta in 2D: m + 2 > 0
        if _radial_power(a, b, spec.s) + d <= 0:
            continue
        for c, e in entries:
            basis.append((a, b, c, e))
    if not basis:
        raise ValueError("reproducing space is empty")
    return ReproducingSpace(int(n), float(spec.s), Mode(mode), tuple(basis), d)


def angular_moment(p, q):
    """``int_0^{2 pi} cos^p(t) sin^q(t) dt``."""
    if p % 2 or q % 2:
        return 0.0
    return 2.0 * math.exp(math.lgamma((p + 1) / 2) + math.lgamma((q + 1) / 2)
                          - math.lgamma((p + q) / 2 + 1))


def moment_integrals(space: ReproducingSpace, spec: KernelSpec) -> np.ndarray:
    """Exact ball integrals ``g_alpha = int_{B_delta} q_alpha(z) dz``."""
    return _moments(space, spec.delta, spec.s, spec.d).copy()


@lru_cache(maxsize=64)
def _moments(space, delta, s, d):
    scale = kernel_scaling_constant(s, d) / delta ** (d + 2 - s)
    g = np.empty(len(space.basis))
    for k, (a, b, c, e) in enumerate(space.basis):
        m = _radial_power(a, b, s)
        g[k] = scale * delta ** (m + 2) / (m + 2) * angular_moment(a + c, b + e)
    g.setflags(write=False)
    return g


@dataclass
class WeightFamily:
    center_index: int
    neighbor_indices: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    multipliers: np.ndarray
    rank: int

    @property
    def residual_max(self):
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0


def min_norm_weights(B, W, g, pivot_tol=PIVOT_TOL):
    """Solve ``min w^T W w / 2  s.t.  B w = g`` for diagonal ``W`` given as a vector.

    Returns ``(w, lam, rank)`` with ``w = W^-1 B^T lam``; multipliers of
    constraints dropped as redundant are zero.
    """
    Dh = 1.0 / np.sqrt(W)
    A = B * Dh[None, :]
    norms = np.linalg.norm(A, axis=1)
    norms[norms == 0] = 1.0
    S = 1.0 / norms
    A = A * S[:, None]
    gs = g * S
    Q, R, P = qr(A.T, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return np.zeros(B.shape[1]), np.zeros(B.shape[0]), 0
    k = int(np.count_nonzero(diag > pivot_tol * diag[0]))
    Rk = R[:k, :k]
    t = solve_triangular(Rk, gs[P[:k]], trans="T", check_finite=False)
    y = Q[:, :k] @ t
    mu = solve_triangular(Rk, t, check_finite=False)
    lam = np.zeros(B.shape[0])
    lam[P[:k]] = S[P[:k]] * mu
    return Dh * y, lam, k


def solve_weights(center, nbhd, cloud, space: ReproducingSpace, spec: KernelSpec,
                  tol=RESIDUAL_TOL) -> WeightFamily:
    """Quadrature weights for one center over its neighborhood."""
    nbrs = np.asarray(nbhd.neighbor_indices)
    z = cloud.points[nbrs] - cloud.points[center]
    r = np.hypot(z[:, 0], z[:, 1])
    if np.any(r < 1e-14 * spec.delta):
        raise QuadratureError(f"point {center}: neighbor at (numerically) zero distance", center)
    gamma = spec(r)
    B = space.matrix(z, gamma)
    g = _moments(space, spec.delta, spec.s, spec.d)
    w, lam, rank = min_norm_weights(B, 2.0 * gamma, g)
    res = B @ w - g
    if np.max(np.abs(res)) > tol * (1.0 + np.max(np.abs(g))):
        if len(nbrs) < len(space):
            raise QuadratureError(
                f"point {center}: underdetermined, {len(nbrs)} neighbors for "
                f"{len(space)} constraints (numerical rank {rank})", center)
        raise QuadratureError(
            f"point {center}: constraints not reproducible "
            f"(max residual {np.max(np.abs(res)):.3e}, rank {rank})", center)
    return WeightFamily(int(center), nbrs, w, res, lam, rank)


def generate_all_weights(cloud, nbhds, space, spec, workers=None) -> list[WeightFamily]:
    """One :class:`WeightFamily` per neighborhood, in neighborhood order.

    Centers are independent; ``workers > 1`` spreads them over a thread pool
    without changing the result.
    """

    def one(nb):
        return solve_weights(nb.center_index, nb, cloud, space, spec)

    if workers and workers > 1 and len(nbhds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, nbhds, chunksize=max(1, len(nbhds) // (4 * workers))))
    return [one(nb) for nb in nbhds]


def relative_residual(family, space, spec):
    g = _moments(space, spec.delta, spec.s, spec.d)
    return family.residual_max / (1.0 + float(np.max(np.abs(g))))


def write_weights(families, path):
    """Debug dump: ``center_id M_i residual_max`` then ``neighbor_id weight`` lines."""
    out = []
    for fam in families:
        out.append(f"{fam.center_index} {len(fam.weights)} {fam.residual_max:.6e}")
        out.extend(f"{j} {float(w)!r}" for j, w in zip(fam.neighbor_indices, fam.weights))
    Path(path).write_text("\n".join(out) + "\n")

"""
Power-law kernels and two-point material coefficients.

``gamma_delta(r) = D0 / (delta**(d+2-s) * r**s)`` on ``0 < r <= delta``, with
``D0`` fixed by the second-moment normalization ``int_{B_1} gamma_1 |z|^2 = d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pointcloud import RADIUS_TOL

# unit-sphere surface measure |S^{d-1}|
_SPHERE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def kernel_scaling_constant(s: float, d: int = 2) -> float:
    """Return ``D0`` such that ``int_{B_1} D0 |z|^(2-s) dz = d``."""
    if d not in _SPHERE:
        raise ValueError(f"unsupported dimension d={d}")
    if not (0 <= s < d + 2):
        raise ValueError(f"singularity order must satisfy 0 <= s < {d + 2}, got {s}")
    # int_0^1 r^(2-s) r^(d-1) dr = 1/(d+2-s)
    return d * (d + 2 - s) / _SPHERE[d]


@dataclass(frozen=True)
class KernelSpec:
    delta: float
    s: float = 0.0
    d: int = 2

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"horizon must be positive, got {self.delta}")
        kernel_scaling_constant(self.s, self.d)

    @property
    def D0(self):
        return kernel_scaling_constant(self.s, self.d)

    def __call__(self, r):
        """Kernel value at distance(s) ``r``; zero outside the horizon."""
        r = np.asarray(r, dtype=float)
        scale = self.D0 / self.delta ** (self.d + 2 - self.s)
        if self.s == 0:
            val = np.full(r.shape, scale)
        else:
            if np.any(r == 0):
                raise ValueError("singular kernel evaluated at zero distance")
            val = scale / r ** self.s
        val = np.where(r <= self.delta * (1 + RADIUS_TOL), val, 0.0)
        return val if val.ndim else float(val)


def kernel_eval(spec: KernelSpec, xi, xj):
    """``gamma_delta(|xj - xi|)`` for point pairs (broadcasts over leading axes)."""
    diff = np.asarray(xj, dtype=float) - np.asarray(xi, dtype=float)
    return spec(np.hypot(diff[..., 0], diff[..., 1]))


def _values(field, pts):
    pts = np.asarray(pts, dtype=float)
    val = np.asarray(field(pts[..., 0], pts[..., 1]), dtype=float)
    return np.broadcast_to(val, pts.shape[:-1])


def harmonic_mean_coefficient(local_field):
    """Two-point coefficient ``2 (1/a(x) + 1/a(y))^-1`` from a local field.

    ``local_field`` is called as ``a(x, y)`` with coordinate arrays.
    """

    def coefficient(xi, xj):
        a = _values(local_field, xi)
        b = _values(local_field, xj)
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("local coefficient must be strictly positive")
        return 2.0 / (1.0 / a + 1.0 / b)

    return coefficient


def arithmetic_mean_energy(local_energy):
    """Pairwise fracture energy ``(G(x) + G(y)) / 2``."""

    def energy(xi, xj):
        return 0.5 * (_values(local_energy, xi) + _values(local_energy, xj))

    return energy


def constant_coefficient(value):
    def coefficient(xi, xj):
        shape = np.broadcast_shapes(np.shape(xi)[:-1], np.shape(xj)[:-1])
        return np.full(shape, float(value))

    return coefficient


def bulk_modulus_from_young(E, nu=0.25):
    """``kappa = E / (3 (1 - 2 nu))``; bond-based PD in 2D fixes ``nu = 1/4``."""
    return E / (3.0 * (1.0 - 2.0 * nu))


def critical_stretch_value(kappa, G, delta, d=2):
    kappa = np.asarray(kappa, dtype=float)
    G = np.asarray(G, dtype=float)
    if np.any(kappa <= 0) or np.any(G <= 0) or not delta > 0:
        raise ValueError("critical stretch needs positive kappa, G and delta")
    if d == 2:
        s0 = np.sqrt(math.pi * G / (3.0 * kappa * delta))
    elif d == 3:
        s0 = np.sqrt(5.0 * G / (9.0 * kappa * delta))
    else:
        raise ValueError(f"unsupported dimension d={d}")
    return s0 if s0.ndim else float(s0)


def critical_stretch(kappa, G, delta, xi, xj, d=2):
    """Critical bond stretch ``s0(xi, xj)`` from two-point modulus and energy evaluators."""
    return critical_stretch_value(kappa(xi, xj), G(xi, xj), delta, d)

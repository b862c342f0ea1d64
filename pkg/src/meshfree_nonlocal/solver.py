"""
Constrained linear solves and implicit time stepping.

Dirichlet points keep their rows in the system as identity rows with the
prescribed value on the right-hand side, so point numbering never changes
when bonds are masked. Interior rows read ``m u_i - (L u)_i = b_i`` where
``m`` is ``rho/dt`` (diffusion), ``rho/dt^2`` (peridynamics) or 0 (static).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SingularSystemError, SolveError
from .operators import NonlocalOperator

RESIDUAL_GATE = 1e-8


@dataclass
class ConstrainedSystem:
    operator: NonlocalOperator
    dirichlet_idx: np.ndarray
    dirichlet_values: np.ndarray
    rhs: np.ndarray
    mass_scaling: float = 0.0


@dataclass
class TimeIntegratorState:
    t: float
    step: int
    u_curr: np.ndarray
    u_prev: np.ndarray | None = None


def _dofs(idx, comps):
    idx = np.asarray(idx, dtype=np.int64)
    if comps == 1:
        return idx
    return (comps * idx[:, None] + np.arange(comps)[None, :]).ravel()


def system_matrix(op: NonlocalOperator, dirichlet_idx, mass_scaling=0.0):
    """``mass * I - L`` on interior rows, identity rows on constrained points."""
    comps = op.components
    n = op.n_points * comps
    covered = np.zeros(op.n_points, dtype=bool)
    covered[op.centers] = True
    covered[np.asarray(dirichlet_idx, dtype=np.int64)] = True
    if not covered.all():
        missing = np.flatnonzero(~covered)[:5]
        raise ValueError(f"points without an equation or constraint, e.g. {missing.tolist()}")
    K = -op.to_sparse().tocsr()
    interior = np.zeros(n)
    interior[_dofs(op.centers, comps)] = 1.0
    fixed = np.zeros(n)
    fixed[_dofs(dirichlet_idx, comps)] = 1.0
    # zero constrained rows, then put ones on their diagonal
    K = sp.diags(1.0 - fixed) @ K
    K = K + sp.diags(mass_scaling * interior + fixed)
    return K.tocsc()


class LinearSolver:
    """Factorization cache for ``mass * I - L`` with constraint rows.

    The factorization is reused until the operator's bond mask changes.
    ``backend`` is ``"direct"`` (sparse LU), ``"dense"`` (LAPACK on the full
    matrix) or a callable ``(matrix, rhs) -> solution``.
    """

    def __init__(self, op: NonlocalOperator, dirichlet_idx, mass_scaling=0.0, backend="direct"):
        self.op = op
        self.dirichlet_idx = np.asarray(dirichlet_idx, dtype=np.int64)
        self.mass_scaling = float(mass_scaling)
        self.backend = backend
        self._version = None
        self.factorizations = 0

    def _refresh(self):
        if self._version == self.op.version:
            return
        self.matrix = system_matrix(self.op, self.dirichlet_idx, self.mass_scaling)
        if self.backend == "direct":
            try:
                self._lu = splu(self.matrix)
            except RuntimeError as exc:
                raise SingularSystemError(f"system matrix is singular: {exc}") from exc
        elif self.backend == "dense":
            self._dense = self.matrix.toarray()
        self._version = self.op.version
        self.factorizations += 1

    def solve(self, b):
        self._refresh()
        if self.backend == "direct":
            x = self._lu.solve(b)
        elif self.backend == "dense":
            try:
                x = np.linalg.solve(self._dense, b)
            except np.linalg.LinAlgError as exc:
                raise SingularSystemError(f"system matrix is singular: {exc}") from exc
        else:
            x = self.backend(self.matrix, b)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("linear solve produced non-finite values")
        res = np.max(np.abs(self.matrix @ x - b))
        if res > RESIDUAL_GATE * (1.0 + np.max(np.abs(b))):
            raise SolveError(f"residual {res:.3e} exceeds gate for |b|={np.max(np.abs(b)):.3e}")
        return x


def _assemble_rhs(op, dirichlet_idx, dirichlet_values, interior_rhs):
    comps = op.components
    shape = (op.n_points,) if comps == 1 else (op.n_points, comps)
    b = np.zeros(shape)
    b[op.centers] = np.asarray(interior_rhs)[op.centers]
    b[dirichlet_idx] = dirichlet_values
    return b.ravel()


def _as_field(x, op):
    return x if op.components == 1 else x.reshape(op.n_points, op.components)


def _enforce_constraints(u, idx, values):
    # identity rows make this exact up to LU round-off; pin the bits
    u[idx] = values
    return u


def solve_system(system: ConstrainedSystem, solver: LinearSolver | None = None, backend="direct"):
    op = system.operator
    if solver is None:
        solver = LinearSolver(op, system.dirichlet_idx, system.mass_scaling, backend)
    b = _assemble_rhs(op, system.dirichlet_idx, system.dirichlet_values, system.rhs)
    u = _as_field(solver.solve(b), op)
    return _enforce_constraints(u, system.dirichlet_idx, system.dirichlet_values)


def solve_static(system: ConstrainedSystem, backend="direct"):
    """Solve ``-(L u)_i = f_i`` on interior points with ``u = u_D`` on the layer."""
    if system.mass_scaling != 0:
        raise ValueError("solve_static expects mass_scaling = 0")
    return solve_system(system, backend=backend)


def _points_fn(fn, pts, t):
    val = fn(pts, t) if callable(fn) else fn
    return np.asarray(val, dtype=float)


def step_diffusion(state: TimeIntegratorState, op: NonlocalOperator, points, dirichlet_idx,
                   f, u_D, dt, rho, solver: LinearSolver | None = None) -> TimeIntegratorState:
    """One backward-Euler step of ``rho du/dt - L u = f``.

    ``f(points, t)`` and ``u_D(points, t)`` are evaluated at ``t + dt``.
    """
    if not (dt > 0 and rho > 0):
        raise ValueError("dt and rho must be positive")
    m = rho / dt
    t1 = state.t + dt
    if solver is None:
        solver = LinearSolver(op, dirichlet_idx, m)
    elif not math.isclose(solver.mass_scaling, m, rel_tol=1e-14):
        raise ValueError("solver was factorized for a different rho/dt")
    rhs = _points_fn(f, points, t1) + m * state.u_curr
    system = ConstrainedSystem(op, dirichlet_idx, _points_fn(u_D, points[dirichlet_idx], t1), rhs, m)
    u = solve_system(system, solver)
    return TimeIntegratorState(t1, state.step + 1, u, state.u_curr)


def step_peridynamic(state: TimeIntegratorState, op: NonlocalOperator, points, dirichlet_idx,
                     f, u_D, dt, rho, theta=None,
                     solver: LinearSolver | None = None) -> TimeIntegratorState:
    """One step of ``rho/dt^2 (u+ - 2u + u-) - L_theta u+ = f``.

    ``theta`` (a bond mask or a bond-state field) is applied to the operator
    before the solve; pass the states from the previous step for the
    semi-implicit scheme.
    """
    if not (dt > 0 and rho > 0):
        raise ValueError("dt and rho must be positive")
    m = rho / dt ** 2
    t1 = state.t + dt
    if theta is not None:
        op.set_bond_mask(getattr(theta, "theta", theta))
    if solver is None:
        solver = LinearSolver(op, dirichlet_idx, m)
    u_prev = state.u_curr if state.u_prev is None else state.u_prev
    rhs = _points_fn(f, points, t1) + m * (2.0 * state.u_curr - u_prev)
    system = ConstrainedSystem(op, dirichlet_idx, _points_fn(u_D, points[dirichlet_idx], t1), rhs, m)
    u = solve_system(system, solver)
    return TimeIntegratorState(t1, state.step + 1, u, state.u_curr)


def shear_modulus(E, nu):
    return E / (2.0 * (1.0 + nu))


def rayleigh_speed(E, nu, rho):
    """Rayleigh wave speed from the Viktorov fit ``c_s (0.862 + 1.14 nu) / (1 + nu)``."""
    cs = math.sqrt(shear_modulus(E, nu) / rho)
    return cs * (0.862 + 1.14 * nu) / (1.0 + nu)


def cfl_number(E, nu, rho, dt, h):
    """``C_R dt / h``; diagnostic only."""
    return rayleigh_speed(E, nu, rho) * dt / h


def write_snapshot(handle, step, t, points, u, damage=None, ids=None):
    """Append ``step t id x y u [v] [damage]`` rows to an open text handle."""
    ids = np.arange(len(points)) if ids is None else np.asarray(ids)
    u = np.asarray(u)
    cols = [u[ids]] if u.ndim == 1 else [u[ids, 0], u[ids, 1]]
    if damage is not None:
        cols.append(np.asarray(damage))
    for k, i in enumerate(ids):
        vals = " ".join(f"{c[k]:.10e}" for c in cols)
        handle.write(f"{step} {t:.10e} {i} {points[i, 0]:.10e} {points[i, 1]:.10e} {vals}\n")


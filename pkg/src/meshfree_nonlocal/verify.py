"""
Manufactured solutions, error norms and convergence studies.

Every case carries the exact field ``u``, the load ``f`` and the exact
operator action ``L[u] = -f`` (nonlocal for the first example, the local
limit for the others). Loads were re-derived symbolically and checked against
brute-force ball quadrature; see the tests for the oracles.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import KernelSpec, harmonic_mean_coefficient
from .operators import OperatorKind, apply, assemble_diffusion, assemble_peridynamic
from .pointcloud import (UNIT_SQUARE, PerturbationSpec, build_neighborhoods, build_uniform_grid,
                         perturb_grid)
from .quadrature import Mode, build_basis, generate_all_weights
from .solver import ConstrainedSystem, solve_static

NU = 0.25
C1 = 1.0 / (2.0 * (1.0 + NU))


@dataclass(frozen=True)
class ManufacturedCase:
    """Static verification problem on the unit square.

    ``solution``, ``load`` and ``action`` take ``(points, delta)``;
    ``coefficient`` is the two-point diffusivity or modulus.
    """

    name: str
    kind: OperatorKind
    s: float
    coefficient: object
    solution: object
    load: object
    default_order: int
    expected: dict = field(default_factory=dict)

    def action(self, points, delta):
        return -self.load(points, delta)

    def boundary(self, points, delta):
        return self.solution(points, delta)


def _xy(points):
    p = np.asarray(points, dtype=float)
    return p[:, 0], p[:, 1]


def case_example1() -> ManufacturedCase:
    """Nonlocal consistency: ``A = 5 + x1 + y1``, ``u = x^6 + y^6``, constant kernel."""

    def solution(points, delta):
        x, y = _xy(points)
        return x ** 6 + y ** 6

    def load(points, delta):
        # -2 gamma int_B A (u(y) - u(x)) dy with gamma = 4/(pi delta^4)
        x, y = _xy(points)
        d2 = delta ** 2
        return -8.0 * (d2 * d2 * (25.0 / 32.0) * (1.0 + x)
                       + d2 * (25.0 * x ** 3 / 4 + 75.0 * x ** 2 / 8 + 15.0 * x * y ** 2 / 4
                               + 75.0 * y ** 2 / 8)
                       + 9.0 * x ** 5 + 75.0 * x ** 4 / 4 + 15.0 * x * y ** 4 / 2 + 75.0 * y ** 4 / 4)

    def A(xi, xj):
        return 5.0 + xi[..., 0] + xj[..., 0]

    return ManufacturedCase("example1", OperatorKind.DIFFUSION, 0.0, A, solution, load, 2,
                            {"fixed_delta": 1.0, "fixed_ratio_trunc": "n-1",
                             "fixed_ratio_sol": "n (even), n-1 (odd)"})


def _a2(x, y):
    return 2.0 + np.sin(x) * np.sin(y)


def case_example2() -> ManufacturedCase:
    """Local limit of heterogeneous diffusion: ``a = 2 + sin x sin y``, ``u0 = cos x cos y``."""

    def solution(points, delta):
        x, y = _xy(points)
        return np.cos(x) * np.cos(y)

    def load(points, delta):
        x, y = _xy(points)
        return 4.0 * np.cos(x) * np.cos(y) + 4.0 * np.sin(x) * np.cos(x) * np.sin(y) * np.cos(y)

    case = ManufacturedCase("example2", OperatorKind.DIFFUSION, 0.0, harmonic_mean_coefficient(_a2),
                            solution, load, 2, {"fixed_ratio": 2.0})
    return case


def local_navier_action(points):
    """``L_P[u0]`` for the third example, from the closed-form Navier operator."""
    x, y = _xy(points)
    fx = C1 * (-12.0 * np.sin(x) * np.sin(y) + 4.0 * np.cos(2 * x) * np.sin(y) ** 2
               + 2.0 * np.cos(2 * y) * np.sin(x) ** 2)
    fy = C1 * (12.0 * np.cos(x) * np.cos(y) + 3.0 * np.sin(2 * x) * np.sin(2 * y))
    return np.column_stack([fx, fy])


def case_example3() -> ManufacturedCase:
    """Bond-based peridynamics with ``E = 2 + sin x sin y`` and ``u0 = (sin x sin y, -cos x cos y)``."""

    def solution(points, delta):
        x, y = _xy(points)
        return np.column_stack([np.sin(x) * np.sin(y), -np.cos(x) * np.cos(y)])

    def load(points, delta):
        return -local_navier_action(points)

    # kappa = E / (3 (1 - 2 nu)) pointwise, then the harmonic mean
    kappa = harmonic_mean_coefficient(lambda x, y: _a2(x, y) / (3.0 * (1.0 - 2.0 * NU)))
    return ManufacturedCase("example3", OperatorKind.PERIDYNAMIC, 1.0, kappa, solution, load, 3,
                            {"uniform": 2.0})


CASES = {0: case_example1, 1: case_example2, 2: case_example3}


@dataclass(frozen=True)
class DynamicDiffusionCase:
    """``u = exp(-t) cos x cos y`` with the second example's diffusivity and ``rho = 1``."""

    rho: float = 1.0

    def solution(self, points, t):
        x, y = _xy(points)
        return math.exp(-t) * np.cos(x) * np.cos(y)

    def load(self, points, t):
        x, y = _xy(points)
        return math.exp(-t) * (case_example2().load(points, 0.0) - np.cos(x) * np.cos(y))

    @property
    def coefficient(self):
        return harmonic_mean_coefficient(_a2)


def l2_norm(values):
    """Root mean square of per-point values (vector values use their length)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("norm of an empty set")
    if v.ndim == 2:
        v = np.hypot(v[:, 0], v[:, 1])
    # scale first so tiny or huge entries do not under/overflow when squared
    m = np.max(np.abs(v))
    if m == 0 or not np.isfinite(m):
        return float(m)
    return float(m * np.sqrt(np.mean((v / m) ** 2)))


def linf_norm(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("norm of an empty set")
    if v.ndim == 2:
        v = np.hypot(v[:, 0], v[:, 1])
    return float(np.max(np.abs(v)))


def truncation_error(op, op_exact, field, cloud):
    """``|L[u](x_i) - (L_h u)_i|`` on interior points (vector fields: Euclidean length).

    ``op_exact`` and ``field`` are evaluated on the cloud points.
    """
    pts = cloud.points
    u = field(pts) if callable(field) else np.asarray(field)
    exact = op_exact(pts) if callable(op_exact) else np.asarray(op_exact)
    diff = (exact - apply(op, u))[cloud.interior]
    if diff.ndim == 2:
        return np.hypot(diff[:, 0], diff[:, 1])
    return np.abs(diff)


@dataclass
class CaseResult:
    h: float
    delta: float
    n: int
    seed: int
    l2_sol: float
    linf_sol: float
    l2_trunc: float
    linf_trunc: float
    timings: dict
    u: np.ndarray | None = None
    cloud: object = None


def build_case_cloud(h, delta, perturbation=None, seed=-1):
    # boundary nodes belong to the layer: the domain is open
    cloud = build_uniform_grid(UNIT_SQUARE, h, delta, closed=False)
    if perturbation:
        cloud = perturb_grid(cloud, PerturbationSpec(perturbation, seed))
    return cloud


def solve_case(case: ManufacturedCase, h, delta, n=None, perturbation=None, seed=-1,
               workers=None, keep_fields=False) -> CaseResult:
    """Weights, assembly, static solve and both error measures for one resolution."""
    n = case.default_order if n is None else n
    timings = {}
    t0 = time.perf_counter()
    cloud = build_case_cloud(h, delta, perturbation, seed)
    nbhds = build_neighborhoods(cloud)
    spec = KernelSpec(delta, case.s)
    pd = case.kind is OperatorKind.PERIDYNAMIC
    space = build_basis(n, spec, Mode.PERIDYNAMIC if pd else Mode.DIFFUSION)
    weights = generate_all_weights(cloud, nbhds, space, spec, workers=workers)
    timings["weights"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if pd:
        op = assemble_peridynamic(cloud, nbhds, weights, case.coefficient, spec)
    else:
        op = assemble_diffusion(cloud, nbhds, weights, case.coefficient, spec)
    timings["assembly"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pts = cloud.points
    exact = case.solution(pts, delta)
    layer = cloud.dirichlet
    system = ConstrainedSystem(op, layer, case.boundary(pts[layer], delta), case.load(pts, delta))
    u = solve_static(system)
    timings["solve"] = time.perf_counter() - t0

    interior = cloud.interior
    err = (u - exact)[interior]
    trunc = truncation_error(op, case.action(pts, delta), exact, cloud)
    return CaseResult(h, delta, n, seed, l2_norm(err), linf_norm(err), l2_norm(trunc),
                      linf_norm(trunc), timings, u if keep_fields else None,
                      cloud if keep_fields else None)


@dataclass(frozen=True)
class FixedRatio:
    """delta-convergence: ``delta = ratio * h`` for ``h = 1/N``."""

    ratio: float
    Ns: tuple

    def resolutions(self):
        return [(1.0 / N, self.ratio / N) for N in self.Ns]


@dataclass(frozen=True)
class FixedDelta:
    delta: float
    Ns: tuple

    def resolutions(self):
        return [(1.0 / N, self.delta) for N in self.Ns]


COLUMNS = ("l2_sol", "linf_sol", "l2_trunc", "linf_trunc")


def fit_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("a slope needs at least three rows")
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class ConvergenceReport:
    case: str
    regime: str
    rows: list = field(default_factory=list)

    def add(self, row: CaseResult):
        self.rows.append(row)

    def resolutions(self):
        seen = []
        for r in self.rows:
            if (r.h, r.delta) not in seen:
                seen.append((r.h, r.delta))
        return seen

    def summary(self):
        """Per resolution: ``(h, delta, mean dict, standard-error dict, count)``."""
        out = []
        for h, d in self.resolutions():
            group = [r for r in self.rows if (r.h, r.delta) == (h, d)]
            vals = {c: np.array([getattr(r, c) for r in group]) for c in COLUMNS}
            mean = {c: float(v.mean()) for c, v in vals.items()}
            if len(group) > 1:
                se = {c: float(v.std(ddof=1) / math.sqrt(len(group))) for c, v in vals.items()}
            else:
                se = {c: 0.0 for c in COLUMNS}
            out.append((h, d, mean, se, len(group)))
        return out

    def slopes(self, against=None):
        """Fitted log-log slopes of the mean errors vs ``h`` (fixed delta) or ``delta``."""
        summ = self.summary()
        hs = [s[0] for s in summ]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("resolutions must have strictly decreasing h")
        against = against or ("h" if self.regime == "fixed_delta" else "delta")
        x = [s[0] if against == "h" else s[1] for s in summ]
        return {c: fit_slope(x, [s[2][c] for s in summ]) for c in COLUMNS}

    def to_csv(self):
        buf = io.StringIO()
        buf.write("h,delta,n,seed," + ",".join(COLUMNS) + "\n")
        for r in self.rows:
            buf.write(f"{r.h!r},{r.delta!r},{r.n},{r.seed},"
                      + ",".join(repr(getattr(r, c)) for c in COLUMNS) + "\n")
        sl = self.slopes()
        buf.write("# slopes " + " ".join(f"{c}={sl[c]:.4f}" for c in COLUMNS) + "\n")
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())


def run_convergence_study(case: ManufacturedCase, regime, n=None, perturbation=None,
                          seeds=(0,), workers=None, log=None) -> ConvergenceReport:
    """Solve ``case`` at every resolution of ``regime`` (and every seed when perturbed)."""
    res = regime.resolutions()
    if len(res) < 3:
        raise ValueError("a convergence study needs at least three resolutions")
    name = "fixed_delta" if isinstance(regime, FixedDelta) else "fixed_ratio"
    report = ConvergenceReport(case.name, name)
    for h, delta in res:
        for seed in (seeds if perturbation else (-1,)):
            try:
                row = solve_case(case, h, delta, n, perturbation, seed, workers)
            except Exception as exc:
                raise type(exc)(f"{case.name} at h={h:g}, delta={delta:g}, seed={seed}: {exc}") from exc
            report.add(row)
            if log:
                log(f"h={h:g} delta={delta:g} seed={seed} l2={row.l2_sol:.3e} trunc={row.l2_trunc:.3e}")
    return report

"""
Command-line front end.

    meshfree-nonlocal nldiff      N dhratio n case
    meshfree-nonlocal nldiff-dyn  N dhratio n dt steps
    meshfree-nonlocal pd-static   N dhratio n r
    meshfree-nonlocal kw          N dhratio n dt steps
    meshfree-nonlocal study       case regime value n Nlist

Every run that gets past argument validation writes ``manifest.json`` to the
output directory. Other outputs are staged and only moved in place when the
run succeeds. Exit codes: 0 ok, 2 usage, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .errors import MeshfreeError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
THREADS_ENV = "MESHFREE_NUM_THREADS"

SCENARIOS = {
    "nldiff": "DiffusionStatic",
    "nldiff-dyn": "DiffusionDynamic",
    "pd-static": "PeridynamicStatic",
    "kw": "KalthoffWinkler",
    "study": "ConvergenceStudy",
}
COMMANDS = {v: k for k, v in SCENARIOS.items()}

# positional names per subcommand, in the documented order
POSITIONALS = {
    "nldiff": [("N", int), ("dh_ratio", float), ("poly_order", int), ("case_index", int)],
    "nldiff-dyn": [("N", int), ("dh_ratio", float), ("poly_order", int), ("dt", float), ("steps", int)],
    "pd-static": [("N", int), ("dh_ratio", float), ("poly_order", int), ("perturbation", float)],
    "kw": [("N", int), ("dh_ratio", float), ("poly_order", int), ("dt", float), ("steps", int)],
    "study": [("case_index", int), ("regime", str), ("regime_value", float), ("poly_order", int),
              ("Ns", str)],
}


class UsageError(Exception):
    def __init__(self, message, reported=False):
        super().__init__(message)
        self.reported = reported


@dataclass
class RunConfig:
    scenario: str
    N: int | None = None
    dh_ratio: float | None = None
    poly_order: int | None = None
    case_index: int = 0
    dt: float | None = None
    steps: int | None = None
    perturbation: float = 0.0
    seed: int = 0
    seeds: int = 1
    output_dir: str = "."
    snapshot_every: int = 0
    regime: str | None = None
    regime_value: float | None = None
    Ns: tuple | None = None
    rho: float = 1.0

    def validate(self):
        if self.scenario not in COMMANDS:
            raise UsageError(f"unknown scenario {self.scenario}")
        if self.scenario == "ConvergenceStudy":
            if self.regime not in ("ratio", "delta"):
                raise UsageError("regime must be 'ratio' or 'delta'")
            if not self.Ns or len(self.Ns) < 3 or min(self.Ns) < 4:
                raise UsageError("a study needs at least three resolutions, each N >= 4")
            if not self.regime_value or self.regime_value <= 0:
                raise UsageError("regime value must be positive")
        else:
            if self.N is None or self.N < 4:
                raise UsageError(f"N must be at least 4, got {self.N}")
            if self.dh_ratio is None or self.dh_ratio < 1:
                raise UsageError(f"dhratio must be at least 1, got {self.dh_ratio}")
        if self.poly_order is None or self.poly_order < 0:
            raise UsageError(f"polynomial order must be nonnegative, got {self.poly_order}")
        if self.scenario in ("DiffusionDynamic", "KalthoffWinkler"):
            if self.dt is None or not self.dt > 0:
                raise UsageError("dt must be positive")
            if self.steps is None or self.steps < 1:
                raise UsageError("steps must be a positive integer")
        if self.scenario in ("DiffusionStatic", "ConvergenceStudy") and self.case_index not in (0, 1, 2):
            raise UsageError(f"unknown case {self.case_index}")
        if self.scenario == "DiffusionStatic" and self.case_index == 2:
            raise UsageError("case 2 is a peridynamics case; use pd-static")
        if not 0 <= self.perturbation < 1:
            raise UsageError("perturbation ratio must lie in [0, 1)")
        if self.seeds < 1 or self.snapshot_every < 0:
            raise UsageError("seeds must be >= 1 and snapshot-every >= 0")
        return self


def _read_config_file(path):
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise UsageError(f"config line without '=': {ln!r}")
        k, v = (t.strip() for t in ln.split("=", 1))
        values[k] = v
    return values


_FIELD_TYPES = {"N": int, "dh_ratio": float, "poly_order": int, "case_index": int, "dt": float,
                "steps": int, "perturbation": float, "seed": int, "seeds": int, "output_dir": str,
                "snapshot_every": int, "regime": str, "regime_value": float, "Ns": str, "rho": float}


def _parse_Ns(text):
    try:
        return tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise UsageError(f"bad resolution list {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="meshfree-nonlocal",
                                     description="Meshfree nonlocal diffusion and peridynamics solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, pos in POSITIONALS.items():
        p = sub.add_parser(cmd, help=SCENARIOS[cmd])
        for name, typ in pos:
            p.add_argument(name, type=typ, nargs="?", default=None)
        p.add_argument("--config", help="key=value file; positional arguments override it")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
        if cmd == "study":
            p.add_argument("--perturbation", type=float)
            p.add_argument("--seeds", type=int, help="number of perturbation realizations")
        if cmd == "nldiff-dyn":
            p.add_argument("--rho", type=float)
    return parser


def parse_args(argv) -> RunConfig:
    """Parse a command line into a validated :class:`RunConfig` (raises ``UsageError``)."""
    parser = build_parser()
    try:
        ns = parser.parse_args(list(argv))
    except SystemExit as exc:
        if exc.code == 0:
            raise
        # argparse has already printed usage and the reason
        raise UsageError("invalid command line", reported=True) from exc
    values = {}
    if ns.config:
        raw = _read_config_file(ns.config)
        for k, v in raw.items():
            if k not in _FIELD_TYPES:
                raise UsageError(f"unknown config key {k!r}")
            try:
                values[k] = _FIELD_TYPES[k](v)
            except ValueError as exc:
                raise UsageError(f"bad value for {k}: {v!r}") from exc
    for k, v in vars(ns).items():
        if k in ("command", "config") or v is None:
            continue
        values[k] = v
    if "Ns" in values:
        values["Ns"] = _parse_Ns(values["Ns"])
    return RunConfig(scenario=SCENARIOS[ns.command], **values).validate()


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def render(config: RunConfig):
    """Command line (argv list) that parses back to ``config``."""
    cmd = COMMANDS[config.scenario]
    argv = [cmd]
    for name, _ in POSITIONALS[cmd]:
        v = getattr(config, name)
        argv.append(",".join(map(str, v)) if name == "Ns" else _fmt(v))
    defaults = RunConfig(config.scenario)
    flags = {"output_dir": "--output-dir", "seed": "--seed", "snapshot_every": "--snapshot-every"}
    if cmd == "study":
        flags.update(perturbation="--perturbation", seeds="--seeds")
    if cmd == "nldiff-dyn":
        flags["rho"] = "--rho"
    positional = {name for name, _ in POSITIONALS[cmd]}
    for f in fields(RunConfig):
        if f.name in ("scenario",) or f.name in positional:
            continue
        v = getattr(config, f.name)
        if v == getattr(defaults, f.name):
            continue
        if f.name not in flags:
            raise ValueError(f"{f.name} cannot be expressed on the {cmd} command line")
        argv += [flags[f.name], _fmt(v)]
    return argv


def _workers():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        return None
    return n if n > 1 else None


def _versions():
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _write_field_table(path, cloud, u):
    ids = np.arange(len(cloud))
    cols = [u] if u.ndim == 1 else [u[:, 0], u[:, 1]]
    with open(path, "w") as fh:
        fh.write("# id x y region u" + (" v" if u.ndim == 2 else "") + "\n")
        for i in ids:
            vals = " ".join(f"{c[i]:.12e}" for c in cols)
            fh.write(f"{i} {cloud.points[i, 0]:.12e} {cloud.points[i, 1]:.12e} {int(cloud.region[i])} {vals}\n")


def _write_errors(path, res):
    with open(path, "w") as fh:
        fh.write("h delta n seed l2_sol linf_sol l2_trunc linf_trunc\n")
        fh.write(f"{res.h!r} {res.delta!r} {res.n} {res.seed} {res.l2_sol!r} {res.linf_sol!r} "
                 f"{res.l2_trunc!r} {res.linf_trunc!r}\n")


def _static(config, stage, timings, out):
    from .verify import CASES, solve_case

    case = CASES[2 if config.scenario == "PeridynamicStatic" else config.case_index]()
    h = 1.0 / config.N
    seed = config.seed if config.perturbation else -1
    res = solve_case(case, h, config.dh_ratio * h, config.poly_order, config.perturbation or None,
                     seed, workers=_workers(), keep_fields=True)
    timings.update(res.timings)
    _write_errors(stage / "errors.txt", res)
    _write_field_table(stage / "solution.txt", res.cloud, res.u)
    out(f"{case.name}: l2_sol={res.l2_sol:.6e} linf_sol={res.linf_sol:.6e} "
        f"l2_trunc={res.l2_trunc:.6e} linf_trunc={res.linf_trunc:.6e}")


def _dynamic_diffusion(config, stage, timings, out):
    from .kernel import KernelSpec
    from .operators import assemble_diffusion
    from .pointcloud import build_neighborhoods
    from .quadrature import build_basis, generate_all_weights
    from .solver import LinearSolver, TimeIntegratorState, step_diffusion, write_snapshot
    from .verify import DynamicDiffusionCase, build_case_cloud, l2_norm, linf_norm

    case = DynamicDiffusionCase(config.rho)
    h = 1.0 / config.N
    delta = config.dh_ratio * h
    t0 = time.perf_counter()
    cloud = build_case_cloud(h, delta)
    nbhds = build_neighborhoods(cloud)
    spec = KernelSpec(delta, 0.0)
    weights = generate_all_weights(cloud, nbhds, build_basis(config.poly_order, spec), spec,
                                   workers=_workers())
    timings["weights"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    op = assemble_diffusion(cloud, nbhds, weights, case.coefficient, spec)
    timings["assembly"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    pts = cloud.points
    layer = cloud.dirichlet
    solver = LinearSolver(op, layer, config.rho / config.dt)
    state = TimeIntegratorState(0.0, 0, case.solution(pts, 0.0))
    every = config.snapshot_every or config.steps
    with open(stage / "snapshots.txt", "w") as fh:
        fh.write("# step t id x y u\n")
        for _ in range(config.steps):
            state = step_diffusion(state, op, pts, layer, case.load, case.solution, config.dt,
                                   config.rho, solver)
            if state.step % every == 0:
                write_snapshot(fh, state.step, state.t, pts, state.u_curr, ids=cloud.interior)
    timings["solve"] = time.perf_counter() - t0
    err = (state.u_curr - case.solution(pts, state.t))[cloud.interior]
    out(f"t={state.t:.6e} l2_sol={l2_norm(err):.6e} linf_sol={linf_norm(err):.6e}")


def _kw(config, stage, timings, out):
    from .fracture import KWConfig, run_kalthoff_winkler

    cfg = KWConfig(N=config.N, dh_ratio=config.dh_ratio, poly_order=config.poly_order, dt=config.dt,
                   steps=config.steps, snapshot_every=config.snapshot_every or max(1, config.steps // 5),
                   snapshot_path=str(stage / "snapshots.txt"), workers=_workers())
    res = run_kalthoff_winkler(cfg)
    timings.update(res.timings)
    fc = res.first_crack
    lines = [
        f"fragments={res.fragments}",
        f"crack_angle_left={res.angles[0]:.2f}",
        f"crack_angle_right={res.angles[1]:.2f}",
        f"first_crack_step={fc['step']}",
        f"first_crack_near_tips={fc['near_tips']}",
        f"cfl={res.cfl:.4f}",
        f"s0={cfg.s0:.6e}",
    ]
    (stage / "summary.txt").write_text("\n".join(lines) + "\n")
    for ln in lines:
        out(ln)


def _study(config, stage, timings, out):
    from .verify import CASES, FixedDelta, FixedRatio, run_convergence_study

    case = CASES[config.case_index]()
    regime = (FixedRatio(config.regime_value, config.Ns) if config.regime == "ratio"
              else FixedDelta(config.regime_value, config.Ns))
    seeds = tuple(config.seed + k for k in range(config.seeds))
    t0 = time.perf_counter()
    rep = run_convergence_study(case, regime, config.poly_order, config.perturbation or None, seeds,
                                workers=_workers())
    timings["study"] = time.perf_counter() - t0
    rep.write_csv(stage / "report.csv")
    sl = rep.slopes()
    out(f"{case.name} slopes: " + " ".join(f"{k}={v:.3f}" for k, v in sl.items()))


RUNNERS = {
    "DiffusionStatic": _static,
    "PeridynamicStatic": _static,
    "DiffusionDynamic": _dynamic_diffusion,
    "KalthoffWinkler": _kw,
    "ConvergenceStudy": _study,
}


def run(config: RunConfig, out=print) -> int:
    """Execute one scenario; returns the exit status."""
    outdir = Path(config.output_dir)
    manifest = {"config": asdict(config), "versions": _versions(), "timings": {}, "status": None}
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        out(f"error [io]: cannot create {outdir}: {exc}")
        return EXIT_IO
    status, message = EXIT_OK, "ok"
    stage = None
    try:
        stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=outdir))
        RUNNERS[config.scenario](config, stage, manifest["timings"], out)
        for item in stage.iterdir():
            os.replace(item, outdir / item.name)
    except (MeshfreeError, np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        status, message = EXIT_NUMERICAL, f"numerical: {exc}"
    except OSError as exc:
        status, message = EXIT_IO, f"io: {exc}"
    finally:
        if stage is not None:
            shutil.rmtree(stage, ignore_errors=True)
    manifest["status"] = status
    manifest["message"] = message
    if isinstance(manifest["config"].get("Ns"), tuple):
        manifest["config"]["Ns"] = list(manifest["config"]["Ns"])
    try:
        (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        out(f"error [io]: cannot write manifest: {exc}")
        return EXIT_IO
    if status != EXIT_OK:
        out(f"error [{message.split(':', 1)[0]}]: {message.split(':', 1)[1].strip()}")
    return status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_args(argv)
    except UsageError as exc:
        if not exc.reported:
            build_parser().print_usage(sys.stderr)
            print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(config)


if __name__ == "__main__":
    sys.exit(main())

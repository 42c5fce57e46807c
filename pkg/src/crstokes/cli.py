"""Command line driver.

    crstokes profile     --eta-max 10 --tol 1e-10
    crstokes mesh        --mesh shishkin --ny0 32
    crstokes solve       --method cr-rt --mesh uniform --ny0 16
    crstokes convergence --nu 1e-4 --method cr-rt --mesh shishkin --ny0 8 --levels 4
    crstokes noflow      --method cr --nu 1e-2

Settings come from built-in defaults, then an optional TOML file given with
``--config``, then explicit flags.  Exit codes: 0 success, 1 configuration
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import tomli
import tomli_w

from . import boundary_layer as bl
from .analysis import (
    DOMAIN,
    StudyConfig,
    convergence_study,
    make_exact,
    noflow_test,
    run_level,
)
from .fem import MethodKind
from .io import write_profile_csv, write_quality_csv, write_records_csv, write_timings_csv, write_vtk
from .mesh import Grading, build_shishkin, build_uniform, quality
from .solver import SolverError

log = logging.getLogger("crstokes")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

class ConfigError(ValueError):
    pass

@dataclass
class RunConfig:
    nu: float = 1e-4
    a: float = 1.0
    p0: float = 0.0
    method: str = "cr-rt"
    mesh_kind: str = "uniform"
    ny0: int = 8
    levels: int = 4
    quad_degree: int = 5
    error_degree: int = 6
    eta_max: float = 10.0
    ode_tol: float = 1e-10
    tau: float = -1.0  # negative: use the layer width
    problem: str = "hiemenz"
    nx: int = 16
    ny: int = 8
    phi: str = "x**3 + y**3"
    jobs: int = 1
    output_dir: str = "out"

    def validate(self) -> "RunConfig":
        try:
            MethodKind.parse(self.method)
            Grading(self.mesh_kind)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.mesh_kind == "shishkin" and self.ny0 % 2:
            raise ConfigError("ny0 must be even for Shishkin meshes")
        if not (self.nu > 0 and self.a > 0):
            raise ConfigError("nu and a must be positive")
        return self

    @property
    def layer_width(self) -> float:
        return 2.4 * math.sqrt(self.nu / self.a)

    def study(self, **overrides) -> StudyConfig:
        kw = dict(
            nu=self.nu,
            a=self.a,
            p0=self.p0,
            method=self.method,
            mesh_kind=self.mesh_kind,
            ny0=self.ny0,
            levels=self.levels,
            quad_degree=self.quad_degree,
            error_degree=self.error_degree,
            eta_max=self.eta_max,
            ode_tol=self.ode_tol,
            tau=None if self.tau < 0 else self.tau,
            problem=self.problem,
            jobs=self.jobs,
        )
        kw.update(overrides)
        return StudyConfig(**kw)

_FLAGS = {
    "nu": float,
    "a": float,
    "p0": float,
    "method": str,
    "mesh_kind": str,
    "ny0": int,
    "levels": int,
    "quad_degree": int,
    "error_degree": int,
    "eta_max": float,
    "ode_tol": float,
    "tau": float,
    "problem": str,
    "nx": int,
    "ny": int,
    "phi": str,
    "jobs": int,
    "output_dir": str,
}

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with RunConfig keys")
    common.add_argument("--dump-config", type=Path, help="write the resolved configuration as TOML")
    common.add_argument("-v", "--verbose", action="store_true")
    for name, typ in _FLAGS.items():
        flag = "--" + name.replace("_", "-")
        aliases = [flag]
        if name == "mesh_kind":
            aliases = ["--mesh", flag]
        elif name == "ode_tol":
            aliases = ["--tol", flag]
        common.add_argument(*aliases, dest=name, type=typ, default=None)

    parser = argparse.ArgumentParser(prog="crstokes", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("profile", parents=[common], help="tabulate the Hiemenz profile")
    sub.add_parser("mesh", parents=[common], help="export a mesh and its quality diagnostics")
    sub.add_parser("solve", parents=[common], help="single solve on level 0")
    sub.add_parser("convergence", parents=[common], help="convergence study over refinement levels")
    sub.add_parser("noflow", parents=[common], help="gradient-forcing test with zero exact velocity")
    return parser

def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config is not None:
        try:
            with open(args.config, "rb") as fh:
                values.update(tomli.load(fh))
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    unknown = set(values) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in _FLAGS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    try:
        cfg = RunConfig(**{k: _FLAGS[k](v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()

def _cmd_profile(cfg: RunConfig, out: Path) -> None:
    profile = bl.solve_profile(cfg.eta_max, cfg.ode_tol)
    path = write_profile_csv(out / "profile.csv", profile)
    print(f"fpp0={profile.fpp0!r} beta={profile.beta!r} step={profile.step!r} -> {path}")

def _mesh_for(cfg: RunConfig, ny: int):
    if cfg.mesh_kind == "shishkin":
        tau = cfg.layer_width if cfg.tau < 0 else cfg.tau
        return build_shishkin(DOMAIN, 2 * ny, ny, tau)
    return build_uniform(DOMAIN, 2 * ny, ny)

def _cmd_mesh(cfg: RunConfig, out: Path) -> None:
    mesh = _mesh_for(cfg, cfg.ny0)
    q = quality(mesh)
    write_vtk(out / "mesh.vtk", mesh)
    write_quality_csv(out / "quality.csv", q)
    print(
        f"{cfg.mesh_kind} nx={mesh.nx} ny={mesh.ny} elements={q.n_elements} "
        f"max_angle={q.max_angle:.6f} max_aspect={q.max_aspect_ratio:.4f}"
    )

def _summary(r) -> str:
    rv = "-" if r.observed_rate_velocity is None else f"{r.observed_rate_velocity:.3f}"
    rp = "-" if r.observed_rate_pressure is None else f"{r.observed_rate_pressure:.3f}"
    return (
        f"level={r.level} {r.method.value} {r.mesh_kind.value} ny={r.ny} dofs={r.n_dofs} "
        f"vel_h1={r.errors.velocity_h1:.6e} press_l2={r.errors.pressure_l2:.6e} "
        f"rate_v={rv} rate_p={rp} layer={r.errors.layer_fraction:.4f}"
    )

def _cmd_solve(cfg: RunConfig, out: Path) -> None:
    study = cfg.study()
    exact = make_exact(study)
    record, u_h, p_h = run_level(study, 0, exact)
    write_records_csv(out / "solve.csv", [record])
    write_vtk(
        out / "solution.vtk",
        u_h.mesh,
        {"err_h1": record.errors.per_element, "p_h": p_h.values},
    )
    print(_summary(record))

def _cmd_convergence(cfg: RunConfig, out: Path) -> None:
    study = cfg.study()
    records, sols = convergence_study(study, keep_fields=True)
    write_records_csv(out / "convergence.csv", records)
    write_timings_csv(out / "timings.csv", records)
    for r, (u_h, p_h) in zip(records, sols):
        write_vtk(
            out / f"error_level{r.level}.vtk",
            u_h.mesh,
            {"err_h1": r.errors.per_element, "p_h": p_h.values},
        )
        print(_summary(r))

def _cmd_noflow(cfg: RunConfig, out: Path) -> None:
    mesh = build_uniform(DOMAIN, cfg.nx, cfg.ny)
    err = noflow_test(mesh, cfg.method, cfg.nu, cfg.phi, cfg.quad_degree)
    with open(out / "noflow.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "nu", "nx", "ny", "phi", "velocity_error"])
        writer.writerow([MethodKind.parse(cfg.method).value, repr(cfg.nu), cfg.nx, cfg.ny, cfg.phi, repr(err)])
    print(f"noflow {MethodKind.parse(cfg.method).value} nu={cfg.nu:g} velocity_error={err:.6e}")

COMMANDS = {
    "profile": _cmd_profile,
    "mesh": _cmd_mesh,
    "solve": _cmd_solve,
    "convergence": _cmd_convergence,
    "noflow": _cmd_noflow,
}

def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = resolve_config(args)
        if args.dump_config is not None:
            args.dump_config.write_text(tomli_w.dumps(asdict(cfg)))
        log.info("resolved configuration: %s", cfg)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"crstokes: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](cfg, out)
    except (SolverError, bl.ShootingError, ArithmeticError) as exc:
        print(f"crstokes: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"crstokes: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK

def main() -> None:
    sys.exit(run())

if __name__ == "__main__":
    main()

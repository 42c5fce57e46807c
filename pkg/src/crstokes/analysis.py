"""Error norms, convergence studies and pressure-robustness diagnostics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import sympy

from . import boundary_layer as bl
from .fem import CRVectorField, MethodKind, P0Scalar, assemble, broken_gradient_norm, element_gradients
from .mesh import Grading, Rect, TriMesh, build_shishkin, build_uniform
from .quadrature import composite_rule, physical_points, triangle_rule
from .solver import Factorization, SolveReport, solve

DOMAIN = Rect(-1.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class ErrorSummary:
    velocity_h1: float
    pressure_l2: float
    per_element: np.ndarray = field(repr=False)
    layer_fraction: float


@dataclass(frozen=True)
class ConvergenceRecord:
    level: int
    h_max: float
    n_dofs: int
    method: MethodKind
    mesh_kind: Grading
    errors: ErrorSummary
    observed_rate_velocity: float | None = None
    observed_rate_pressure: float | None = None
    report: SolveReport | None = None
    ny: int = 0

    CSV_HEADER = "level,method,mesh,h_max,n_dofs,vel_h1,press_l2,rate_v,rate_p,layer_fraction"

    def csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return ",".join(
            [
                str(self.level),
                self.method.value,
                self.mesh_kind.value,
                fmt(self.h_max),
                str(self.n_dofs),
                fmt(self.errors.velocity_h1),
                fmt(self.errors.pressure_l2),
                fmt(self.observed_rate_velocity),
                fmt(self.observed_rate_pressure),
                fmt(self.errors.layer_fraction),
            ]
        )


def _element_integrals(mesh: TriMesh, integrand, degree: int, n_sub: int = 1, refine=None):
    """Per-element integrals of ``integrand(x, y, elements)`` (one value per point).

    Elements flagged in ``refine`` use the composite rule with ``n_sub**2``
    sub-triangles, the rest the plain rule.
    """
    out = np.zeros(mesh.n_elements)
    groups = [(np.arange(mesh.n_elements), 1)]
    if refine is not None and n_sub > 1:
        refine = np.asarray(refine, dtype=bool)
        groups = [(np.flatnonzero(~refine), 1), (np.flatnonzero(refine), n_sub)]
    for idx, m in groups:
        if len(idx) == 0:
            continue
        bary, w = composite_rule(degree, m)
        x = physical_points(mesh.element_vertices[idx], bary)
        vals = integrand(x[..., 0], x[..., 1], idx)
        out[idx] = vals @ w * mesh.areas[idx]
    return out


def layer_refinement(mesh: TriMesh, exact, eta_extent: float = 0.5):
    """Composite-rule parameters that resolve the boundary layer of ``exact``.

    Returns ``(n_sub, flags)``: elements reaching below the profile truncation
    point get ``n_sub`` subdivisions per edge so that each sub-triangle spans
    at most ``eta_extent`` in the similarity variable.
    """
    scale = getattr(exact, "scale", None)
    if scale is None:
        return 1, None
    ymin = mesh.element_vertices[..., 1].min(axis=1)
    ymax = mesh.element_vertices[..., 1].max(axis=1)
    flags = ymin * scale < exact.profile.eta_max
    if not flags.any():
        return 1, None
    extent = (ymax - ymin)[flags].max() * scale
    return max(1, math.ceil(extent / eta_extent)), flags


def error_norms(
    u_h: CRVectorField,
    p_h: P0Scalar,
    exact,
    quad_degree: int = 6,
    n_sub: int | None = None,
    refine=None,
    layer_width: float | None = None,
) -> ErrorSummary:
    """Broken H1 velocity error, L2 pressure error and per-element velocity errors.

    ``exact`` provides vectorized ``gradient(x, y)`` and ``pressure(x, y)``.
    The exact pressure is shifted to zero mean before comparison.  With
    ``n_sub=None`` the layer of a Hiemenz solution is resolved automatically.
    """
    if quad_degree < 4:
        raise ValueError(f"quad_degree must be >= 4, got {quad_degree}")
    mesh = u_h.mesh
    if n_sub is None:
        n_sub, refine = layer_refinement(mesh, exact)
    Jh = element_gradients(u_h)

    def vel(x, y, idx):
        d = exact.gradient(x, y) - Jh[idx][:, None]
        return np.einsum("tqij,tqij->tq", d, d)

    per_sq = _element_integrals(mesh, vel, quad_degree, n_sub, refine)
    per_sq = np.maximum(per_sq, 0.0)

    p_int = _element_integrals(mesh, lambda x, y, idx: exact.pressure(x, y), quad_degree, n_sub, refine)
    shift = p_int.sum() / mesh.areas.sum()
    ph = p_h.values

    def press(x, y, idx):
        return (exact.pressure(x, y) - shift - ph[idx][:, None]) ** 2

    p_sq = _element_integrals(mesh, press, quad_degree, n_sub, refine)

    if layer_width is None:
        layer_width = getattr(exact, "delta", None)
    total = per_sq.sum()
    if layer_width is None or total == 0.0:
        frac = 0.0
    else:
        in_layer = mesh.centroids[:, 1] < mesh.rect.y_min + layer_width
        frac = float(per_sq[in_layer].sum() / total)
    return ErrorSummary(
        velocity_h1=float(math.sqrt(total)),
        pressure_l2=float(math.sqrt(max(p_sq.sum(), 0.0))),
        per_element=np.sqrt(per_sq),
        layer_fraction=frac,
    )


_X, _Y = sympy.symbols("x y", real=True)


def _lambdify_vec(exprs):
    fns = [sympy.lambdify((_X, _Y), e, "numpy") for e in exprs]

    def call(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        vals = np.broadcast_arrays(*[np.asarray(fn(x, y), dtype=float) + 0.0 * x + 0.0 * y for fn in fns])
        return np.stack(vals, axis=-1)

    return call


class ManufacturedSolution:
    """Smooth Stokes solution on ``(-1, 1) x (0, 1)`` with no-slip walls.

    Polynomial stream function ``(1 - x^2)^2 y^2 (1 - y)^2``, pressure
    ``x^3 y + x y^2`` (odd in ``x``, hence zero mean) and the matching
    forcing ``-nu lap u + grad p``.
    """

    delta = None

    def __init__(self, nu: float = 1.0):
        self.nu = nu
        x, y = _X, _Y
        psi = (1 - x**2) ** 2 * y**2 * (1 - y) ** 2
        u = [sympy.diff(psi, y), -sympy.diff(psi, x)]
        p = x**3 * y + x * y**2
        f = [
            -nu * (sympy.diff(ui, x, 2) + sympy.diff(ui, y, 2)) + sympy.diff(p, v)
            for ui, v in zip(u, (x, y))
        ]
        self.velocity = _lambdify_vec(u)
        self.forcing = _lambdify_vec(f)
        self._grad = _lambdify_vec([sympy.diff(ui, v) for ui in u for v in (x, y)])
        self._p = _lambdify_vec([p])

    def gradient(self, x, y):
        g = self._grad(x, y)
        return g.reshape(g.shape[:-1] + (2, 2))

    def pressure(self, x, y):
        return self._p(x, y)[..., 0]


class GradientSolution:
    """Exact solution ``u = 0``, ``p = phi`` of the Stokes problem with forcing ``grad phi``."""

    delta = None

    def __init__(self, phi="x**3 + y**3"):
        expr = sympy.sympify(phi, locals={"x": _X, "y": _Y})
        self.phi = expr
        self.forcing = _lambdify_vec([sympy.diff(expr, _X), sympy.diff(expr, _Y)])
        self._p = _lambdify_vec([expr])

    def velocity(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.zeros(x.shape + (2,))

    def gradient(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.zeros(x.shape + (2, 2))

    def pressure(self, x, y):
        return self._p(x, y)[..., 0]


def solve_problem(mesh: TriMesh, method, nu: float, exact, quad_degree: int = 5, tol: float = 1e-10,
                  factorization: Factorization | None = None):
    """Assemble with ``exact.forcing`` and Dirichlet data ``exact.velocity``, then solve."""
    system = assemble(mesh, method, nu, exact.forcing, quad_degree, boundary=exact.velocity)
    return solve(system, tol, factorization) + (system,)


def noflow_test(mesh: TriMesh, method, nu: float, phi="x**3 + y**3", quad_degree: int = 5) -> float:
    """``||u_h||_{1,h}`` for forcing ``grad phi`` and no-slip walls (the exact velocity is zero)."""
    exact = GradientSolution(phi)
    system = assemble(mesh, method, nu, exact.forcing, quad_degree)
    u_h, _, _ = solve(system)
    return broken_gradient_norm(u_h)


@dataclass(frozen=True)
class StudyConfig:
    nu: float = 1e-4
    a: float = 1.0
    p0: float = 0.0
    method: MethodKind = MethodKind.CR_RT
    mesh_kind: Grading = Grading.UNIFORM
    ny0: int = 8
    levels: int = 4
    quad_degree: int = 5
    error_degree: int = 6
    eta_max: float = 10.0
    ode_tol: float = 1e-10
    tau: float | None = None
    problem: str = "hiemenz"
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", MethodKind.parse(self.method))
        object.__setattr__(self, "mesh_kind", Grading(self.mesh_kind.value if isinstance(self.mesh_kind, Grading) else str(self.mesh_kind).lower()))
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.ny0 < 1:
            raise ValueError("ny0 must be >= 1")
        if self.mesh_kind is Grading.SHISHKIN and self.ny0 % 2:
            raise ValueError("ny0 must be even for Shishkin meshes")
        if self.problem not in ("hiemenz", "smooth"):
            raise ValueError(f"unknown problem {self.problem!r}")


def make_exact(config: StudyConfig):
    if config.problem == "smooth":
        return ManufacturedSolution(config.nu)
    return bl.make_fields(config.nu, config.a, config.p0, config.eta_max, config.ode_tol)


def build_mesh(config: StudyConfig, level: int, exact=None) -> TriMesh:
    ny = config.ny0 * 2**level
    nx = 2 * ny
    if config.mesh_kind is Grading.SHISHKIN:
        tau = config.tau
        if tau is None:
            tau = getattr(exact, "delta", None) or 2.4 * math.sqrt(config.nu / config.a)
        return build_shishkin(DOMAIN, nx, ny, tau)
    return build_uniform(DOMAIN, nx, ny)


def _size(record: ConvergenceRecord) -> float:
    # h_max is dominated by the coarse part of a graded mesh
    return record.h_max if record.mesh_kind is Grading.UNIFORM else 1.0 / record.ny


def observed_rates(records: list[ConvergenceRecord]) -> list[ConvergenceRecord]:
    out = []
    for i, r in enumerate(records):
        if i == 0:
            out.append(replace(r, observed_rate_velocity=None, observed_rate_pressure=None))
            continue
        q = records[i - 1]
        hr = math.log(_size(q) / _size(r))
        rv = math.log(q.errors.velocity_h1 / r.errors.velocity_h1) / hr
        rp = math.log(q.errors.pressure_l2 / r.errors.pressure_l2) / hr
        out.append(replace(r, observed_rate_velocity=rv, observed_rate_pressure=rp))
    return out


def run_level(config: StudyConfig, level: int, exact) -> tuple[ConvergenceRecord, CRVectorField, P0Scalar]:
    mesh = build_mesh(config, level, exact)
    u_h, p_h, report, system = solve_problem(mesh, config.method, config.nu, exact, config.quad_degree)
    errors = error_norms(u_h, p_h, exact, config.error_degree)
    record = ConvergenceRecord(
        level=level,
        h_max=float(mesh.facet_lengths.max()),
        n_dofs=system.n_velocity + mesh.n_elements,
        method=config.method,
        mesh_kind=config.mesh_kind,
        errors=errors,
        report=report,
        ny=mesh.ny,
    )
    return record, u_h, p_h


def convergence_study(config: StudyConfig, exact=None, keep_fields: bool = False):
    """Solve on ``config.levels`` nested meshes and compute observed rates.

    Returns the list of records; with ``keep_fields`` also the per-level
    ``(u_h, p_h)`` pairs.
    """
    if config.levels < 2:
        raise ValueError("a convergence study needs at least 2 levels")
    if exact is None:
        exact = make_exact(config)
    levels = range(config.levels)
    if config.jobs > 1:
        with ThreadPoolExecutor(config.jobs) as pool:
            results = list(pool.map(lambda l: run_level(config, l, exact), levels))
    else:
        results = [run_level(config, l, exact) for l in levels]
    records = observed_rates([r for r, _, _ in results])
    if keep_fields:
        return records, [(u, p) for _, u, p in results]
    return records

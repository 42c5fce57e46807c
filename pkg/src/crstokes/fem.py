"""Crouzeix-Raviart / P0 discretization of the Stokes problem.

Velocity degrees of freedom are vector values at facet midpoints, stored as
``dofs[facet, component]``; in flat vectors the ordering is component-major,
``c * n_facets + facet``.  The local basis function of local facet ``k`` is
``1 - 2 lambda_k``.

The load functional tests the forcing against a reconstruction ``I_h v_h``
of each test function: the identity (classical CR), the lowest-order
Raviart-Thomas interpolant, or the lowest-order Brezzi-Douglas-Marini
interpolant.  The latter two are H(div)-conforming with
``div I_h v_h = div_h v_h`` elementwise, which makes the discrete velocity
blind to gradient forcings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh
from .quadrature import physical_points, triangle_rule


class MethodKind(enum.Enum):
    CR = "cr"
    CR_RT = "cr-rt"
    CR_BDM = "cr-bdm"

    @classmethod
    def parse(cls, value) -> "MethodKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown method {value!r}")


@dataclass(frozen=True, eq=False)
class CRVectorField:
    mesh: TriMesh
    dofs: np.ndarray

    def __post_init__(self):
        if self.dofs.shape != (self.mesh.n_facets, 2):
            raise ValueError(f"expected dofs of shape {(self.mesh.n_facets, 2)}")

    @classmethod
    def from_flat(cls, mesh: TriMesh, vec: np.ndarray) -> "CRVectorField":
        return cls(mesh, np.asarray(vec, dtype=float).reshape(2, -1).T.copy())

    def flat(self) -> np.ndarray:
        return self.dofs.T.ravel()

    def local_dofs(self) -> np.ndarray:
        """Dofs per element and local facet, shape ``(n_elements, 3, 2)``."""
        return self.dofs[self.mesh.element_facets]


@dataclass(frozen=True, eq=False)
class P0Scalar:
    mesh: TriMesh
    values: np.ndarray

    def mean(self) -> float:
        return float(self.values @ self.mesh.areas / self.mesh.areas.sum())

    def l2_norm(self) -> float:
        return float(np.sqrt(self.values**2 @ self.mesh.areas))


def cr_basis_gradients(mesh: TriMesh) -> np.ndarray:
    """Gradients of ``1 - 2 lambda_k``, shape ``(n_elements, 3, 2)``."""
    return -2.0 * mesh.barycentric_gradients()


def cr_interpolate(mesh: TriMesh, g) -> CRVectorField:
    """Midpoint interpolant of a vectorized ``g(x, y) -> (..., 2)``."""
    m = mesh.facet_midpoints
    vals = np.asarray(g(m[:, 0], m[:, 1]), dtype=float)
    return CRVectorField(mesh, np.broadcast_to(vals, (mesh.n_facets, 2)).copy())


def facet_mean_interpolate(mesh: TriMesh, g, facets=None, n_sub: int = 8, n_gauss: int = 6):
    """Facet averages of ``g`` by composite Gauss-Legendre quadrature.

    Returns values for ``facets`` (all facets if ``None``), shape ``(len, 2)``.
    """
    if facets is None:
        facets = np.arange(mesh.n_facets)
    t, w = np.polynomial.legendre.leggauss(n_gauss)
    s = ((np.arange(n_sub)[:, None] + 0.5 * (t[None, :] + 1.0)) / n_sub).ravel()
    ws = np.tile(w / 2.0, n_sub) / n_sub
    a = mesh.vertices[mesh.facets[facets, 0]]
    b = mesh.vertices[mesh.facets[facets, 1]]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    vals = np.asarray(g(pts[..., 0], pts[..., 1]), dtype=float)
    return np.einsum("fqc,q->fc", vals, ws)


def element_gradients(v: CRVectorField) -> np.ndarray:
    """Broken Jacobian per element, ``J[t, i, j] = d v_i / d x_j``."""
    return np.einsum("tki,tkj->tij", v.local_dofs(), cr_basis_gradients(v.mesh))


def broken_divergence(v: CRVectorField) -> np.ndarray:
    return np.trace(element_gradients(v), axis1=1, axis2=2)


def broken_gradient_norm(v: CRVectorField) -> float:
    g = element_gradients(v)
    return float(np.sqrt(np.einsum("tij,tij,t->", g, g, v.mesh.areas)))


def cr_evaluate(v: CRVectorField, bary: np.ndarray) -> np.ndarray:
    """Values at barycentric points in every element, shape ``(n_elements, n_points, 2)``."""
    phi = 1.0 - 2.0 * np.asarray(bary)
    return np.einsum("qk,tkc->tqc", phi, v.local_dofs())


def _element_slice(arr, element):
    return arr if element is None else arr[element]


def rt0_reconstruct(v: CRVectorField, element=None) -> np.ndarray:
    """Raviart-Thomas fluxes ``|F| v(m_F) . n_F`` per element and local facet.

    The normal is the global facet normal, so neighbouring elements see the
    same number for a shared facet.  Shape ``(n_elements, 3)``, or ``(3,)``
    for a single ``element``.
    """
    mesh = v.mesh
    flux = mesh.facet_lengths * np.einsum("fc,fc->f", v.dofs, mesh.facet_normals)
    return _element_slice(flux[mesh.element_facets], element)


def rt0_evaluate(mesh: TriMesh, coeffs: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Evaluate RT0 functions given by global-normal fluxes at barycentric points."""
    p = mesh.element_vertices
    x = physical_points(p, bary)
    outflux = coeffs * mesh.facet_signs()
    scale = outflux / (2.0 * mesh.areas[:, None])
    return np.einsum("tk,tqkc->tqc", scale, x[:, :, None, :] - p[:, None, :, :])


def _vertex_values(v: CRVectorField) -> np.ndarray:
    """Elementwise trace values at the three vertices, shape ``(n_elements, 3, 2)``."""
    loc = v.local_dofs()
    return loc.sum(axis=1, keepdims=True) - 2.0 * loc


def bdm1_reconstruct(v: CRVectorField, element=None, boundary: str = "trace") -> np.ndarray:
    """Brezzi-Douglas-Marini normal moments per element and local facet.

    Column 0 holds ``int_F w . n_F ds`` and column 1 holds
    ``int_F w . n_F q_F ds`` with ``q_F = lambda_a - lambda_b`` for the facet
    endpoints ``a < b`` (global vertex numbers).  Moments are taken from the
    arithmetic mean of the two element traces.  On boundary facets,
    ``boundary="trace"`` uses the one-sided trace and ``boundary="zero"``
    drops the first moment, which is the homogeneous Dirichlet value for
    members of the discrete space with boundary conditions applied.
    """
    if boundary not in ("trace", "zero"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    mesh = v.mesh
    vv = _vertex_values(v)
    tri = mesh.triangles
    ef = mesh.element_facets
    # endpoint traces accumulated per facet: (n_facets, 2 endpoints, 2 comps)
    acc = np.zeros((mesh.n_facets, 2, 2))
    for j in range(3):
        f = ef[:, j]
        for a in ((j + 1) % 3, (j + 2) % 3):
            slot = (tri[:, a] != mesh.facets[f, 0]).astype(int)
            np.add.at(acc, (f, slot), vv[:, a])
    count = np.where(mesh.boundary_facets, 1.0, 2.0)
    acc /= count[:, None, None]
    g = np.einsum("fec,fc->fe", acc, mesh.facet_normals)
    m0 = mesh.facet_lengths * 0.5 * (g[:, 0] + g[:, 1])
    m1 = mesh.facet_lengths * (g[:, 0] - g[:, 1]) / 6.0
    if boundary == "zero":
        m1 = np.where(mesh.boundary_facets, 0.0, m1)
    moments = np.stack([m0, m1], axis=-1)[ef]
    return _element_slice(moments, element)


def _vertex_normal_inverse(mesh: TriMesh) -> np.ndarray:
    """Per element and local vertex ``a``, the inverse of the matrix whose rows are the
    global normals of local facets ``(a+1)%3`` and ``(a+2)%3``."""
    n = mesh.facet_normals[mesh.element_facets]
    rows = np.stack([np.stack([n[:, (a + 1) % 3], n[:, (a + 2) % 3]], axis=1) for a in range(3)], axis=1)
    return np.linalg.inv(rows)


def bdm1_evaluate(mesh: TriMesh, moments: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Evaluate BDM1 functions given by ``bdm1_reconstruct`` moments at barycentric points."""
    tri = mesh.triangles
    ef = mesh.element_facets
    L = mesh.facet_lengths[ef]
    # normal component at facet endpoints a < b
    ga = (moments[..., 0] + 3.0 * moments[..., 1]) / L
    gb = (moments[..., 0] - 3.0 * moments[..., 1]) / L
    rhs = np.empty((mesh.n_elements, 3, 2))
    for a in range(3):
        for i, j in enumerate(((a + 1) % 3, (a + 2) % 3)):
            first = tri[:, a] == mesh.facets[ef[:, j], 0]
            rhs[:, a, i] = np.where(first, ga[:, j], gb[:, j])
    w = np.einsum("tacd,tad->tac", _vertex_normal_inverse(mesh), rhs)
    return np.einsum("qa,tac->tqc", np.asarray(bary), w)


def rt0_basis_values(mesh: TriMesh, bary: np.ndarray) -> np.ndarray:
    """RT0 functions with unit global flux on each local facet, ``(n_elements, 3, n_points, 2)``."""
    bary = np.asarray(bary)
    out = np.empty((mesh.n_elements, 3, len(bary), 2))
    for k in range(3):
        unit = np.zeros((mesh.n_elements, 3))
        unit[:, k] = 1.0
        out[:, k] = rt0_evaluate(mesh, unit, bary)
    return out


def bdm1_basis_values(mesh: TriMesh, bary: np.ndarray) -> np.ndarray:
    """BDM1 functions dual to the normal moments, ``(n_elements, 3, 2, n_points, 2)``."""
    bary = np.asarray(bary)
    out = np.empty((mesh.n_elements, 3, 2, len(bary), 2))
    for k in range(3):
        for m in range(2):
            unit = np.zeros((mesh.n_elements, 3, 2))
            unit[:, k, m] = 1.0
            out[:, k, m] = bdm1_evaluate(mesh, unit, bary)
    return out


def rt0_matrix(mesh: TriMesh) -> sp.csr_matrix:
    """Linear map from flat CR dofs to global RT0 fluxes, ``(n_facets, 2 n_facets)``."""
    nf = mesh.n_facets
    rows = np.concatenate([np.arange(nf), np.arange(nf)])
    cols = np.concatenate([np.arange(nf), nf + np.arange(nf)])
    vals = (mesh.facet_lengths[:, None] * mesh.facet_normals).T.ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(nf, 2 * nf))


def bdm1_matrix(mesh: TriMesh, boundary: str = "trace") -> sp.csr_matrix:
    """Linear map from flat CR dofs to BDM1 moments, row ``2 F + m`` for moment ``m`` of facet ``F``.

    Matches ``bdm1_reconstruct``.
    """
    nf = mesh.n_facets
    tri = mesh.triangles
    ef = mesh.element_facets
    n_el = mesh.n_elements
    count = np.where(mesh.boundary_facets, 1.0, 2.0)
    L = mesh.facet_lengths
    n = mesh.facet_normals
    rows, cols, vals = [], [], []
    # zeroth moments
    for c in range(2):
        rows.append(2 * np.arange(nf))
        cols.append(c * nf + np.arange(nf))
        vals.append(L * n[:, c])
    # first moments: |F|/6 (g_a - g_b) from averaged vertex traces
    keep = np.ones(nf) if boundary == "trace" else (~mesh.boundary_facets).astype(float)
    for j in range(3):
        f = ef[:, j]
        for a in ((j + 1) % 3, (j + 2) % 3):
            sign = np.where(tri[:, a] == mesh.facets[f, 0], 1.0, -1.0)
            w = sign * L[f] / (6.0 * count[f]) * keep[f]
            for k in range(3):
                coef = w * (-1.0 if k == a else 1.0)
                for c in range(2):
                    rows.append(2 * f + 1)
                    cols.append(c * nf + ef[:, k])
                    vals.append(coef * n[f, c])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * nf, 2 * nf),
    )


@dataclass(frozen=True, eq=False)
class StokesSystem:
    """Saddle-point blocks after elimination of boundary velocity dofs.

    ``A`` and ``B`` act on the interior dofs listed in ``interior``
    (flat component-major indices).  ``rhs_u`` and ``rhs_p`` include the
    contribution of the boundary lifting ``lift``.
    """

    mesh: TriMesh
    method: MethodKind
    nu: float
    A: sp.csr_matrix
    B: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    mean_row: np.ndarray
    interior: np.ndarray
    lift: np.ndarray
    load: np.ndarray

    @property
    def n_velocity(self) -> int:
        return len(self.interior)


def stiffness_matrix(mesh: TriMesh) -> sp.csr_matrix:
    """Scalar CR stiffness matrix on all facets."""
    g = cr_basis_gradients(mesh)
    K = np.einsum("tkd,tld,t->tkl", g, g, mesh.areas)
    ef = mesh.element_facets
    rows = np.repeat(ef, 3, axis=1).ravel()
    cols = np.tile(ef, (1, 3)).ravel()
    return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(mesh.n_facets, mesh.n_facets))


def divergence_matrix(mesh: TriMesh) -> sp.csr_matrix:
    """``B[t, dof] = -int_T div(phi_dof)`` for all velocity dofs."""
    g = cr_basis_gradients(mesh)
    nf = mesh.n_facets
    rows, cols, vals = [], [], []
    for c in range(2):
        rows.append(np.repeat(np.arange(mesh.n_elements), 3))
        cols.append((c * nf + mesh.element_facets).ravel())
        vals.append((-g[:, :, c] * mesh.areas[:, None]).ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_elements, 2 * nf),
    )


def load_vector(mesh: TriMesh, method: MethodKind, f, quad_degree: int = 5) -> np.ndarray:
    """``int f . I_h phi`` for every velocity dof (flat, component-major).

    For the reconstructed variants the forcing is first tested against the
    RT0/BDM1 basis and then pulled back through the dof-to-moment map, since
    a reconstructed basis function is not confined to the two elements of its
    facet.  Boundary first moments are taken as zero.
    """
    method = MethodKind.parse(method)
    bary, w = triangle_rule(quad_degree)
    x = physical_points(mesh.element_vertices, bary)
    fx = np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1]), dtype=float), x.shape)
    fw = fx * (w[None, :, None] * mesh.areas[:, None, None])
    ef = mesh.element_facets
    nf = mesh.n_facets
    if method is MethodKind.CR:
        phi = 1.0 - 2.0 * bary
        local = np.einsum("qk,tqc->ckt", phi, fw)
        out = np.zeros((2, nf))
        for c in range(2):
            np.add.at(out[c], ef.T, local[c])
        return out.ravel()
    if method is MethodKind.CR_RT:
        local = np.einsum("tkqd,tqd->tk", rt0_basis_values(mesh, bary), fw)
        moments = np.bincount(ef.ravel(), local.ravel(), minlength=nf)
        return rt0_matrix(mesh).T @ moments
    if method is MethodKind.CR_BDM:
        local = np.einsum("tkmqd,tqd->tkm", bdm1_basis_values(mesh, bary), fw)
        idx = 2 * ef[:, :, None] + np.arange(2)
        moments = np.bincount(idx.ravel(), local.ravel(), minlength=2 * nf)
        return bdm1_matrix(mesh, boundary="zero").T @ moments
    raise ValueError(f"unsupported method {method}")


def assemble(
    mesh: TriMesh,
    method,
    nu: float,
    f=None,
    quad_degree: int = 5,
    boundary=None,
    boundary_values: np.ndarray | None = None,
) -> StokesSystem:
    """Assemble the (modified) CR Stokes system.

    Parameters
    ----------
    mesh : TriMesh
    method : MethodKind or str
        Reconstruction used in the load functional.
    nu : float
        Viscosity.
    f : callable, optional
        Vectorized forcing ``f(x, y) -> (..., 2)``; zero if omitted.
    quad_degree : int
        Degree of the triangle rule for the load term.
    boundary : callable, optional
        Dirichlet data ``g(x, y) -> (..., 2)``; boundary dofs are set to its
        facet means.  Homogeneous if omitted.
    boundary_values : ndarray, optional
        Explicit boundary dofs ``(n_boundary_facets, 2)``, overrides ``boundary``.
    """
    method = MethodKind.parse(method)
    if mesh.n_elements == 0:
        raise ValueError("empty mesh")
    if quad_degree < 1:
        raise ValueError(f"unsupported quadrature degree {quad_degree}")
    if not nu > 0.0:
        raise ValueError(f"nu must be positive, got {nu}")
    nf = mesh.n_facets
    K = stiffness_matrix(mesh)
    A_full = sp.block_diag([nu * K, nu * K], format="csr")
    B_full = divergence_matrix(mesh)
    if f is None:
        load = np.zeros(2 * nf)
    else:
        load = load_vector(mesh, method, f, quad_degree)

    bfac = np.flatnonzero(mesh.boundary_facets)
    lift = np.zeros((nf, 2))
    if boundary_values is not None:
        lift[bfac] = boundary_values
    elif boundary is not None:
        lift[bfac] = facet_mean_interpolate(mesh, boundary, bfac)
    lift_flat = lift.T.ravel()

    is_bnd = np.concatenate([mesh.boundary_facets, mesh.boundary_facets])
    interior = np.flatnonzero(~is_bnd)
    bdofs = np.flatnonzero(is_bnd)
    A = A_full[interior][:, interior].tocsr()
    B = B_full[:, interior].tocsr()
    g = lift_flat[bdofs]
    rhs_u = load[interior] - A_full[interior][:, bdofs] @ g
    rhs_p = -(B_full[:, bdofs] @ g)
    return StokesSystem(
        mesh=mesh,
        method=method,
        nu=float(nu),
        A=A,
        B=B,
        rhs_u=rhs_u,
        rhs_p=rhs_p,
        mean_row=mesh.areas.copy(),
        interior=interior,
        lift=lift_flat,
        load=load,
    )

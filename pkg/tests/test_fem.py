import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from crstokes.fem import (
    CRVectorField,
    MethodKind,
    assemble,
    bdm1_evaluate,
    bdm1_matrix,
    bdm1_reconstruct,
    broken_divergence,
    broken_gradient_norm,
    cr_evaluate,
    cr_interpolate,
    divergence_matrix,
    element_gradients,
    facet_mean_interpolate,
    load_vector,
    rt0_evaluate,
    rt0_matrix,
    rt0_reconstruct,
)
from crstokes.mesh import Rect, build_shishkin, build_uniform
from crstokes.quadrature import physical_points, triangle_rule
from crstokes.solver import solve

from .conftest import DOMAIN, small_meshes

MESHES = small_meshes()
IDS = [f"{m.grading.value}{m.nx}x{m.ny}" for m in MESHES]


def affine_fit(mesh, dofs):
    """Per element, the affine map through the three facet-midpoint values: (coef (3, 2)) with
    v(x, y) = c0 + c1 x + c2 y.  Independent of the barycentric basis formulas."""
    out = np.empty((mesh.n_elements, 3, 2))
    for t in range(mesh.n_elements):
        f = mesh.element_facets[t]
        m = mesh.facet_midpoints[f]
        M = np.column_stack([np.ones(3), m])
        out[t] = np.linalg.solve(M, dofs[f])
    return out


def random_field(mesh, rng):
    return CRVectorField(mesh, rng.standard_normal((mesh.n_facets, 2)))


def const(c):
    return lambda x, y: np.stack(np.broadcast_arrays(c[0] + 0.0 * x, c[1] + 0.0 * y), axis=-1)


def affine(x, y):
    return np.stack([1.0 + 2.0 * x - 0.5 * y, -0.3 + 0.7 * x + 1.5 * y], axis=-1)


class TestCRSpace:
    def test_constant(self):
        m = MESHES[2]
        v = cr_interpolate(m, const((0.4, -1.2)))
        np.testing.assert_array_equal(v.dofs, np.tile([0.4, -1.2], (m.n_facets, 1)))
        assert broken_gradient_norm(v) == pytest.approx(0.0, abs=1e-13)

    def test_shear_on_unit_square(self):
        m = build_uniform(Rect(0, 1, 0, 1), 1, 1)
        v = cr_interpolate(m, lambda x, y: np.stack([y, 0 * x], axis=-1))
        np.testing.assert_allclose(v.dofs[:, 0], m.facet_midpoints[:, 1])

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_shear_norm_is_area(self, mesh):
        v = cr_interpolate(mesh, lambda x, y: np.stack([y, 0 * x], axis=-1))
        assert broken_gradient_norm(v) ** 2 == pytest.approx(mesh.rect.area, rel=1e-12)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_gradient_against_affine_fit(self, mesh, rng):
        v = random_field(mesh, rng)
        coef = affine_fit(mesh, v.dofs)
        J = element_gradients(v)
        np.testing.assert_allclose(J, np.transpose(coef[:, 1:, :], (0, 2, 1)), atol=1e-10)
        brute = np.sqrt(np.sum(np.sum(coef[:, 1:, :] ** 2, axis=(1, 2)) * mesh.areas))
        assert broken_gradient_norm(v) == pytest.approx(brute, rel=1e-12)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_evaluation_against_affine_fit(self, mesh, rng):
        v = random_field(mesh, rng)
        coef = affine_fit(mesh, v.dofs)
        bary, _ = triangle_rule(4)
        x = physical_points(mesh.element_vertices, bary)
        ref = coef[:, None, 0, :] + x[..., :1] * coef[:, None, 1, :] + x[..., 1:] * coef[:, None, 2, :]
        np.testing.assert_allclose(cr_evaluate(v, bary), ref, atol=1e-10)

    def test_midpoint_continuity(self, rng):
        # traces from both elements agree at interior facet midpoints
        m = MESHES[3]
        v = random_field(m, rng)
        coef = affine_fit(m, v.dofs)
        for f in np.flatnonzero(~m.boundary_facets):
            x, y = m.facet_midpoints[f]
            vals = [coef[t, 0] + x * coef[t, 1] + y * coef[t, 2] for t in m.facet_to_elements[f]]
            np.testing.assert_allclose(vals[0], vals[1], atol=1e-12)

    def test_facet_mean(self):
        m = MESHES[1]
        vals = facet_mean_interpolate(m, affine)
        np.testing.assert_allclose(vals, cr_interpolate(m, affine).dofs, atol=1e-14)
        quad = facet_mean_interpolate(m, lambda x, y: np.stack([x * x, y * y], axis=-1))
        a = m.vertices[m.facets[:, 0]]
        b = m.vertices[m.facets[:, 1]]
        exact = (a**2 + a * b + b**2) / 3.0
        np.testing.assert_allclose(quad, exact, atol=1e-14)

    def test_flat_roundtrip(self, rng):
        v = random_field(MESHES[2], rng)
        w = CRVectorField.from_flat(v.mesh, v.flat())
        np.testing.assert_array_equal(v.dofs, w.dofs)
        with pytest.raises(ValueError):
            CRVectorField(v.mesh, np.zeros((3, 2)))


def facet_gauss(mesh, n=4):
    t, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (t + 1)
    a = mesh.vertices[mesh.facets[:, 0]]
    b = mesh.vertices[mesh.facets[:, 1]]
    pts = a[:, None] + s[None, :, None] * (b - a)[:, None]
    return s, w / 2, pts


def point_to_bary(mesh, t, pts):
    p = mesh.vertices[mesh.triangles[t]]
    M = np.vstack([p.T, np.ones(3)])
    return np.linalg.solve(M, np.vstack([pts.T, np.ones(len(pts))])).T


def evaluate_at(mesh, values_fn, t, pts):
    """Evaluate an elementwise field on element t at physical points via its barycentric form."""
    return values_fn(point_to_bary(mesh, t, pts))[t]


class TestRT0:
    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_reproduces_constants(self, mesh):
        v = cr_interpolate(mesh, const((0.3, -0.7)))
        bary, _ = triangle_rule(4)
        np.testing.assert_allclose(rt0_evaluate(mesh, rt0_reconstruct(v), bary), np.broadcast_to([0.3, -0.7], (mesh.n_elements, len(bary), 2)), atol=1e-13)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_normal_flux_matches_cr(self, mesh, rng):
        """Facet flux of the reconstruction equals the CR flux, from both sides."""
        v = random_field(mesh, rng)
        coeffs = rt0_reconstruct(v)
        s, w, pts = facet_gauss(mesh)
        cr_flux = mesh.facet_lengths * np.einsum("fc,fc->f", v.dofs, mesh.facet_normals)
        for f in range(mesh.n_facets):
            for t in mesh.facet_to_elements[f]:
                if t < 0:
                    continue
                vals = evaluate_at(mesh, lambda b: rt0_evaluate(mesh, coeffs, b), t, pts[f])
                flux = mesh.facet_lengths[f] * np.sum(w * (vals @ mesh.facet_normals[f]))
                assert flux == pytest.approx(cr_flux[f], abs=1e-11)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_divergence_equals_broken_divergence(self, mesh, rng):
        v = random_field(mesh, rng)
        out = rt0_reconstruct(v) * mesh.facet_signs()
        div_rt = out.sum(axis=1) / mesh.areas
        np.testing.assert_allclose(div_rt, broken_divergence(v), atol=1e-10)

    def test_locality(self):
        m = MESHES[2]
        f = np.flatnonzero(~m.boundary_facets)[3]
        d = np.zeros((m.n_facets, 2))
        d[f] = [1.0, 0.5]
        coeffs = rt0_reconstruct(CRVectorField(m, d))
        nz = np.flatnonzero(np.any(coeffs != 0, axis=1))
        assert set(nz) == set(m.facet_to_elements[f])

    def test_single_element(self, rng):
        v = random_field(MESHES[2], rng)
        np.testing.assert_array_equal(rt0_reconstruct(v, 5), rt0_reconstruct(v)[5])

    def test_matrix_matches(self, rng):
        m = MESHES[3]
        v = random_field(m, rng)
        np.testing.assert_allclose((rt0_matrix(m) @ v.flat())[m.element_facets], rt0_reconstruct(v), atol=1e-13)


class TestBDM1:
    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_reproduces_affine(self, mesh):
        v = cr_interpolate(mesh, affine)
        bary, _ = triangle_rule(4)
        x = physical_points(mesh.element_vertices, bary)
        np.testing.assert_allclose(bdm1_evaluate(mesh, bdm1_reconstruct(v), bary), affine(x[..., 0], x[..., 1]), atol=1e-12)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_constant_equals_rt0(self, mesh):
        v = cr_interpolate(mesh, const((-2.0, 0.25)))
        bary, _ = triangle_rule(4)
        a = bdm1_evaluate(mesh, bdm1_reconstruct(v), bary)
        b = rt0_evaluate(mesh, rt0_reconstruct(v), bary)
        np.testing.assert_allclose(a, b, atol=1e-12)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_zeroth_moments_are_rt0_fluxes(self, mesh, rng):
        v = random_field(mesh, rng)
        np.testing.assert_allclose(bdm1_reconstruct(v)[..., 0], rt0_reconstruct(v), atol=1e-12)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_moments_of_averaged_trace(self, mesh, rng):
        """Both moments computed by Gauss quadrature of the averaged CR trace and of the
        reconstruction itself, from every adjacent element."""
        v = random_field(mesh, rng)
        moments = bdm1_reconstruct(v)
        coef = affine_fit(mesh, v.dofs)
        s, w, pts = facet_gauss(mesh)
        q = (1 - s) - s  # lambda_a - lambda_b along a -> b
        for f in range(mesh.n_facets):
            n = mesh.facet_normals[f]
            traces = [coef[t, 0] + pts[f][:, :1] * coef[t, 1] + pts[f][:, 1:] * coef[t, 2] for t in mesh.facet_to_elements[f] if t >= 0]
            avg = np.mean(traces, axis=0) @ n
            ref = mesh.facet_lengths[f] * np.array([np.sum(w * avg), np.sum(w * avg * q)])
            for t in mesh.facet_to_elements[f]:
                if t < 0:
                    continue
                k = list(mesh.element_facets[t]).index(f)
                np.testing.assert_allclose(moments[t, k], ref, atol=1e-11)
                vals = evaluate_at(mesh, lambda b: bdm1_evaluate(mesh, moments, b), t, pts[f]) @ n
                got = mesh.facet_lengths[f] * np.array([np.sum(w * vals), np.sum(w * vals * q)])
                np.testing.assert_allclose(got, ref, atol=1e-11)

    def test_zero_boundary_mode(self, rng):
        m = MESHES[3]
        v = random_field(m, rng)
        a = bdm1_reconstruct(v, boundary="zero")
        b = bdm1_reconstruct(v)
        bnd = m.boundary_facets[m.element_facets]
        assert np.all(a[..., 1][bnd] == 0.0)
        np.testing.assert_array_equal(a[~bnd], b[~bnd])
        with pytest.raises(ValueError):
            bdm1_reconstruct(v, boundary="other")

    @pytest.mark.parametrize("boundary", ["trace", "zero"])
    def test_matrix_matches(self, boundary, rng):
        m = MESHES[4]
        v = random_field(m, rng)
        flat = (bdm1_matrix(m, boundary) @ v.flat()).reshape(-1, 2)
        np.testing.assert_allclose(flat[m.element_facets], bdm1_reconstruct(v, boundary=boundary), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    c=st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
    tau=st.floats(0.01, 0.9),
)
def test_reconstructions_reproduce_constants_property(c, tau):
    mesh = build_shishkin(DOMAIN, 4, 4, tau)
    v = cr_interpolate(mesh, const(c))
    bary, _ = triangle_rule(2)
    target = np.broadcast_to(c, (mesh.n_elements, len(bary), 2))
    np.testing.assert_allclose(rt0_evaluate(mesh, rt0_reconstruct(v), bary), target, atol=1e-12 * (1 + max(map(abs, c))))
    np.testing.assert_allclose(bdm1_evaluate(mesh, bdm1_reconstruct(v), bary), target, atol=1e-11 * (1 + max(map(abs, c))))


def brute_force_load(mesh, method, f, degree):
    """int f . I_h phi by reconstructing every unit basis function globally."""
    bary, w = triangle_rule(degree)
    x = physical_points(mesh.element_vertices, bary)
    fx = f(x[..., 0], x[..., 1])
    out = np.zeros(2 * mesh.n_facets)
    for i in range(2 * mesh.n_facets):
        e = np.zeros(2 * mesh.n_facets)
        e[i] = 1.0
        v = CRVectorField.from_flat(mesh, e)
        if method is MethodKind.CR:
            vals = cr_evaluate(v, bary)
        elif method is MethodKind.CR_RT:
            vals = rt0_evaluate(mesh, rt0_reconstruct(v), bary)
        else:
            vals = bdm1_evaluate(mesh, bdm1_reconstruct(v, boundary="zero"), bary)
        out[i] = np.einsum("tqc,tqc,q,t->", vals, fx, w, mesh.areas)
    return out


def smooth_f(x, y):
    return np.stack([np.sin(3 * x) * np.exp(y), x * y**2 - 1.0], axis=-1)


class TestAssembly:
    @pytest.mark.parametrize("method", list(MethodKind))
    @pytest.mark.parametrize("mesh", [MESHES[1], MESHES[3]], ids=IDS[1:4:2])
    def test_load_against_brute_force(self, mesh, method):
        np.testing.assert_allclose(load_vector(mesh, method, smooth_f, 5), brute_force_load(mesh, method, smooth_f, 5), atol=1e-12)

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_stiffness_symmetric_positive(self, mesh):
        s = assemble(mesh, "cr", 0.7)
        A = s.A.toarray()
        np.testing.assert_array_equal(A, A.T)
        if A.size:
            assert np.linalg.eigvalsh(A).min() > 0

    @pytest.mark.parametrize("mesh", MESHES, ids=IDS)
    def test_divergence_kills_constants(self, mesh):
        v = cr_interpolate(mesh, const((2.0, -3.0)))
        np.testing.assert_allclose(divergence_matrix(mesh) @ v.flat(), 0.0, atol=1e-13)

    def test_divergence_matrix_is_broken_divergence(self, rng):
        m = MESHES[3]
        v = random_field(m, rng)
        np.testing.assert_allclose(divergence_matrix(m) @ v.flat(), -broken_divergence(v) * m.areas, atol=1e-12)

    def test_methods_share_matrices(self):
        m = MESHES[3]
        systems = [assemble(m, meth, 0.1, smooth_f, 5) for meth in MethodKind]
        for s in systems[1:]:
            assert (s.A != systems[0].A).nnz == 0
            assert (s.B != systems[0].B).nnz == 0
            assert not np.allclose(s.rhs_u, systems[0].rhs_u)

    def test_zero_forcing(self):
        s = assemble(MESHES[2], "cr-rt", 1.0)
        assert not s.rhs_u.any() and not s.rhs_p.any()

    @pytest.mark.parametrize("method", [MethodKind.CR_RT, MethodKind.CR_BDM])
    def test_constant_forcing_is_discrete_gradient(self, method):
        """f = c is the gradient of q = c.x; integrating by parts against the reconstructed
        test functions gives B^T applied to the element means of q."""
        m = MESHES[3]
        c = np.array([0.8, -1.3])
        got = load_vector(m, method, const(c), 5)
        qbar = m.centroids @ c
        interior = np.concatenate([~m.boundary_facets, ~m.boundary_facets])
        ref = divergence_matrix(m).T @ qbar
        np.testing.assert_allclose(got[interior], ref[interior], atol=1e-13)

    def test_mean_row_and_errors(self):
        s = assemble(MESHES[2], "cr", 1.0)
        np.testing.assert_array_equal(s.mean_row, MESHES[2].areas)
        with pytest.raises(ValueError):
            assemble(MESHES[2], "cr", 1.0, smooth_f, quad_degree=0)
        with pytest.raises(ValueError):
            assemble(MESHES[2], "cr", 1.0, smooth_f, quad_degree=40)
        with pytest.raises(ValueError):
            assemble(MESHES[2], "unknown", 1.0)

    def test_boundary_elimination(self):
        m = MESHES[3]
        s = assemble(m, "cr", 1.0, boundary=affine)
        assert s.A.shape[0] == 2 * (~m.boundary_facets).sum()
        lift = s.lift.reshape(2, -1).T
        np.testing.assert_allclose(lift[m.boundary_facets], cr_interpolate(m, affine).dofs[m.boundary_facets], atol=1e-14)
        assert np.all(lift[~m.boundary_facets] == 0)


def grad_cubic(x, y):
    # grad of x^3 + y^3 - x y^2
    return np.stack([3 * x**2 - y**2, 3 * y**2 - 2 * x * y], axis=-1)


class TestDiscreteProperties:
    @pytest.mark.parametrize("method", list(MethodKind))
    @pytest.mark.parametrize("mesh", [MESHES[2], MESHES[3], MESHES[4]], ids=IDS[2:])
    def test_discretely_divergence_free(self, mesh, method):
        s = assemble(mesh, method, 0.05, smooth_f, 5, boundary=lambda x, y: np.stack([y * (1 - y), 0 * x], axis=-1))
        u, _, _ = solve(s)
        assert np.abs(broken_divergence(u)).max() < 1e-9 * broken_gradient_norm(u)

    @pytest.mark.parametrize("method", [MethodKind.CR_RT, MethodKind.CR_BDM])
    @pytest.mark.parametrize("mesh", [MESHES[2], MESHES[3], MESHES[4]], ids=IDS[2:])
    def test_gradient_forcing_invisible(self, mesh, method):
        base = solve(assemble(mesh, method, 0.01, smooth_f, 5))[0]
        shifted = solve(assemble(mesh, method, 0.01, lambda x, y: smooth_f(x, y) + grad_cubic(x, y), 5))[0]
        diff = CRVectorField(mesh, shifted.dofs - base.dofs)
        assert broken_gradient_norm(diff) < 1e-9 * max(1.0, broken_gradient_norm(base))

    @pytest.mark.parametrize("mesh", [MESHES[2], MESHES[3], MESHES[4]], ids=IDS[2:])
    def test_gradient_forcing_visible_for_cr(self, mesh):
        base = solve(assemble(mesh, "cr", 0.01, smooth_f, 5))[0]
        shifted = solve(assemble(mesh, "cr", 0.01, lambda x, y: smooth_f(x, y) + grad_cubic(x, y), 5))[0]
        diff = CRVectorField(mesh, shifted.dofs - base.dofs)
        assert broken_gradient_norm(diff) > 1e-3

    @pytest.mark.parametrize("method", list(MethodKind))
    def test_viscosity_scaling(self, method):
        m = MESHES[3]
        c = 7.5
        u1, p1, _ = solve(assemble(m, method, 0.02, smooth_f, 5))
        u2, p2, _ = solve(assemble(m, method, c * 0.02, lambda x, y: c * smooth_f(x, y), 5))
        np.testing.assert_allclose(u2.dofs, u1.dofs, atol=1e-10 * np.abs(u1.dofs).max())
        np.testing.assert_allclose(p2.values, c * p1.values, atol=1e-10 * c * np.abs(p1.values).max())

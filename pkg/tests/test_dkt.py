import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoscale_plate import dkt, minimize, plate
from twoscale_plate.harness.checks import random_isometric_state

UNIT_TRI = plate.Triangulation([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
CENTROID = np.full(3, 1 / 3)


def s1_squared():
    A = np.zeros((3, 2, 2))
    A[0, 0, 0] = 2.0
    return dkt.quadratic_map(A)


def test_reference_basis_nodal_property():
    C = dkt.reference_basis()
    V = np.array([[0, 0], [1, 0], [0, 1.0]])
    vals = dkt._mono(V) @ C
    grads = np.einsum("vmd,ma->vad", dkt._mono_grad(V), C)
    for a in range(3):
        e = np.zeros(9)
        e[3 * a] = 1
        np.testing.assert_allclose(vals[a], e, atol=1e-13)
        for d in range(2):
            e = np.zeros(9)
            e[3 * a + 1 + d] = 1
            np.testing.assert_allclose(grads[a, :, d], e, atol=1e-13)


def test_zero_dofs_give_zero():
    w = dkt.DktDeformation(UNIT_TRI, np.zeros((3, 3)), np.zeros((3, 3, 2)))
    np.testing.assert_array_equal(dkt.eval_deformation(w, 0, CENTROID), 0.0)


def test_linear_reproduction_at_centroid():
    R = np.zeros((3, 2))
    R[0, 0] = 1.0
    w = dkt.interpolate_dkt(dkt.affine_map(R, np.zeros(3)), UNIT_TRI)
    assert dkt.eval_deformation(w, 0, CENTROID)[0] == pytest.approx(1 / 3, abs=1e-15)


def test_bilinear_value_at_centroid():
    A = np.zeros((3, 2, 2))
    A[0, 0, 1] = A[0, 1, 0] = 1.0
    w = dkt.interpolate_dkt(dkt.quadratic_map(A), UNIT_TRI)
    assert dkt.eval_deformation(w, 0, CENTROID)[0] == pytest.approx(1 / 9, abs=1e-15)


def test_center_of_mass_identity(rng):
    P = rng.uniform(0, 1, size=(3, 2))
    mesh = plate.Triangulation(P, [[0, 1, 2]])
    for _ in range(5):
        u = dkt.quadratic_map(rng.standard_normal((3, 2, 2)), rng.standard_normal(3), rng.standard_normal((3, 2)))
        z = mesh.vertices
        zc = z.mean(axis=0)
        lhs = 6 * u.value(zc[None])[0]
        rhs = np.sum(2 * u.value(z) - np.einsum("aij,aj->ai", u.grad(z), z - zc), axis=0)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        w = dkt.interpolate_dkt(u, mesh)
        np.testing.assert_allclose(dkt.eval_deformation(w, 0, CENTROID), u.value(zc[None])[0], atol=1e-13)


def test_affine_reproduced_everywhere(rng):
    mesh = plate.build_rect_mesh(1.4, 0.8, 3, 2)
    R, _ = np.linalg.qr(rng.standard_normal((3, 2)))
    u = dkt.affine_map(R, rng.standard_normal(3))
    w = dkt.interpolate_dkt(u, mesh)
    bary = rng.dirichlet(np.ones(3), size=mesh.n_triangles)
    T = np.arange(mesh.n_triangles)
    z = np.einsum("ta,tad->td", bary, mesh.vertices[mesh.triangles])
    np.testing.assert_allclose(dkt.eval_deformation(w, T, bary), u.value(z), atol=1e-13)
    th = dkt.discrete_gradient(w)
    np.testing.assert_allclose(th.nodes, np.broadcast_to(R, th.nodes.shape), atol=1e-13)
    np.testing.assert_allclose(dkt.discrete_hessian_all(w, CENTROID), 0.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_quadratic_gradient_reproduced(seed):
    rng = np.random.default_rng(seed)
    mesh = plate.build_rect_mesh(1.3, 0.9, 3, 3)
    u = dkt.quadratic_map(rng.standard_normal((3, 2, 2)), rng.standard_normal(3), rng.standard_normal((3, 2)))
    w = dkt.interpolate_dkt(u, mesh)
    th = dkt.discrete_gradient(w)
    for lam in rng.dirichlet(np.ones(3), size=10):
        z = np.einsum("a,tad->td", lam, mesh.vertices[mesh.triangles])
        np.testing.assert_allclose(th.evaluate(lam), u.grad(z), atol=1e-12)


def test_s1_squared_hessian():
    mesh = plate.build_rect_mesh(1, 1, 2, 2)
    w = dkt.interpolate_dkt(s1_squared(), mesh)
    A = dkt.discrete_hessian_all(w, np.array([0.2, 0.5, 0.3]))
    expected = np.zeros((3, 2, 2))
    expected[0, 0, 0] = 2.0
    np.testing.assert_allclose(A, np.broadcast_to(expected, A.shape), atol=1e-12)
    th = dkt.discrete_gradient(w, T=[1])
    np.testing.assert_allclose(dkt.discrete_hessian(th, 0, CENTROID), expected, atol=1e-12)


def test_theta_continuous_across_edges(rng):
    mesh = plate.build_rect_mesh(1, 1, 3, 3)
    w = random_isometric_state(mesh, rng)
    th = dkt.discrete_gradient(w)
    # P2 node values on a shared edge midpoint coincide from both sides
    mid = {}
    for t in range(mesh.n_triangles):
        for k in range(3):
            e = mesh.tri_edges[t, k]
            mid.setdefault(e, []).append(th.nodes[t, 3 + k])
    for vals in mid.values():
        for v in vals[1:]:
            np.testing.assert_allclose(v, vals[0], atol=1e-13)


def test_vertex_consistency(rng):
    mesh = plate.build_rect_mesh(1, 1, 3, 3)
    w = random_isometric_state(mesh, rng)
    th = dkt.discrete_gradient(w)
    np.testing.assert_array_equal(th.nodes[:, :3], w.grads[mesh.triangles])


def test_cylinder_gradient_error_is_second_order():
    u = dkt.cylinder_map(1.0, axis=1)
    mesh = plate.build_rect_mesh(np.pi, 1, 8, 3)
    errs = []
    for _ in range(3):
        errs.append(dkt.gradient_error_l2(dkt.interpolate_dkt(u, mesh), u.grad))
        mesh = plate.uniform_refine(mesh)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_cylinder_second_fundamental_form_at_centroids():
    u = dkt.cylinder_map(1.0, axis=1)
    mesh = plate.build_rect_mesh(np.pi, 1, 8, 3)
    errs = []
    for _ in range(3):
        w = dkt.interpolate_dkt(u, mesh)
        A = dkt.discrete_hessian_all(w, CENTROID)
        n = dkt.discrete_normal(w).evaluate(np.arange(mesh.n_triangles), CENTROID)
        nA = np.einsum("ti,tijk->tjk", n, A)
        errs.append(np.abs(nA + np.diag([1.0, 0.0])).max())
        mesh = plate.uniform_refine(mesh)
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.05


def test_cylinder_is_nodally_isometric():
    w = dkt.interpolate_dkt(dkt.cylinder_map(), plate.build_rect_mesh(np.pi, 1, 5, 2))
    assert np.max(w.isometry_violation()) < 1e-14


def test_normal_examples():
    mesh = plate.build_rect_mesh(np.pi, 1, 2, 1)
    flat = dkt.interpolate_dkt(dkt.affine_map(np.eye(3)[:, :2], np.zeros(3)), mesh)
    np.testing.assert_array_equal(dkt.discrete_normal(flat).values, np.tile([0, 0, 1.0], (mesh.n_vertices, 1)))
    cyl = dkt.interpolate_dkt(dkt.cylinder_map(), mesh)
    n = dkt.discrete_normal(cyl).values
    x = mesh.vertices[:, 0]
    np.testing.assert_allclose(n[np.isclose(x, 0)], [[0, 0, 1]] * 2, atol=1e-15)
    np.testing.assert_allclose(n[np.isclose(x, np.pi / 2)], [[1, 0, 0]] * 2, atol=1e-15)


def test_normal_bound(rng):
    mesh = plate.build_rect_mesh(1, 1, 4, 4)
    w = random_isometric_state(mesh, rng, sigma=0.5)
    nf = dkt.discrete_normal(w)
    np.testing.assert_allclose(np.linalg.norm(nf.values, axis=1), 1.0, atol=1e-14)
    T = rng.integers(0, mesh.n_triangles, 100)
    bary = rng.dirichlet(np.ones(3), size=100)
    norms = [np.linalg.norm(nf.evaluate(t, b)) for t, b in zip(T, bary)]
    assert max(norms) <= 1 + 1e-14


def test_isometry_defect_examples():
    mesh = plate.build_rect_mesh(2, 1, 3, 2)
    R, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((3, 2)))
    assert dkt.isometry_defect(dkt.interpolate_dkt(dkt.affine_map(R, np.ones(3)), mesh)) < 1e-14
    stretch = np.array([[2.0, 0], [0, 1], [0, 0]])
    d = dkt.isometry_defect(dkt.interpolate_dkt(dkt.affine_map(stretch, np.zeros(3)), mesh))
    assert d == pytest.approx(3 * 2, rel=1e-14)


def test_cylinder_defect_shrinks_with_h():
    u = dkt.cylinder_map()
    mesh = plate.build_rect_mesh(np.pi, 1, 4, 2)
    ratios = []
    for _ in range(3):
        w = dkt.interpolate_dkt(u, mesh)
        ratios.append(dkt.isometry_defect(w) / mesh.H)
        mesh = plate.uniform_refine(mesh)
    # the interpolant is O(H^2)-defective, so C from the coarsest level bounds every level
    assert all(r <= ratios[0] for r in ratios)
    np.testing.assert_allclose(np.array(ratios[:-1]) / np.array(ratios[1:]), 2.0, rtol=0.05)


def test_dof_vector_roundtrip(rng):
    mesh = plate.build_rect_mesh(1, 1, 2, 2)
    w = random_isometric_state(mesh, rng)
    back = dkt.DktDeformation.from_vector(mesh, w.to_vector())
    np.testing.assert_array_equal(back.values, w.values)
    np.testing.assert_array_equal(back.grads, w.grads)


def test_export_deformed_surface(tmp_path):
    mesh = plate.build_rect_mesh(np.pi, 1, 4, 2)
    w = dkt.interpolate_dkt(dkt.cylinder_map(), mesh)
    w.export_vtk(tmp_path / "w.vtk")
    text = (tmp_path / "w.vtk").read_text()
    assert "VECTORS normal double" in text


def test_seed_matches_cylinder_formula():
    mesh = plate.build_rect_mesh(1, 1, 2, 2)
    w = minimize.seed_deformation({"kind": "cylinder", "kappa": 1.0, "axis": 1}, mesh)
    s = mesh.vertices
    np.testing.assert_allclose(w.values, np.column_stack([np.sin(s[:, 0]), s[:, 1], np.cos(s[:, 0])]),
                               atol=1e-15)

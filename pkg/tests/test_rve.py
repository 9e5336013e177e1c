import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoscale_plate import materials as mat
from twoscale_plate import rve

A_EXAMPLE = np.array([[0.3, 0.1], [0.1, -0.2]])


def test_sym_basis_orthonormal():
    G = rve.sym_basis()
    np.testing.assert_allclose(np.einsum("kij,lij->kl", G, G), np.eye(3), atol=1e-15)


@pytest.mark.parametrize("A,expected", [
    (np.eye(2), [1, 1, 0]),
    (np.array([[0, 1], [1, 0.0]]), [0, 0, np.sqrt(2)]),
    (rve.sym_basis()[2], [0, 0, 1]),
])
def test_sym_coeffs(A, expected):
    np.testing.assert_allclose(rve.sym_coeffs(A), expected, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_coeff_roundtrip(c):
    np.testing.assert_allclose(rve.sym_coeffs(rve.from_coeffs(np.array(c))), c, atol=1e-12)


def test_qhom_eval_examples():
    assert rve.qhom_eval(np.eye(3), rve.sym_basis()[0]) == pytest.approx(1.0)
    Q = rve.analytic_qhat_isotropic(1.0, 1.0)
    assert rve.qhom_eval(Q, np.eye(2)) == pytest.approx(5 / 9)
    assert rve.qhom_eval(Q, np.array([[0, 1], [-1, 0.0]])) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose([Q[0, 0], Q[0, 1], Q[2, 2]], [2 / 9, 1 / 18, 1 / 6], rtol=1e-14)


def test_build_rve_mesh_basic():
    m = rve.build_rve_mesh((4, 4, 4), mat.homogeneous())
    assert m.n_elements == 64
    assert m.h == pytest.approx(0.25)
    assert rve.build_rve_mesh((2, 2, 2), mat.bilayer()).n_elements == 8


def test_build_rve_mesh_missing_plane():
    with pytest.raises(rve.MeshError, match="y3=0"):
        rve.build_rve_mesh((2, 2, 3), mat.bilayer())


def test_build_rve_mesh_explicit_lines():
    lines = (np.linspace(0, 1, 3), np.linspace(0, 1, 3), np.array([-0.5, -0.2, 0.0, 0.5]))
    m = rve.build_rve_mesh(lines, mat.bilayer())
    assert m.n_elements == 12


@pytest.mark.parametrize("f,expected", [
    (lambda y: np.ones(len(y)), 1.0),
    (lambda y: y[:, 0] * y[:, 1] * y[:, 2], 0.0),
    (lambda y: y[:, 2] ** 2, 1 / 12),
])
def test_micro_integrate(f, expected):
    m = rve.build_rve_mesh((3, 2, 4))
    assert rve.micro_integrate(m, rve.MICRO_RULE, f) == pytest.approx(expected, abs=1e-15)


def test_micro_rule_unisolvent():
    assert rve.q1_unisolvent(rve.MICRO_RULE)
    assert not rve.q1_unisolvent(rve.gauss_tensor(1))


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_homogeneous_cell(gamma):
    out = rve.solve_correctors(mat.homogeneous(), (0, 0), gamma, rve.build_rve_mesh(8))
    np.testing.assert_array_equal(out.Bhat, 0.0)
    assert abs(out.Qhat[0, 0] - 2 / 9) < 2e-3
    assert abs(out.Qhat[0, 1] - 1 / 18) < 2e-3
    assert abs(out.Qhat[2, 2] - 1 / 6) < 1e-3


def test_gamma_independence_for_y_independent_material():
    mesh = rve.build_rve_mesh(4)
    qs = [rve.solve_correctors(mat.homogeneous(1.5, 0.7), (0, 0), g, mesh).Qhat for g in (0.5, 1.0, 2.0)]
    np.testing.assert_allclose(qs[0], qs[1], atol=1e-10)
    np.testing.assert_allclose(qs[2], qs[1], atol=1e-10)


@pytest.mark.parametrize("name", ["homogeneous", "bilayer", "checkerboard", "smooth_lambda"])
def test_prestrain_identity(name):
    spec = mat.CATALOG[name]().with_prestrain(mat.LinearY3Prestrain(A_EXAMPLE))
    out = rve.solve_correctors(spec, (0.1, 0.2), 1.3, rve.build_rve_mesh(2, spec))
    np.testing.assert_allclose(out.Beff, A_EXAMPLE, atol=1e-10)


@pytest.mark.parametrize("rho", [0.1, -0.3])
def test_flat_shape_law(rho):
    spec = mat.homogeneous(prestrain=mat.ScalarPrestrain(rho))
    out = rve.solve_correctors(spec, (0, 0), 1.0, rve.build_rve_mesh(4))
    assert np.abs(out.Beff).max() < 1e-9


def test_bilayer_prestrain_antisymmetry():
    mesh = rve.build_rve_mesh(4, mat.bilayer())
    b1 = rve.solve_correctors(mat.bilayer(rho_top=0.2, rho_bottom=-0.1), (0, 0), 1.0, mesh).Beff
    b2 = rve.solve_correctors(mat.bilayer(rho_top=-0.1, rho_bottom=0.2), (0, 0), 1.0, mesh).Beff
    beta = b1[0, 0]
    np.testing.assert_allclose(b1, beta * np.eye(2), atol=1e-10)
    np.testing.assert_allclose(b2, -b1, atol=1e-10)
    assert beta != 0


def test_galerkin_orthogonality_and_spd():
    spec = mat.checkerboard()
    out = rve.solve_correctors(spec, (0, 0), 1.0, rve.build_rve_mesh(4, spec))
    assert np.abs(out.diagnostics["galerkin_orthogonality"]).max() < 1e-10 * np.abs(out.Qhat).max()
    np.testing.assert_allclose(out.Qhat, out.Qhat.T, atol=1e-14)
    assert np.linalg.eigvalsh(out.Qhat).min() > 0


def test_conforming_monotonicity():
    spec = mat.checkerboard()
    G = rve.from_coeffs(np.array([0.7, -0.2, 0.4]))
    vals = [rve.qhom_eval(rve.solve_correctors(spec, (0, 0), 1.0, rve.build_rve_mesh(n, spec)).Qhat, G)
            for n in (2, 4, 8)]
    assert vals[0] >= vals[1] >= vals[2]


def test_corrector_energy_estimate_bounded():
    # basis correctors have |sym G| = 1, so the H1 norm is the ratio itself
    worst = []
    for n in (2, 4, 8, 16):
        mesh = rve.build_rve_mesh(n)
        out = rve.solve_correctors(mat.checkerboard(), (0, 0), 1.0, mesh)
        worst.append(max(rve.corrector_h1_norm(c, mesh) for c in out.correctors[:3]))
    assert max(worst) <= 2 * min(worst)


def test_smooth_coefficient_order():
    spec = mat.smooth_lambda()
    q = [rve.solve_correctors(spec, (0, 0), 1.0, rve.build_rve_mesh(n)).Qhat[0, 0] for n in (4, 8, 16)]
    order = np.log2(abs(q[0] - q[1]) / abs(q[1] - q[2]))
    assert order >= 1.5

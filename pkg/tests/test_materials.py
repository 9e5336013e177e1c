import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twoscale_plate import materials as mat
from twoscale_plate.materials import IsotropicLame, MaterialError

finite = st.floats(-10, 10, allow_nan=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


def test_apply_elasticity_identity():
    L = IsotropicLame(1.0, 1.0)
    np.testing.assert_allclose(mat.apply_elasticity(L, np.eye(3)), 5 * np.eye(3))
    assert mat.quadratic_form(L, np.eye(3)) == pytest.approx(15.0)


def test_apply_elasticity_skew_is_zero():
    F = np.array([[0, 1, 2], [-1, 0, 3], [-2, -3, 0.0]])
    np.testing.assert_allclose(mat.apply_elasticity(IsotropicLame(0.0, 0.5), F), 0.0)
    assert mat.quadratic_form(IsotropicLame(1.0, 1.0), F) == pytest.approx(0.0)


def test_apply_elasticity_shear():
    E12 = np.zeros((3, 3))
    E12[0, 1] = 1
    np.testing.assert_allclose(mat.apply_elasticity(IsotropicLame(2.0, 3.0), E12), 3 * (E12 + E12.T))


def test_quadratic_form_e33():
    E33 = np.zeros((3, 3))
    E33[2, 2] = 1
    assert mat.quadratic_form(IsotropicLame(2.0, 3.0), E33) == pytest.approx(8.0)


@pytest.mark.parametrize("lam,mu", [(1.0, 0.0), (1.0, -1.0), (-1.0, 0.5), (-2.0, 3.0)])
def test_lame_rejects_non_elliptic(lam, mu):
    with pytest.raises(MaterialError):
        IsotropicLame(lam, mu)


@settings(max_examples=200, deadline=None)
@given(F=mat3, G=mat3)
def test_elasticity_symmetry(F, G):
    L = IsotropicLame(1.3, 0.7)
    a = np.sum(mat.apply_elasticity(L, F) * G)
    b = np.sum(mat.apply_elasticity(L, G) * F)
    c = np.sum(mat.apply_elasticity(L, mat.sym(F)) * mat.sym(G))
    scale = 1 + np.abs(F).max() * np.abs(G).max()
    assert abs(a - b) < 1e-12 * scale
    assert abs(a - c) < 1e-12 * scale


@pytest.mark.parametrize("lam,mu", [(1.0, 1.0), (0.1, 2.0), (-0.5, 1.0), (5.0, 0.3)])
def test_ellipticity_bounds(lam, mu, rng):
    L = IsotropicLame(lam, mu)
    c0 = L.ellipticity_constant
    for _ in range(200):
        G = rng.standard_normal((3, 3))
        G = 0.5 * (G + G.T)
        q, n2 = mat.quadratic_form(L, G), np.sum(G * G)
        assert n2 / c0 - 1e-12 <= q <= c0 * n2 + 1e-12


def test_iota():
    np.testing.assert_array_equal(mat.iota([[1, 2], [3, 4]]), [[1, 2, 0], [3, 4, 0], [0, 0, 0]])
    np.testing.assert_array_equal(mat.iota(np.zeros((2, 2))), np.zeros((3, 3)))
    np.testing.assert_array_equal(mat.iota(np.eye(2)), np.diag([1.0, 1.0, 0.0]))


def test_sample_homogeneous():
    smp = mat.homogeneous().sample((0.3, 0.4), (0.2, 0.7, 0.1))
    assert (smp.lame.lam, smp.lame.mu) == (1.0, 1.0)
    np.testing.assert_array_equal(smp.prestrain, 0.0)


def test_sample_bilayer_top():
    spec = mat.bilayer(rho_top=0.1)
    smp = spec.sample((0, 0), (0.5, 0.5, 0.25))
    np.testing.assert_allclose(smp.prestrain, 0.1 * np.eye(3))


def test_y3_linear_rule():
    rule = mat.LinearY3Prestrain(np.eye(2))
    np.testing.assert_allclose(rule.values(np.array([[0.3, 0.3, -0.5]]))[0], -0.5 * mat.iota(np.eye(2)))


def test_sample_errors():
    spec = mat.bilayer()
    with pytest.raises(MaterialError, match="outside"):
        spec.sample((0, 0), (0.5, 0.5, 0.7))
    with pytest.raises(MaterialError, match="face"):
        spec.sample((0, 0), (0.5, 0.5, 0.0))
    assert spec.sample((0, 0), (0.5, 0.5, 0.0), hint=1) is not None


@pytest.mark.parametrize("name", sorted(mat.CATALOG))
def test_catalog_tiles_the_cell(name):
    spec = mat.CATALOG[name]()
    assert sum(mat.region_volumes(spec)) == pytest.approx(1.0, abs=1e-14)
    assert spec.validate(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])) == []


def test_validate_detects_gaps_and_overlaps():
    half = mat.Region(mat.RegionBox((0, 0, -0.5), (1, 1, 0)), IsotropicLame(1, 1), mat.ZERO_PRESTRAIN)
    with pytest.raises(MaterialError, match="tile"):
        mat.MaterialSpec([half]).validate()
    full = mat.Region(mat.RegionBox((0, 0, -0.5), (1, 1, 0.5)), IsotropicLame(1, 1), mat.ZERO_PRESTRAIN)
    with pytest.raises(MaterialError):
        mat.MaterialSpec([full, half, half]).validate()


def test_graded_bilayer_macro_key():
    spec = mat.graded_bilayer(slope=(0.3, 0.0))
    assert spec.macro_key((0.2, 0.1)) == spec.macro_key((0.2, 0.9))
    assert spec.macro_key((0.2, 0.1)) != spec.macro_key((0.4, 0.1))
    assert not spec.s_constant


def test_from_config_prestrain_override():
    spec = mat.from_config({"catalog": "checkerboard", "prestrain": {"kind": "scalar", "rho": 0.2}})
    smp = spec.sample((0, 0), (0.25, 0.25, 0.25))
    np.testing.assert_allclose(smp.prestrain, 0.2 * np.eye(3))
    with pytest.raises(MaterialError):
        mat.from_config({"catalog": "nope"})
    with pytest.raises(MaterialError):
        mat.from_config({"catalog": "homogeneous", "stiffness": 3})

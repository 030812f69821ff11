import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fredholm_lab.errors import ConfigurationError, GeometryError
from fredholm_lab.lattice import (LatticeGeometry, LatticeOperator, decay_fit, dump_operator, embed_half_space,
                                  flux_phase, heaviside, load_operator, nc_derivative, restrict_half_space,
                                  site_index, step_operator)
from fredholm_lab.models import ModelSpec, build_bulk
from fredholm_lab.spectral import fermi_projection


def test_heaviside_convention():
    assert np.array_equal(heaviside(np.array([-2, -1, 0, 1])), [0.0, 0.0, 1.0, 1.0])


def test_square_coordinates_and_ordering():
    g = LatticeGeometry.square(4, 2)
    assert g.x1_range == (-2, 1) and g.x2_range == (-2, 1)
    assert g.dim == 32
    # x2-major, then x1, then internal
    assert site_index(g, -2, -2, 1) == 1
    assert site_index(g, -1, -2, 0) == 2
    assert site_index(g, -2, -1, 0) == 8
    with pytest.raises(GeometryError):
        site_index(g, 2, 0)


def test_bulk_must_contain_origin():
    with pytest.raises(GeometryError):
        LatticeGeometry("bulk", (0, 3), (-2, 1))
    with pytest.raises(GeometryError):
        LatticeGeometry("half-space", (-2, 1), (1, 3))


def test_strip_and_covering_bulk():
    s = LatticeGeometry.strip(6, 4, 2)
    assert s.x2_range == (0, 3) and s.n1 == 6
    b = s.covering_bulk()
    assert b.x2_range == (-4, 3) and b.x1_range == s.x1_range


def test_geometry_roundtrip():
    g = LatticeGeometry("bulk", (-3, 2), (-2, 1), 4, periodic=(True, False))
    assert LatticeGeometry.from_dict(g.to_dict()) == g


def test_site_distance_metrics():
    g = LatticeGeometry.square(6, 1, periodic=True)
    i, j = site_index(g, -3, -3), site_index(g, 2, 0)
    # minimum image: dx = 1, dy = 3
    assert g.site_distance()[i, j] == pytest.approx(np.hypot(1, 3))
    assert g.site_distance("chebyshev")[i, j] == 3
    assert g.site_distance("manhattan")[i, j] == 4
    with pytest.raises(ConfigurationError):
        g.site_distance("taxicab")


def test_operator_is_frozen_and_hermiticity_measured():
    g = LatticeGeometry.square(4, 1)
    A = LatticeOperator(g, np.eye(g.dim))
    assert A.hermitian
    with pytest.raises(ValueError):
        A.matrix[0, 0] = 2
    B = LatticeOperator(g, np.triu(np.ones((g.dim, g.dim))))
    assert not B.hermitian
    with pytest.raises(GeometryError):
        LatticeOperator(g, np.eye(3))


def test_operator_algebra():
    g = LatticeGeometry.square(4, 1)
    A = LatticeOperator(g, np.arange(g.dim ** 2).reshape(g.dim, g.dim))
    I = LatticeOperator.identity(g)
    assert np.allclose((A @ I).matrix, A.matrix)
    assert np.allclose((A + A - 2 * A).matrix, 0)
    assert np.allclose(A.dagger().matrix, A.matrix.T)
    other = LatticeOperator.identity(LatticeGeometry.square(6, 1))
    with pytest.raises(GeometryError):
        A @ other


def test_flux_phase_example_value():
    g = LatticeGeometry.square(4, 1)
    U = flux_phase(g)
    assert U.matrix[site_index(g, 0, 0), site_index(g, 0, 0)] == pytest.approx(np.exp(1j * np.pi / 4))
    assert np.allclose(np.abs(np.diag(U.matrix)), 1.0)
    assert np.allclose(flux_phase(g, -1).matrix, U.matrix.conj())


def test_flux_phase_branch_point_on_site_rejected():
    g = LatticeGeometry("bulk", (-2, 1), (-2, 1), 1, origin_offset=(0.0, 0.0))
    with pytest.raises(ConfigurationError):
        flux_phase(g)


def test_nc_derivative_of_shift_sits_on_the_cut():
    g = LatticeGeometry.square(4, 1)
    S = np.zeros((g.dim, g.dim))
    for x1 in range(-2, 1):
        for x2 in range(-2, 2):
            S[site_index(g, x1 + 1, x2), site_index(g, x1, x2)] = 1
    d = nc_derivative(1, LatticeOperator(g, S)).matrix
    rows, cols = np.nonzero(np.abs(d) > 0)
    assert set(g.site_x1[cols]) == {-1} and set(g.site_x1[rows]) == {0}
    assert np.allclose(d[rows, cols], -1j)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([1, 2]))
def test_nc_derivative_leibniz(seed, axis):
    rng = np.random.default_rng(seed)
    g = LatticeGeometry.square(4, 2)
    A = LatticeOperator(g, rng.normal(size=(g.dim, g.dim)))
    B = LatticeOperator(g, rng.normal(size=(g.dim, g.dim)) * 1j)
    lhs = nc_derivative(axis, A @ B).matrix
    rhs = (nc_derivative(axis, A) @ B + A @ nc_derivative(axis, B)).matrix
    assert np.allclose(lhs, rhs)


def test_step_operator_is_projection():
    g = LatticeGeometry.square(4, 2)
    L = step_operator(g, 2).matrix
    assert np.allclose(L @ L, L)


def test_embed_restrict_roundtrip(rng):
    s = LatticeGeometry.strip(4, 3, 2)
    b = s.covering_bulk()
    A = LatticeOperator(s, rng.normal(size=(s.dim, s.dim)))
    assert np.allclose(restrict_half_space(embed_half_space(A, b), s).matrix, A.matrix)


def test_decay_fit_of_fermi_projection(qwz_torus8):
    fit = decay_fit(fermi_projection(qwz_torus8))
    assert fit.ok and fit.rate > 0.3


def test_decay_fit_zero_and_unknown_model():
    g = LatticeGeometry.square(4, 1)
    assert decay_fit(LatticeOperator.zeros(g)).status == "numerically-zero"
    with pytest.raises(ConfigurationError):
        decay_fit(LatticeOperator.zeros(g), "gaussian")
    with pytest.raises(ConfigurationError):
        decay_fit(LatticeOperator.zeros(g), "loc2-exponential")


def test_decay_fit_identifies_exponential_rate():
    g = LatticeGeometry.square(10, 1, periodic=True)
    m = np.exp(-0.7 * g.site_distance())
    fit = decay_fit(LatticeOperator(g, m))
    assert fit.rate == pytest.approx(0.7, abs=1e-8)
    assert fit.max_residual < 1e-6


def test_dump_load_roundtrip(tmp_path):
    g = LatticeGeometry.square(4, 2, periodic=True)
    H = build_bulk(ModelSpec("qwz", 1.0), None, g)
    path = tmp_path / "h.json"
    dump_operator(H, str(path))
    H2 = load_operator(str(path))
    assert H2.geometry == g and np.array_equal(H2.matrix, H.matrix)

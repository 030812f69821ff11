import numpy as np
import pytest

from fredholm_lab.errors import ConfigurationError, GapViolationError, NotHermitianError
from fredholm_lab.lattice import LatticeGeometry, LatticeOperator
from fredholm_lab.models import ModelSpec, build_bulk
from fredholm_lab.spectral import (CutoffSwitch, SwitchFunction, apply_function_eig, apply_function_hs,
                                   combes_thomas_check, default_switch, eig_hermitian, eigvals_hermitian,
                                   fermi_projection, matrix_blocks, resolvent, spectral_gap)


def test_eigendecomposition_residuals(qwz_torus8):
    eig = eig_hermitian(qwz_torus8)
    res, orth = eig.residuals(qwz_torus8)
    assert res < 1e-10 and orth < 1e-10
    assert np.all(np.diff(eig.eigenvalues) >= 0)


def test_block_structure_is_used_and_consistent():
    g = LatticeGeometry.square(4, 1)
    m = np.zeros((g.dim, g.dim))
    m[:8, :8] = 1.0
    m[8:, 8:] = np.eye(8) * 2
    blocks = matrix_blocks(m)
    assert sorted(sum(len(b) for b in blocks) for _ in [0]) == [g.dim]
    assert len(blocks) > 1
    w = eigvals_hermitian(LatticeOperator(g, m))
    assert np.allclose(w, np.linalg.eigvalsh(m))


def test_non_hermitian_rejected():
    g = LatticeGeometry.square(4, 1)
    with pytest.raises(NotHermitianError):
        eig_hermitian(LatticeOperator(g, np.triu(np.ones((g.dim, g.dim)))))


def test_spectral_gap_of_qwz_matches_kspace(qwz_torus8):
    gap = spectral_gap(qwz_torus8)
    assert not gap.contains_zero
    assert gap.gap_lower < 0 < gap.gap_upper
    assert gap.width == pytest.approx(2.0, abs=1e-8)


def test_spectral_gap_closed_and_resolution():
    w = np.array([-1.0, 0.0, 1.0])
    assert spectral_gap(w).contains_zero
    assert spectral_gap(np.array([-0.01, 0.01]), resolution=0.1).contains_zero
    assert not spectral_gap(np.array([-0.01, 0.01])).contains_zero


def test_fermi_projection_idempotent(qwz_torus8):
    P = fermi_projection(qwz_torus8).matrix
    assert np.allclose(P @ P, P)
    assert np.trace(P).real == pytest.approx(qwz_torus8.geometry.dim / 2)


def test_fermi_projection_on_eigenvalue_raises():
    g = LatticeGeometry.square(4, 1)
    with pytest.raises(GapViolationError):
        fermi_projection(LatticeOperator(g, np.zeros((g.dim, g.dim))))


def test_switch_function_shape_and_smoothness():
    s = SwitchFunction(-0.5, 0.5)
    E = np.linspace(-2, 2, 401)
    v = s(E)
    assert np.all(v[E <= -0.5] == 1.0) and np.all(v[E >= 0.5] == 0.0)
    assert np.all(np.diff(v) <= 1e-15)
    assert s(np.array([0.0]))[0] == pytest.approx(0.5)
    # first derivative matches finite differences
    x = np.linspace(-0.45, 0.45, 19)
    h = 1e-6
    fd = (s(x + h) - s(x - h)) / (2 * h)
    assert np.allclose(s.derivative(x, 1), fd, atol=1e-6)
    with pytest.raises(ConfigurationError):
        SwitchFunction(1.0, 0.0)


def test_default_switch_sits_inside_gap(qwz_torus8):
    gap = spectral_gap(qwz_torus8)
    s = default_switch(gap)
    a, b = s.a, s.b
    assert gap.gap_lower < a < b < gap.gap_upper
    assert b - a == pytest.approx(0.8 * gap.width)


def test_switch_of_h_equals_projection_for_gapped_h(qwz_torus8):
    s = default_switch(spectral_gap(qwz_torus8))
    assert np.allclose(apply_function_eig(qwz_torus8, s).matrix, fermi_projection(qwz_torus8).matrix)


def test_cutoff_switch_rejects_bad_cutoff():
    with pytest.raises(ConfigurationError):
        CutoffSwitch(SwitchFunction(-0.5, 0.5), lower=0.0)


def test_helffer_sjostrand_small_instance():
    H = build_bulk(ModelSpec("qwz", 3.0), None, LatticeGeometry.square(4, 2, periodic=True))
    s = default_switch(spectral_gap(H))
    err = np.max(np.abs(apply_function_hs(H, s).matrix - apply_function_eig(H, s).matrix))
    assert err < 1e-5


def test_resolvent_inverts(qwz_torus8):
    z = 0.3 + 0.5j
    R = resolvent(qwz_torus8, z).matrix
    assert np.allclose(R @ (qwz_torus8.matrix - z * np.eye(len(R))), np.eye(len(R)))


def test_combes_thomas_rates_increase(qwz_torus8):
    fits = combes_thomas_check(qwz_torus8, [0.25j, 0.5j, 1.0j])
    rates = [f.rate for f in fits]
    assert all(f.ok for f in fits)
    assert rates == sorted(rates)

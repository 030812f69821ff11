import numpy as np
import pytest

from fredholm_lab.errors import ConfigurationError, OracleError
from fredholm_lab.models import DisorderSpec, ModelSpec
from fredholm_lab.oracles import (BlochGrid, brute_force_kernel, bulk_gap_kspace, chern_berry,
                                  edge_spectral_flow, pfaffian, z2_pfaffian_trim)


@pytest.mark.parametrize("u,c", [(-3.0, 0), (-1.0, -1), (1.0, 1), (3.0, 0)])
def test_qwz_chern_numbers(u, c):
    assert chern_berry(ModelSpec("qwz", u)) == c


def test_chern_berry_gapless_raises():
    with pytest.raises(OracleError):
        chern_berry(ModelSpec("qwz", 0.0))


def test_bloch_grid_minimum_size():
    with pytest.raises(ConfigurationError):
        BlochGrid(16, ModelSpec("qwz", 1.0))


def test_oracles_need_clean_model():
    from fredholm_lab.oracles import bloch_hamiltonian
    with pytest.raises(OracleError):
        bloch_hamiltonian(ModelSpec("qwz", 1.0), (0.0, 0.0), DisorderSpec(0.5))


def test_kspace_gap():
    lo, hi = bulk_gap_kspace(ModelSpec("qwz", 3.0))
    assert lo == pytest.approx(-1.0, abs=1e-9) and hi == pytest.approx(1.0, abs=1e-9)


def test_pfaffian_squared_is_determinant(rng):
    for n in (2, 4, 6, 10):
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        A = a - a.T
        assert pfaffian(A) ** 2 == pytest.approx(np.linalg.det(A), rel=1e-9)
    J = np.array([[0, 1], [-1, 0]])
    assert pfaffian(J) == pytest.approx(1.0)
    assert pfaffian(np.zeros((3, 3))) == 0
    with pytest.raises(ValueError):
        pfaffian(np.eye(2))


@pytest.mark.parametrize("u,z", [(-3.0, 0), (-1.0, 1), (1.0, 1), (3.0, 0)])
def test_bhz_z2_pfaffian_and_spectral_flow(u, z):
    model = ModelSpec("bhz", u)
    assert z2_pfaffian_trim(model) == z
    assert edge_spectral_flow(model, 16) == z


def test_pfaffian_oracle_gauge_independent():
    model = ModelSpec("bhz", -1.0)
    rng = np.random.default_rng(5)
    rot = {}
    for k in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        q = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
        rot[k] = q
    assert z2_pfaffian_trim(model, frame_rotations=rot) == 1


def test_pfaffian_oracle_rejects_chiral_model():
    with pytest.raises(OracleError):
        z2_pfaffian_trim(ModelSpec("qwz", 1.0))


def test_spectral_flow_rejects_mu_outside_gap():
    with pytest.raises(ConfigurationError):
        edge_spectral_flow(ModelSpec("bhz", -1.0), 16, mu=5.0)


def test_brute_force_kernel(rng):
    U = np.linalg.qr(rng.normal(size=(10, 10)))[0]
    s = np.array([0, 0, 0] + [0.5] * 7)
    assert brute_force_kernel(U @ np.diag(s) @ U.T) == 3

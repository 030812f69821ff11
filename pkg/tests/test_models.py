import numpy as np
import pytest

from fredholm_lab.errors import ConfigurationError
from fredholm_lab.lattice import LatticeGeometry, site_index
from fredholm_lab.models import (BoundaryCondition, DisorderSpec, ModelSpec, build_bulk, build_edge,
                                 disorder_field, doubled_model, edge_potential, model_hoppings)
from fredholm_lab.oracles import bloch_hamiltonian
from fredholm_lab.spectral import eigvals_hermitian
from fredholm_lab.symmetry import standard_tr


@pytest.mark.parametrize("family,N", [("qwz", 2), ("bhz", 4)])
def test_torus_spectrum_matches_bloch(family, N):
    model = ModelSpec(family, 1.0)
    L = 6
    H = build_bulk(model, None, LatticeGeometry.square(L, N, periodic=True))
    ks = 2 * np.pi * np.arange(L) / L
    ref = np.sort(np.concatenate([np.linalg.eigvalsh(bloch_hamiltonian(model, (k1, k2))) for k1 in ks for k2 in ks]))
    assert np.allclose(eigvals_hermitian(H), ref, atol=1e-10)


def test_onsite_term_is_hermitian():
    hop = model_hoppings(ModelSpec("bhz", -1.0, inter_block=0.2))
    assert set(hop) == {(0, 0), (1, 0), (0, 1)}
    assert np.allclose(hop[(0, 0)], hop[(0, 0)].conj().T)


def test_unknown_family_rejected():
    with pytest.raises(ConfigurationError):
        model_hoppings(ModelSpec("haldane", 1.0))


def test_disorder_keyed_by_coordinates():
    d = DisorderSpec(0.5, seed=3)
    small = LatticeGeometry.square(4, 2)
    big = LatticeGeometry.square(8, 2)
    vs, vb = disorder_field(small, d), disorder_field(big, d)
    for x1 in range(-2, 2):
        for x2 in range(-2, 2):
            i, j = site_index(small, x1, x2), site_index(big, x1, x2)
            assert vs[i // 2] == vb[j // 2]
    assert np.all(np.abs(vb) <= 0.5)
    assert not np.array_equal(vb, disorder_field(big, DisorderSpec(0.5, seed=4)))


def test_disorder_keeps_time_reversal():
    g = LatticeGeometry.square(4, 4, periodic=True)
    H = build_bulk(ModelSpec("bhz", -1.0), DisorderSpec(1.0, seed=1), g)
    th = standard_tr(g)
    assert np.allclose(th.conjugate(H.matrix), H.matrix)


def test_dirichlet_edge_is_restriction():
    model = ModelSpec("qwz", -1.0)
    strip = LatticeGeometry.strip(6, 4, 2)
    Hb = build_bulk(model, None, strip.covering_bulk())
    Hhat = build_edge(model, None, strip)
    idx = [site_index(strip.covering_bulk(), x1, x2, s) for x2 in range(0, 4) for x1 in range(-3, 3) for s in range(2)]
    assert np.allclose(Hhat.matrix, Hb.matrix[np.ix_(idx, idx)])


def test_edge_potential_is_local_and_hermitian():
    strip = LatticeGeometry.strip(6, 6, 2)
    bc = edge_potential(strip, 0.5, 0.3, depth=2)
    assert isinstance(bc, BoundaryCondition)
    P = bc.perturbation.matrix
    assert np.allclose(P, P.conj().T)
    rows = np.nonzero(np.abs(P).sum(axis=1) > 0)[0]
    assert set(strip.site_x2[rows // 2]) == {0, 1}


def test_doubled_model_commutes_with_doubled_tr():
    g = LatticeGeometry.square(4, 2, periodic=True)
    H = build_bulk(ModelSpec("qwz", -1.0), None, g)
    Ht, tht = doubled_model(H, standard_tr(g))
    assert Ht.geometry.n_internal == 4
    assert np.allclose(tht.conjugate(Ht.matrix), Ht.matrix)

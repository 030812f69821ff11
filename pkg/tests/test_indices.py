import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fredholm_lab.errors import AmbiguityError, ConfigurationError
from fredholm_lab.indices import (FLUX_ORIENTATION, IndexResult, bulk_flux_operator, chern_kubo, default_radius,
                                  disk_region, fedosov_sequence, fredholm_index_fedosov, kernel_dim_trace_limit,
                                  near_kernel_modes, z2_localized_count)
from fredholm_lab.lattice import LatticeGeometry, LatticeOperator
from fredholm_lab.models import ModelSpec, build_bulk
from fredholm_lab.oracles import brute_force_kernel
from fredholm_lab.spectral import fermi_projection


def _planted(rng, n, k, smin=0.1):
    U = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))[0]
    V = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))[0]
    s = np.concatenate([np.zeros(k), rng.uniform(smin, 1.0, n - k)])
    return U @ np.diag(s) @ V.conj().T


def test_flux_orientation_is_a_sign():
    assert FLUX_ORIENTATION in (-1, 1)


def test_default_region_is_ellipse_about_plaquette_centre():
    g = LatticeGeometry("bulk", (-8, 7), (-4, 3), 1)
    assert default_radius(g) == (4.0, 2.0)
    mask = disk_region(g) > 0
    x1, x2 = g.coordinate(1)[mask], g.coordinate(2)[mask]
    assert np.all(((x1 + 0.5) / 4) ** 2 + ((x2 + 0.5) / 2) ** 2 <= 1 + 1e-12)
    assert mask.sum() > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(6, 30), st.data())
def test_trace_limit_recovers_planted_kernel(seed, n, data):
    k = data.draw(st.integers(0, n // 2))
    A = _planted(np.random.default_rng(seed), n, k)
    r = kernel_dim_trace_limit(A)
    assert r.value == k == brute_force_kernel(A)
    raws = [v for _, v in r.history]
    assert all(b <= a + 1e-12 for a, b in zip(raws, raws[1:]))
    assert r.diagnostics["z2"] == k % 2


def test_trace_limit_rejects_non_contraction():
    with pytest.raises(ConfigurationError):
        kernel_dim_trace_limit(2 * np.eye(3))


def test_fedosov_of_unitary_is_zero(rng):
    g = LatticeGeometry.square(4, 2)
    U = np.linalg.qr(rng.normal(size=(g.dim, g.dim)) + 1j * rng.normal(size=(g.dim, g.dim)))[0]
    r = fredholm_index_fedosov(LatticeOperator(g, U), n_start=1, n_max=1)
    assert r.value == 0 and abs(r.raw) < 1e-10


def test_fedosov_sequence_sees_only_the_kernel_inside_the_region():
    # open-line shift x1 -> x1 + 1: kernel at the right end, cokernel at the left end
    g = LatticeGeometry("bulk", (-6, 5), (-2, 1), 1)
    S = np.zeros((g.dim, g.dim))
    for i in range(g.dim):
        if g.site_x1[i] < 5:
            S[i + 1, i] = 1.0
    region = (g.coordinate(1) >= 0).astype(float)
    seq = fedosov_sequence(LatticeOperator(g, S), [1, 2, 4], region=region)
    assert all(abs(v - g.n2) < 1e-12 for _, v in seq)


def test_qwz_flux_index_and_kubo(qwz_torus12):
    P = fermi_projection(qwz_torus12)
    r = fredholm_index_fedosov(bulk_flux_operator(P))
    assert isinstance(r, IndexResult) and r.converged
    assert r.value == -1
    assert round(chern_kubo(P)) == -1
    assert set(r.diagnostics) >= {"sigma_min", "decayed_mass"}


def test_near_kernel_gap_policy():
    s = np.diag([1e-9, 2e-9, 0.3, 0.6, 0.9])
    spec = near_kernel_modes(s)
    assert spec.cluster_size == 2 and spec.status == "ok"
    unclear = near_kernel_modes(np.diag([0.1, 0.2, 0.3, 0.4, 0.9]))
    assert unclear.status != "ok"


def test_z2_count_raises_on_unseparated_cluster():
    g = LatticeGeometry.square(4, 2)
    A = LatticeOperator(g, np.diag(np.linspace(0.01, 0.45, g.dim)))
    with pytest.raises(AmbiguityError):
        z2_localized_count(A)


def test_z2_count_of_localized_kernel():
    g = LatticeGeometry.square(6, 2)
    d = np.ones(g.dim)
    inside = np.nonzero(disk_region(g))[0]
    d[inside[:3]] = 0.0
    r = z2_localized_count(LatticeOperator(g, np.diag(d)))
    assert r.value == 1 and r.kind == "Z2"

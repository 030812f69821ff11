"""Independent reference values for clean, translation-invariant models.

Nothing here imports the index engines; the only shared code is the model
hopping table and the lattice/eig plumbing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguityError, ConfigurationError, IntegrityError, OracleError
from .models import DisorderSpec, ModelSpec, model_hoppings

__all__ = [
    "BlochGrid",
    "bloch_hamiltonian",
    "bulk_gap_kspace",
    "chern_berry",
    "pfaffian",
    "z2_pfaffian_trim",
    "strip_bloch_hamiltonian",
    "edge_spectral_flow",
    "brute_force_kernel",
    "ResolutionWarning",
    "TR_BLOCK",
]

TR_BLOCK = np.array([[0.0, 1.0], [-1.0, 0.0]])


class ResolutionWarning(UserWarning):
    """A singular value sits close to the kernel threshold."""


@dataclass(frozen=True)
class BlochGrid:
    """Uniform k-grid covering ``[−π, π)²``."""

    n_k: int
    model: ModelSpec

    def __post_init__(self):
        if self.n_k < 32:
            raise ConfigurationError("curvature integration needs n_k >= 32")

    @property
    def ks(self) -> np.ndarray:
        return -np.pi + 2 * np.pi * np.arange(self.n_k) / self.n_k


def _tr_block(model: ModelSpec) -> np.ndarray:
    return np.kron(TR_BLOCK, np.eye(model.n_internal // 2))


def bloch_hamiltonian(model: ModelSpec, k, disorder: Optional[DisorderSpec] = None) -> np.ndarray:
    """Fourier transform ``h(k) = T₀ + Σ_d (T_d e^{−ik·d} + h.c.)``."""
    if disorder is not None and disorder.amplitude > 0:
        raise OracleError("Bloch oracles need a clean model")
    k1, k2 = k
    hops = model_hoppings(model)
    h = hops[(0, 0)].astype(complex).copy()
    for (d1, d2), T in hops.items():
        if (d1, d2) == (0, 0):
            continue
        ph = np.exp(-1j * (k1 * d1 + k2 * d2))
        h = h + T * ph + T.conj().T * np.conj(ph)
    return h


def bulk_gap_kspace(model: ModelSpec, n_k: int = 256) -> tuple[float, float]:
    """(top of occupied bands, bottom of empty bands) over an ``n_k²`` grid; half filling."""
    ks = -np.pi + 2 * np.pi * np.arange(n_k) / n_k
    n_occ = model.n_internal // 2
    top, bottom = -np.inf, np.inf
    for k1 in ks:
        hs = np.array([bloch_hamiltonian(model, (k1, k2)) for k2 in ks])
        w = np.linalg.eigvalsh(hs)
        top = max(top, w[:, n_occ - 1].max())
        bottom = min(bottom, w[:, n_occ].min())
    return float(top), float(bottom)


def _occupied_frames(model: ModelSpec, k1s, k2s, n_occ: int, min_gap: float = 1e-6) -> np.ndarray:
    frames = np.empty((len(k1s), len(k2s), model.n_internal, n_occ), dtype=complex)
    for i, k1 in enumerate(k1s):
        hs = np.array([bloch_hamiltonian(model, (k1, k2)) for k2 in k2s])
        w, v = np.linalg.eigh(hs)
        if np.min(w[:, n_occ] - w[:, n_occ - 1]) < min_gap:
            raise OracleError(f"model is gapless at half filling near k1={k1:.3f}")
        frames[i] = v[:, :, :n_occ]
    return frames


def chern_berry(model: ModelSpec, n_k: int = 64) -> int:
    """Chern number of the occupied bands by lattice link variables.

    Returns the integer sum of plaquette Berry fluxes divided by 2π.  This
    value fixes the sign convention of the whole package.
    """
    grid = BlochGrid(n_k, model)
    ks = grid.ks
    n_occ = model.n_internal // 2
    u = _occupied_frames(model, ks, ks, n_occ)

    def link(a, b):
        return np.linalg.det(np.einsum("...ji,...jk->...ik", a.conj(), b))

    u1 = link(u, np.roll(u, -1, axis=0))
    u2 = link(u, np.roll(u, -1, axis=1))
    flux = np.angle(u1 * np.roll(u2, -1, axis=0) / (np.roll(u1, -1, axis=1) * u2))
    c = flux.sum() / (2 * np.pi)
    if abs(c - round(c)) > 1e-6:
        raise OracleError(f"Berry sum {c} is not an integer")
    return int(round(c))


def pfaffian(A: np.ndarray) -> complex:
    """Pfaffian of a skew-symmetric matrix by Parlett-Reid elimination with pivoting."""
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("pfaffian needs a square matrix")
    if np.max(np.abs(A + A.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(A), initial=0.0)):
        raise ValueError("matrix is not skew-symmetric")
    if n % 2:
        return 0.0 + 0.0j
    pf = 1.0 + 0.0j
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(A[k + 1:, k])))
        if kp != k + 1:
            A[[k + 1, kp], k:] = A[[kp, k + 1], k:]
            A[k:, [k + 1, kp]] = A[k:, [kp, k + 1]]
            pf = -pf
        if A[k + 1, k] == 0:
            return 0.0 + 0.0j
        pf *= A[k, k + 1]
        if k + 2 < n:
            tau = A[k, k + 2:] / A[k, k + 1]
            col = A[k + 2:, k + 1].copy()
            A[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return pf


def _polar(m: np.ndarray) -> np.ndarray:
    x, _, yh = np.linalg.svd(m)
    return x @ yh


def _transport(frames: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Parallel transport of ``start`` through the subspaces spanned by ``frames``."""
    out = np.empty_like(frames)
    out[0] = frames[0] @ _polar(frames[0].conj().T @ start)
    for j in range(1, len(frames)):
        out[j] = frames[j] @ _polar(frames[j].conj().T @ out[j - 1])
    return out


def z2_pfaffian_trim(model: ModelSpec, n_k: int = 64,
                     frame_rotations: Optional[dict] = None) -> int:
    """Fu-Kane ℤ₂ from sewing-matrix Pfaffians at the four TRIM.

    Gauge protocol
    --------------
    1. Parallel-transport the occupied frame along ``k1 ∈ [−π, π]`` at
       ``k2 = 0`` and spread the holonomy over the loop, giving a smooth
       periodic gauge on that line.
    2. Parallel-transport every frame of that line along ``k2 ∈ [0, π]``;
       the result is one continuous gauge on the half cylinder, so both
       time-reversal-invariant lines carry the same winding.
    3. On each line ``k2 ∈ {0, π}`` compute ``w(k1) = U(−k)† C conj(U(k))``
       for ``k1 ∈ [0, π]``, continue ``√det w`` by phase unwrapping from
       ``k1 = 0`` and multiply ``Pf w / √det w`` at both ends.

    The product over the four TRIM is ``(−1)^ν``.

    Parameters
    ----------
    frame_rotations : dict, optional
        Maps a TRIM ``(i, j)`` (``i, j ∈ {0, 1}`` for ``0`` or ``π``) to a
        unitary applied to the raw eigenframe there; used to test gauge
        independence.
    """
    if not model.time_reversal_invariant:
        raise OracleError("z2_pfaffian_trim needs a time-reversal-invariant model")
    if n_k % 4:
        raise ConfigurationError("n_k must be a multiple of 4")
    N = model.n_internal
    n_occ = N // 2
    C = _tr_block(model)
    k1s = -np.pi + 2 * np.pi * np.arange(n_k + 1) / n_k      # includes both −π and π
    half = n_k // 2
    k2s = np.pi * np.arange(half + 1) / half                 # 0 .. π
    raw = _occupied_frames(model, k1s, k2s, n_occ)
    if frame_rotations:
        for (i, j), R in frame_rotations.items():
            cols = [half] if i == 0 else [0, n_k]
            for c in cols:
                raw[c, 0 if j == 0 else half] = raw[c, 0 if j == 0 else half] @ R
    # step 1: periodic smooth gauge along k2 = 0
    line = _transport(raw[:, 0], raw[0, 0])
    hol = line[0].conj().T @ line[-1]
    theta, Q = np.linalg.eig(hol)
    phases = np.angle(theta)
    for j in range(n_k + 1):
        line[j] = line[j] @ (Q * np.exp(-1j * phases * j / n_k)) @ np.linalg.inv(Q)
    # step 2: transport in k2 at every k1
    gauge = np.empty_like(raw)
    for j in range(n_k + 1):
        gauge[j] = _transport(raw[j], line[j])
    gauge[-1] = gauge[0]
    # step 3: sewing matrices on both lines
    product = 1.0 + 0.0j
    for j2 in (0, half):
        idx = np.arange(half, n_k + 1)                        # k1 from 0 to π
        mirror = n_k - idx                                    # −k1
        w = np.einsum("kim,ij,kjn->kmn", gauge[mirror, j2].conj(), C, gauge[idx, j2].conj())
        det = np.linalg.det(w)
        sqrt_det = np.sqrt(np.abs(det)) * np.exp(0.5j * np.unwrap(np.angle(det)))
        for end in (0, -1):
            wt = w[end]
            pf = pfaffian(0.5 * (wt - wt.T))
            if abs(pf) < 1e-8:
                raise OracleError("sewing-matrix Pfaffian vanishes; perturb the grid")
            product *= pf / sqrt_det[end]
    if abs(abs(product) - 1) > 1e-6 or abs(product.imag) > 1e-6:
        raise IntegrityError(f"Pfaffian product {product} is not ±1")
    return 0 if product.real > 0 else 1


def strip_bloch_hamiltonian(model: ModelSpec, width: int, k1: float) -> np.ndarray:
    """Strip Hamiltonian at momentum ``k1`` (periodic x1, rows ``0..width−1``)."""
    hops = model_hoppings(model)
    N = model.n_internal
    ph = np.exp(-1j * k1)
    onsite = hops[(0, 0)] + hops[(1, 0)] * ph + hops[(1, 0)].conj().T * np.conj(ph)
    h = np.zeros((width * N, width * N), dtype=complex)
    for r in range(width):
        h[r * N:(r + 1) * N, r * N:(r + 1) * N] = onsite
        if r + 1 < width:
            h[(r + 1) * N:(r + 2) * N, r * N:(r + 1) * N] = hops[(0, 1)]
            h[r * N:(r + 1) * N, (r + 1) * N:(r + 2) * N] = hops[(0, 1)].conj().T
    return h


def _rotate_degenerate(w: np.ndarray, v: np.ndarray, weight_op: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Within clusters of (near-)equal eigenvalues, pick edge-diagonal bases."""
    v = v.copy()
    start = 0
    n = len(w)
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[stop - 1] < tol:
            stop += 1
        if stop - start > 1:
            block = v[:, start:stop]
            m = block.conj().T @ (weight_op[:, None] * block)
            _, rot = np.linalg.eigh(m)
            v[:, start:stop] = block @ rot
        start = stop
    return v


def edge_spectral_flow(model: ModelSpec, width: int = 24, mu: float = 0.0, n_k: int = 128) -> int:
    """ℤ₂ count of lower-edge bands crossing ``mu`` on a cylinder.

    The k1 circle is sampled on a half-step grid (no sample sits on a TRIM).
    Eigenvectors are matched between neighbouring momenta by maximal overlap;
    a crossing is a sign change of ``E − mu`` along a matched pair.  Crossings
    with lower-half weight > 0.6 belong to the lower edge, < 0.4 to the upper
    one.  Over the full circle, Kramers partners cross in pairs, so the lower-
    edge crossing count is even; the ℤ₂ value is half of it, mod 2, which
    equals the count over ``[0, π]``.
    """
    top, bottom = bulk_gap_kspace(model, 64)
    if not top < mu < bottom:
        raise ConfigurationError(f"Fermi level {mu} outside the bulk gap ({top:.3f}, {bottom:.3f})")
    N = model.n_internal
    lower = (np.repeat(np.arange(width), N) < width / 2).astype(float)
    ks = -np.pi + 2 * np.pi * (np.arange(n_k) + 0.5) / n_k
    states = []
    for k in ks:
        w, v = np.linalg.eigh(strip_bloch_hamiltonian(model, width, k))
        states.append((w, _rotate_degenerate(w, v, lower)))
    crossings = 0
    for j in range(n_k):
        w0, v0 = states[j]
        w1, v1 = states[(j + 1) % n_k]
        ov = np.abs(v0.conj().T @ v1) ** 2
        rows, cols = linear_sum_assignment(-ov)
        for a, b in zip(rows, cols):
            if (w0[a] - mu) * (w1[b] - mu) > 0:
                continue
            if ov[a, b] <= 0.5:
                raise AmbiguityError(f"band tracking lost near k1={ks[j]:.3f}")
            weight = 0.5 * (lower @ np.abs(v0[:, a]) ** 2 + lower @ np.abs(v1[:, b]) ** 2)
            if 0.4 <= weight <= 0.6:
                raise AmbiguityError(f"crossing near k1={ks[j]:.3f} has lower-edge weight {weight:.3f}")
            if weight > 0.6:
                crossings += 1
    if crossings % 2:
        raise IntegrityError(f"odd number ({crossings}) of lower-edge crossings on the full circle")
    return (crossings // 2) % 2


def brute_force_kernel(A: np.ndarray, tau: float = 1e-8) -> int:
    """Number of singular values below ``tau``."""
    s = np.linalg.svd(np.asarray(A), compute_uv=False)
    near = (s >= tau / 2) & (s <= 2 * tau)
    if np.any(near):
        warnings.warn(f"{int(near.sum())} singular value(s) within [τ/2, 2τ]", ResolutionWarning, stacklevel=2)
    return int(np.sum(s < tau))

"""Fermionic time reversal ``Θ = C·K`` and Θ-odd operators.

Anti-unitary maps are never stored.  ``Θ`` is the unitary ``C`` together with
explicit complex conjugation inside each formula; ``C`` is block diagonal with
one ``N x N`` block per lattice site.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import unitary_group

from .errors import GeometryError, SymmetryError
from .lattice import LatticeGeometry, LatticeOperator

__all__ = [
    "TimeReversal",
    "standard_tr",
    "commutes_with_tr",
    "theta_odd_residual",
    "antisymmetric_rep",
    "random_theta_odd",
    "random_theta_odd_like",
    "THETA_ODD_TOL",
]

THETA_ODD_TOL = 1e-8

_ISIGMA2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class TimeReversal:
    """Θ = C·K with ``C = 1_sites ⊗ site_block``.

    Parameters
    ----------
    site_block : ndarray, shape (N, N)
        Unitary with ``c·conj(c) = −1``.
    n_sites : int
    geometry : LatticeGeometry, optional
    """

    site_block: np.ndarray
    n_sites: int
    geometry: Optional[LatticeGeometry] = field(default=None)

    def __post_init__(self):
        c = np.array(self.site_block, dtype=complex)
        c.flags.writeable = False
        object.__setattr__(self, "site_block", c)
        N = c.shape[0]
        if c.shape != (N, N):
            raise GeometryError("site block must be square")
        if np.max(np.abs(c @ c.conj().T - np.eye(N))) > 1e-12:
            raise SymmetryError("site block is not unitary")
        if np.max(np.abs(c @ c.conj() + np.eye(N))) > 1e-12:
            raise SymmetryError("site block does not square to -1 (Θ² = −1 required)")
        if self.geometry is not None and self.geometry.n_sites != self.n_sites:
            raise GeometryError("n_sites does not match geometry")

    @property
    def n_internal(self) -> int:
        return self.site_block.shape[0]

    @property
    def dim(self) -> int:
        return self.n_sites * self.n_internal

    @property
    def matrix(self) -> np.ndarray:
        """Dense ``C``."""
        return np.kron(np.eye(self.n_sites), self.site_block)

    def _check(self, m: np.ndarray):
        if m.shape[0] != self.dim:
            raise GeometryError(f"operator dimension {m.shape[0]} does not match Θ dimension {self.dim}")

    def left(self, m: np.ndarray) -> np.ndarray:
        """``C @ m`` using the block structure."""
        self._check(m)
        S, N = self.n_sites, self.n_internal
        return np.einsum("ab,ibk->iak", self.site_block, m.reshape(S, N, -1)).reshape(m.shape)

    def right(self, m: np.ndarray, block: np.ndarray) -> np.ndarray:
        """``m @ (1 ⊗ block)``."""
        S, N = self.n_sites, self.n_internal
        return np.einsum("kib,ba->kia", m.reshape(-1, S, N), block).reshape(m.shape)

    def conjugate(self, m: np.ndarray) -> np.ndarray:
        """Matrix of ``Θ A Θ*``, i.e. ``C conj(A) C†``."""
        return self.right(self.left(np.conj(m)), self.site_block.conj().T)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """``Θψ = C conj(ψ)`` for vectors or column stacks."""
        psi = np.asarray(psi)
        col = psi.reshape(psi.shape[0], -1)
        return self.left(np.conj(col)).reshape(psi.shape)


def standard_tr(geometry: LatticeGeometry) -> TimeReversal:
    """``iσ₂ ⊗ 1_{N/2}`` on every site (spin is the slow internal index)."""
    N = geometry.n_internal
    if N % 2:
        raise SymmetryError(f"time reversal with Θ² = −1 needs even N, got {N}")
    return TimeReversal(np.kron(_ISIGMA2, np.eye(N // 2)), geometry.n_sites, geometry)


def _standard_for_dim(dimension: int) -> TimeReversal:
    if dimension % 2:
        raise SymmetryError(f"Θ-odd matrices need even dimension, got {dimension}")
    return TimeReversal(_ISIGMA2, dimension // 2)


def _mat(A) -> np.ndarray:
    return A.matrix if isinstance(A, LatticeOperator) else np.asarray(A)


def commutes_with_tr(A, theta: TimeReversal) -> float:
    """``‖A − C conj(A) C†‖_max``; zero iff ``[A, Θ] = 0``."""
    m = _mat(A)
    return float(np.max(np.abs(m - theta.conjugate(m)), initial=0.0))


def theta_odd_residual(F, theta: TimeReversal) -> float:
    """``‖F + C Fᵀ conj(C)‖_max``; zero iff ``F = −Θ F* Θ``."""
    m = _mat(F)
    other = theta.right(theta.left(m.T), theta.site_block.conj())
    return float(np.max(np.abs(m + other), initial=0.0))


def antisymmetric_rep(F, theta: TimeReversal, tol: float = THETA_ODD_TOL) -> np.ndarray:
    """``M = C† F``, antisymmetric for Θ-odd ``F``."""
    m = _mat(F)
    scale = max(float(np.max(np.abs(m), initial=0.0)), 1.0)
    res = theta_odd_residual(m, theta)
    if res > tol * scale:
        raise SymmetryError(f"operator is not Θ-odd (residual {res:.2e})")
    c_dag = theta.site_block.conj().T
    S, N = theta.n_sites, theta.n_internal
    return np.einsum("ab,ibk->iak", c_dag, m.reshape(S, N, -1)).reshape(m.shape)


def _youla_antisymmetric(dimension: int, rng: np.random.Generator, n_zero_blocks: int) -> np.ndarray:
    k = dimension // 2
    Q = unitary_group.rvs(dimension, random_state=rng) if dimension > 1 else np.eye(dimension)
    s = rng.uniform(0.1, 1.0, size=k)
    s[rng.choice(k, size=n_zero_blocks, replace=False)] = 0.0
    D = np.zeros((dimension, dimension), dtype=complex)
    for i, si in enumerate(s):
        D[2 * i, 2 * i + 1] = si
        D[2 * i + 1, 2 * i] = -si
    return Q @ D @ Q.T


def random_theta_odd(dimension: int, seed: int, rank_deficiency: Optional[int] = None) -> np.ndarray:
    """Random matrix ``C·M`` with ``M`` complex antisymmetric, hence exactly Θ-odd.

    Parameters
    ----------
    dimension : int
        Even matrix dimension; Θ is the standard ``1 ⊗ iσ₂``.
    seed : int
    rank_deficiency : int, optional
        Number of 2x2 blocks of the Youla normal form of ``M`` set to zero.
        ``None`` draws i.i.d. entries for the upper triangle.
    """
    theta = _standard_for_dim(dimension)
    rng = np.random.default_rng(seed)
    if rank_deficiency is None:
        up = np.triu(rng.normal(size=(dimension, dimension)) + 1j * rng.normal(size=(dimension, dimension)), 1)
        M = up - up.T
    else:
        if not 0 <= rank_deficiency <= dimension // 2:
            raise SymmetryError("rank_deficiency must lie in [0, dimension/2]")
        M = _youla_antisymmetric(dimension, rng, rank_deficiency)
    return theta.left(M)


def random_theta_odd_like(theta: TimeReversal, rng: np.random.Generator, support: Optional[np.ndarray] = None,
                          rank: Optional[int] = None) -> np.ndarray:
    """Random Θ-odd matrix for an arbitrary ``theta``, unit max-norm scale.

    ``support`` restricts rows and columns to the given flat indices;
    ``rank`` (even) builds a finite-rank perturbation from Youla blocks.
    """
    n = theta.dim
    idx = np.arange(n) if support is None else np.asarray(support)
    k = len(idx)
    if rank is None:
        up = np.triu(rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)), 1)
        small = up - up.T
    else:
        if rank % 2 or rank > k:
            raise SymmetryError("finite-rank Θ-odd perturbations have even rank ≤ support size")
        V = np.linalg.qr(rng.normal(size=(k, rank)) + 1j * rng.normal(size=(k, rank)))[0]
        J = np.zeros((rank, rank), dtype=complex)
        for i in range(rank // 2):
            J[2 * i, 2 * i + 1] = rng.uniform(0.5, 1.0)
            J[2 * i + 1, 2 * i] = -J[2 * i, 2 * i + 1]
        small = V @ J @ V.T
    M = np.zeros((n, n), dtype=complex)
    M[np.ix_(idx, idx)] = small
    return theta.left(M)

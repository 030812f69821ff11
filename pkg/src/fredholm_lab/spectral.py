"""Eigendecomposition, Fermi projections and functional calculus.

Dense eigen- and singular-value problems are split along the connected
components of the operator's sparsity pattern.  Models without
inter-block coupling (BHZ, doubled models) therefore cost two half-size
diagonalizations instead of one full-size one; the result is identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb, factorial
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, GapViolationError, IntegrityError, NotHermitianError
from .lattice import LatticeOperator, LocalityFit, decay_fit

__all__ = [
    "matrix_blocks",
    "EigenDecomposition",
    "eig_hermitian",
    "eigvals_hermitian",
    "GapReport",
    "spectral_gap",
    "fermi_projection",
    "apply_function_eig",
    "SwitchFunction",
    "CutoffSwitch",
    "default_switch",
    "apply_function_hs",
    "resolvent",
    "combes_thomas_check",
]

FERMI_TOL = 1e-9


def matrix_blocks(matrix: np.ndarray) -> list[np.ndarray]:
    """Index sets of the connected components of the sparsity pattern of ``matrix``.

    Components are returned ordered by their smallest index.
    """
    n = matrix.shape[0]
    pattern = (matrix != 0) | (matrix != 0).T
    n_comp, labels = connected_components(csr_matrix(pattern), directed=False)
    if n_comp == 1:
        return [np.arange(n)]
    return [np.flatnonzero(labels == c) for c in range(n_comp)]


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Eigenpairs of a Hermitian operator, stored per decoupled block.

    Attributes
    ----------
    blocks : list of (indices, eigenvalues, eigenvectors)
        One entry per connected component of the operator.
    dim : int
    """

    blocks: tuple
    dim: int

    @cached_property
    def _order(self) -> np.ndarray:
        return np.argsort(np.concatenate([w for _, w, _ in self.blocks]), kind="stable")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues."""
        return np.concatenate([w for _, w, _ in self.blocks])[self._order]

    @cached_property
    def eigenvectors(self) -> np.ndarray:
        """Unitary matrix whose columns match :attr:`eigenvalues`."""
        V = np.zeros((self.dim, self.dim), dtype=complex)
        col = 0
        for idx, w, vec in self.blocks:
            V[np.ix_(idx, np.arange(col, col + len(w)))] = vec
            col += len(w)
        return V[:, self._order]

    def apply(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Matrix of ``f(A)`` assembled block by block."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for idx, w, vec in self.blocks:
            out[np.ix_(idx, idx)] = (vec * np.asarray(f(w))) @ vec.conj().T
        return out

    def residuals(self, A: LatticeOperator) -> tuple[float, float]:
        """Return ``(‖AV − VΛ‖_max / ‖A‖, ‖V†V − 1‖_max)``."""
        V = self.eigenvectors
        r1 = np.max(np.abs(A.matrix @ V - V * self.eigenvalues), initial=0.0)
        r2 = np.max(np.abs(V.conj().T @ V - np.eye(self.dim)), initial=0.0)
        return float(r1 / max(A.norm(), 1e-300)), float(r2)


def _require_hermitian(A: LatticeOperator):
    if not A.hermitian:
        raise NotHermitianError("operation requires a Hermitian operator")


def eig_hermitian(A: LatticeOperator) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian lattice operator."""
    _require_hermitian(A)
    m = A.matrix
    blocks = []
    for idx in matrix_blocks(m):
        w, v = np.linalg.eigh(m[np.ix_(idx, idx)])
        blocks.append((idx, w, v))
    return EigenDecomposition(tuple(blocks), m.shape[0])


def eigvals_hermitian(A: LatticeOperator) -> np.ndarray:
    """Ascending eigenvalues only (cheaper than :func:`eig_hermitian`)."""
    _require_hermitian(A)
    m = A.matrix
    vals = [np.linalg.eigvalsh(m[np.ix_(idx, idx)]) for idx in matrix_blocks(m)]
    return np.sort(np.concatenate(vals))


@dataclass(frozen=True)
class GapReport:
    """Eigenvalue-free interval around a reference energy.

    When an eigenvalue sits within ``tol`` of the reference energy, or the
    interval is narrower than the requested resolution, ``contains_zero`` is
    set and the operator is not treated as an insulator at that energy.
    """

    gap_lower: float
    gap_upper: float
    contains_zero: bool
    around: float = 0.0

    @property
    def width(self) -> float:
        return self.gap_upper - self.gap_lower

    @property
    def center(self) -> float:
        return 0.5 * (self.gap_lower + self.gap_upper)

    def to_dict(self) -> dict:
        return {"gap_lower": self.gap_lower, "gap_upper": self.gap_upper,
                "contains_zero": self.contains_zero, "around": self.around}


def spectral_gap(H: LatticeOperator | np.ndarray, around: float = 0.0, resolution: float = 0.0,
                 tol: float = FERMI_TOL) -> GapReport:
    """Largest open interval around ``around`` free of eigenvalues.

    Parameters
    ----------
    H : LatticeOperator or array of eigenvalues
    around : float
    resolution : float
        Intervals narrower than this count as closed.  At finite volume an
        edge band never covers an energy exactly, so "gap filled by edge
        states" is a statement about this resolution.
    tol : float
        Eigenvalues closer than this to ``around`` close the gap.
    """
    w = eigvals_hermitian(H) if isinstance(H, LatticeOperator) else np.sort(np.asarray(H, dtype=float))
    hit = bool(np.any(np.abs(w - around) <= tol))
    below = w[w < around - (tol if hit else 0.0)]
    above = w[w > around + (tol if hit else 0.0)]
    if hit:
        lower = upper = float(w[np.argmin(np.abs(w - around))])
    else:
        lower = float(below.max()) if below.size else -np.inf
        upper = float(above.min()) if above.size else np.inf
    closed = hit or (upper - lower) < resolution
    return GapReport(lower, upper, closed, float(around))


def fermi_projection(H: LatticeOperator, mu: float = 0.0,
                     eig: Optional[EigenDecomposition] = None) -> LatticeOperator:
    """Spectral projection of ``H`` onto energies below ``mu``."""
    eig = eig if eig is not None else eig_hermitian(H)
    if np.any(np.abs(eig.eigenvalues - mu) <= FERMI_TOL):
        raise GapViolationError(f"Fermi level {mu} lies within {FERMI_TOL} of an eigenvalue")
    P = eig.apply(lambda w: (w < mu).astype(float))
    return LatticeOperator(H.geometry, 0.5 * (P + P.conj().T))


def apply_function_eig(H: LatticeOperator, f: Callable[[np.ndarray], np.ndarray],
                       eig: Optional[EigenDecomposition] = None) -> LatticeOperator:
    """``V f(Λ) V†`` for Hermitian ``H``."""
    eig = eig if eig is not None else eig_hermitian(H)
    return LatticeOperator(H.geometry, eig.apply(f))


class SmoothFunction(Protocol):
    support: tuple[float, float]

    def derivative(self, x: np.ndarray, order: int) -> np.ndarray: ...


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


class SwitchFunction:
    """Smooth switch ``g`` with ``g = 1`` below ``a``, ``g = 0`` above ``b``.

    ``g(E) = 1 − ∫_a^E φ / ∫_a^b φ`` with the bump
    ``φ(t) = exp(−1/((t−a)(b−t)))`` on ``(a, b)``.  Integrals use a
    96-point Gauss-Legendre rule on ``[a, E]`` (or ``[E, b]`` past the
    midpoint); derivatives of every order use closed forms of the bump.
    """

    form = "smooth-bump-integral"

    def __init__(self, a: float, b: float):
        if not a < b:
            raise ConfigurationError(f"switch window needs a < b, got ({a}, {b})")
        self.a = float(a)
        self.b = float(b)
        self._shift = 4.0 / (self.b - self.a) ** 2
        self._norm = self._integral(np.array([self.a]), np.array([self.b]))[0]

    def __repr__(self) -> str:
        return f"SwitchFunction(a={self.a!r}, b={self.b!r})"

    @property
    def support(self) -> tuple[float, float]:
        return (-np.inf, self.b)

    def bump(self, t: np.ndarray) -> np.ndarray:
        """Bump φ, rescaled so that its maximum is 1."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t > self.a) & (t < self.b)
        ti = t[inside]
        out[inside] = np.exp(-1.0 / ((ti - self.a) * (self.b - ti)) + self._shift)
        return out

    def _integral(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        half = 0.5 * (hi - lo)
        t = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_NODES[None, :]
        return half * (self.bump(t) @ _GL_WEIGHTS)

    def __call__(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        flat = E.ravel()
        out = np.where(flat <= self.a, 1.0, 0.0)
        inside = (flat > self.a) & (flat < self.b)
        e = flat[inside]
        mid = 0.5 * (self.a + self.b)
        low = e <= mid
        vals = np.empty_like(e)
        vals[low] = 1.0 - self._integral(np.full(low.sum(), self.a), e[low]) / self._norm
        vals[~low] = self._integral(e[~low], np.full((~low).sum(), self.b)) / self._norm
        out[inside] = vals
        return out.reshape(E.shape)

    def _q_derivative(self, t: np.ndarray, k: int) -> np.ndarray:
        # q = -1/((t-a)(b-t)) = (1/(t-b) - 1/(t-a)) / (b-a)
        c = (-1) ** k * factorial(k) / (self.b - self.a)
        return c * ((t - self.b) ** (-k - 1) - (t - self.a) ** (-k - 1))

    def bump_derivative(self, t: np.ndarray, order: int) -> np.ndarray:
        """``order``-th derivative of the rescaled bump."""
        t = np.asarray(t, dtype=float)
        phi = self.bump(t)
        if order == 0:
            return phi
        out = np.zeros_like(t)
        live = phi > 0
        ti = t[live]
        qd = [None] + [self._q_derivative(ti, k) for k in range(1, order + 1)]
        # complete Bell polynomials: Y_{n+1} = sum_k C(n,k) Y_{n-k} q^{(k+1)}
        Y = [np.ones_like(ti)]
        for n in range(order):
            Y.append(sum(comb(n, k) * Y[n - k] * qd[k + 1] for k in range(n + 1)))
        out[live] = phi[live] * Y[order]
        return out

    def derivative(self, E, order: int) -> np.ndarray:
        """``order``-th derivative of ``g``."""
        if order == 0:
            return self(E)
        return -self.bump_derivative(E, order - 1) / self._norm


class CutoffSwitch:
    """Compactly supported version of a switch: ``g(E)·(1 − g_low(E))``.

    ``g_low`` switches on over ``[lower - width, lower]``; choosing ``lower``
    below the spectrum leaves ``f(H) = g(H)`` while giving ``f`` compact
    support, as the Helffer-Sjöstrand formula requires.
    """

    def __init__(self, switch: SwitchFunction, lower: float, width: float = 1.0):
        if not lower < switch.a:
            raise ConfigurationError("cutoff must lie below the switch window")
        self.switch = switch
        self.low = SwitchFunction(lower - width, lower)

    @property
    def support(self) -> tuple[float, float]:
        return (self.low.a, self.switch.b)

    @property
    def panels(self) -> list[tuple[float, float]]:
        return [(self.low.a, self.low.b), (self.low.b, self.switch.a), (self.switch.a, self.switch.b)]

    def __call__(self, E) -> np.ndarray:
        return self.derivative(E, 0)

    def derivative(self, E, order: int) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        total = np.zeros_like(E)
        for k in range(order + 1):
            rho = (1.0 - self.low(E)) if k == 0 else -self.low.derivative(E, k)
            total = total + comb(order, k) * self.switch.derivative(E, order - k) * rho
        return total


def default_switch(gap: GapReport, fraction: float = 0.8) -> SwitchFunction:
    """Switch supported on the central ``fraction`` of a spectral gap."""
    if gap.contains_zero or not np.isfinite(gap.width):
        raise GapViolationError("cannot place a switch window in a closed or unbounded gap")
    half = 0.5 * fraction * gap.width
    return SwitchFunction(gap.center - half, gap.center + half)


def _smooth_cutoff(y: np.ndarray, delta: float, order: int = 0) -> np.ndarray:
    """χ(y/δ) (order 0) or χ'(y/δ) (order 1): 1 for |y| ≤ δ/2, 0 for |y| ≥ δ."""
    s = SwitchFunction(0.5, 1.0)
    u = np.abs(y) / delta
    if order == 0:
        return s(u)
    return s.derivative(u, 1) * np.sign(y)


def _gershgorin(m: np.ndarray) -> tuple[float, float]:
    centers = np.real(np.diag(m))
    radii = np.sum(np.abs(m), axis=1) - np.abs(np.diag(m))
    return float(np.min(centers - radii)), float(np.max(centers + radii))


def apply_function_hs(H: LatticeOperator, f: SwitchFunction | CutoffSwitch,
                      extension_order: int = 3, delta: Optional[float] = None,
                      quadrature: tuple[int, int] = (64, 64),
                      check_tol: Optional[float] = None) -> LatticeOperator:
    """Evaluate ``f(H)`` by the Helffer-Sjöstrand formula.

    ``f(H) = (1/π) ∫∫ ∂_z̄ f̃(x+iy) (H − z)⁻¹ dx dy`` with the almost-analytic
    extension ``f̃ = Σ_{m≤M} f⁽ᵐ⁾(x)(iy)ᵐ/m! · χ(y/δ)``.  ``∂_z̄ f̃`` is
    evaluated in closed form, each resolvent by a dense solve.

    Parameters
    ----------
    f : SwitchFunction or CutoffSwitch
        A bare switch is made compactly supported by a cutoff placed below the
        Gershgorin bound of ``H``.
    extension_order : int
        M.
    delta : float, optional
        Strip half-width; defaults to half the switch window width.
    quadrature : (int, int)
        Gauss-Legendre nodes per x-panel and along y.
    check_tol : float, optional
        If given, compare with :func:`apply_function_eig` and raise
        :class:`IntegrityError` when the max-norm difference exceeds it.
    """
    _require_hermitian(H)
    m = H.matrix
    if isinstance(f, SwitchFunction):
        lo, _ = _gershgorin(m)
        f = CutoffSwitch(f, min(lo, f.a) - 0.5)
    M = int(extension_order)
    if delta is None:
        delta = 0.5 * (f.switch.b - f.switch.a)
    nx, ny = quadrature
    xg, xw = np.polynomial.legendre.leggauss(nx)
    yg, yw = np.polynomial.legendre.leggauss(ny)
    ys = delta * yg
    wy = delta * yw
    chi = _smooth_cutoff(ys, delta, 0)
    dchi = _smooth_cutoff(ys, delta, 1)
    n = m.shape[0]
    eye = np.eye(n)
    acc = np.zeros((n, n), dtype=complex)
    for x0, x1 in f.panels:
        xs = 0.5 * (x1 + x0) + 0.5 * (x1 - x0) * xg
        wx = 0.5 * (x1 - x0) * xw
        ders = [f.derivative(xs, k) for k in range(M + 2)]
        for j, y in enumerate(ys):
            iy = 1j * y
            taylor = sum(ders[k] * iy ** k / factorial(k) for k in range(M + 1))
            dbar = 0.5 * ders[M + 1] * iy ** M / factorial(M) * chi[j] + 0.5j * taylor * dchi[j] / delta
            weights = wx * wy[j] * dbar
            live = np.flatnonzero(np.abs(weights) > 0)
            if live.size == 0:
                continue
            z = xs[live] + iy
            R = np.linalg.inv(m[None, :, :] - z[:, None, None] * eye[None, :, :])
            acc += np.tensordot(weights[live], R, axes=1)
    out = LatticeOperator(H.geometry, acc / np.pi)
    if check_tol is not None:
        ref = apply_function_eig(H, f)
        err = float(np.max(np.abs(ref.matrix - out.matrix)))
        if err > check_tol:
            raise IntegrityError(f"Helffer-Sjöstrand quadrature residual {err:.3e} exceeds {check_tol:.1e}")
    return out


def resolvent(H: LatticeOperator, z: complex) -> LatticeOperator:
    """``(H − z)⁻¹`` by a dense solve."""
    m = H.matrix
    return LatticeOperator(H.geometry, np.linalg.solve(m - z * np.eye(m.shape[0]), np.eye(m.shape[0])))


def combes_thomas_check(H: LatticeOperator, z_list: Sequence[complex],
                        model: str = "exponential", metric: str = "chebyshev") -> list[LocalityFit]:
    """Fit the off-diagonal decay of the resolvent at each ``z``.

    Returns one :class:`LocalityFit` per point, in input order.  Rates are
    expected to grow and prefactors to shrink with ``|Im z|``.  Shells use the
    Chebyshev distance by default: on a square lattice the resolvent decays
    faster along diagonals than along the axes, so Euclidean shells scatter
    about any single exponential.
    """
    _require_hermitian(H)
    w = eigvals_hermitian(H)
    fits = []
    for z in z_list:
        z = complex(z)
        if np.min(np.abs(w - z)) <= FERMI_TOL:
            raise GapViolationError(f"z = {z} lies within {FERMI_TOL} of the spectrum")
        fits.append(decay_fit(resolvent(H, z), model, metric=metric, off_diagonal=True))
    return fits

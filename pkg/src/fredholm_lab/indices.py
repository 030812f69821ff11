"""Index engines: compressions, Fedosov and Kubo traces, near-kernel counting.

Finite-volume conventions
-------------------------
On a finite lattice every square matrix has ordinary index 0, and the
full traces ``tr((1−A†A)ⁿ) − tr((1−AA†)ⁿ)`` and ``tr(P[∂₁P, ∂₂P])`` vanish
identically.  The infinite-volume index lives at the flux point or corner
``(−½, −½)`` while a compensating artifact sits at the patch boundary or
periodic seam.  Traces are therefore restricted to a region around the
center (a disk by default), and ℤ₂ counts only keep near-kernel vectors
localized there.

Orientation: the flux route uses ``U*`` (``FLUX_ORIENTATION = −1``) so that
every route agrees in sign with the Berry-curvature oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AmbiguityError, ConfigurationError, GapViolationError, IntegrityError, NotHermitianError
from .lattice import LatticeGeometry, LatticeOperator, flux_phase, heaviside
from .spectral import (EigenDecomposition, GapReport, SwitchFunction, eig_hermitian, fermi_projection,
                       matrix_blocks, spectral_gap)

__all__ = [
    "FLUX_ORIENTATION",
    "FEDOSOV_SCHEDULE",
    "IndexResult",
    "SingularSpectrum",
    "IntegrityWarning",
    "disk_region",
    "default_radius",
    "lower_half_region",
    "project_compress",
    "winding_op",
    "bulk_flux_operator",
    "bulk_corner_operator",
    "fedosov_sequence",
    "fredholm_index_fedosov",
    "chern_kubo",
    "kernel_dim_trace_limit",
    "near_kernel_modes",
    "z2_localized_count",
    "edge_operator",
    "edge_chern",
    "edge_z2",
    "fermi_scan",
]

FLUX_ORIENTATION = -1
FEDOSOV_SCHEDULE = tuple(2 ** k for k in range(3, 13))
FLUX_CENTER = (-0.5, -0.5)


class IntegrityWarning(UserWarning):
    """A trace carries an imaginary residue or a similar numerical blemish."""


@dataclass(frozen=True)
class IndexResult:
    """A computed integer or ℤ₂ index with its convergence record."""

    raw: float
    value: int
    kind: str = "Z"
    n_used: int = 0
    history: tuple = ()
    distance_to_integer: float = 0.0
    status: str = "converged"
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "value": self.value,
            "kind": self.kind,
            "n_used": self.n_used,
            "history": [list(h) for h in self.history],
            "distance_to_integer": self.distance_to_integer,
            "status": self.status,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True, eq=False)
class SingularSpectrum:
    """Singular values with the near-kernel cluster identified by a policy.

    ``right``/``left`` hold the singular vectors of the cluster as columns.
    ``status`` is ``"ambiguous"`` when ``gap_ratio < 10``.
    """

    values: np.ndarray
    cluster_size: int
    threshold: float
    gap_ratio: float
    status: str
    right: np.ndarray
    left: np.ndarray
    policy: str = "gap"

    @property
    def fredholm_gap(self) -> float:
        """Smallest singular value above the cluster."""
        k = self.cluster_size
        return float(self.values[k]) if k < len(self.values) else float("inf")


# --------------------------------------------------------------------------- regions

def default_radius(geometry: LatticeGeometry) -> tuple[float, float]:
    """Semi-axes of the default localization region.

    A quarter of each side for bulk patches (a disk of radius L/4 on an
    L x L patch); half the width for strips.
    """
    if geometry.kind == "half-space":
        return (0.5 * geometry.n2, 0.5 * geometry.n2)
    return (0.25 * geometry.n1, 0.25 * geometry.n2)


def disk_region(geometry: LatticeGeometry, center: Sequence[float] = FLUX_CENTER,
                radius: Optional[float | Sequence[float]] = None) -> np.ndarray:
    """0/1 weight per flat index: sites inside the disk (or ellipse) about ``center``.

    ``radius`` is a scalar or a pair of semi-axes along x1 and x2.
    """
    radius = default_radius(geometry) if radius is None else radius
    a, b = (radius, radius) if np.isscalar(radius) else radius
    u = (geometry.coordinate(1) - center[0]) / a
    v = (geometry.coordinate(2) - center[1]) / b
    return (u * u + v * v <= 1.0 + 1e-12).astype(float)


def lower_half_region(geometry: LatticeGeometry) -> np.ndarray:
    """Strip sites with ``x2 < W/2``; on an x1-periodic strip also ``|x1 + ½| ≤ n1/4``."""
    x2 = geometry.coordinate(2)
    mask = x2 < 0.5 * geometry.n2
    if geometry.periodic[0]:
        mask &= np.abs(geometry.coordinate(1) + 0.5) <= 0.25 * geometry.n1
    return mask.astype(float)


# --------------------------------------------------------------------------- super-operators

def project_compress(Q: LatticeOperator, A: LatticeOperator) -> LatticeOperator:
    """``ℚA = QAQ + (1 − Q)``."""
    q = Q.matrix
    if np.max(np.abs(q @ q - q), initial=0.0) > 1e-10:
        raise ConfigurationError("Q is not a projection")
    n = q.shape[0]
    return LatticeOperator(A.geometry, q @ A.matrix @ q + np.eye(n) - q)


def winding_op(A: LatticeOperator, eig: Optional[EigenDecomposition] = None) -> LatticeOperator:
    """``𝕎₁A = Λ₁ exp(−2πiA) Λ₁ + (1 − Λ₁)`` with the exponential taken in A's eigenbasis."""
    if not A.hermitian:
        raise NotHermitianError("winding_op needs a Hermitian generator")
    eig = eig if eig is not None else eig_hermitian(A)
    E = eig.apply(lambda w: np.exp(-2j * np.pi * w))
    lam = heaviside(A.geometry.coordinate(1))
    out = lam[:, None] * E * lam[None, :]
    out[np.diag_indices_from(out)] += 1.0 - lam
    return LatticeOperator(A.geometry, out)


def bulk_flux_operator(P: LatticeOperator, U: Optional[LatticeOperator] = None) -> LatticeOperator:
    """``F = PUP + (1 − P)``; ``U`` defaults to the flux phase with :data:`FLUX_ORIENTATION`."""
    U = U if U is not None else flux_phase(P.geometry, FLUX_ORIENTATION)
    p = P.matrix
    u = np.diag(U.matrix)
    n = p.shape[0]
    if np.count_nonzero(U.matrix - np.diag(u)) == 0:
        F = (p * u[None, :]) @ p
    else:
        F = p @ U.matrix @ p
    return LatticeOperator(P.geometry, F + np.eye(n) - p)


def bulk_corner_operator(P: LatticeOperator, eig: Optional[EigenDecomposition] = None) -> LatticeOperator:
    """``𝕎₁(P Λ₂ P)``."""
    lam2 = heaviside(P.geometry.coordinate(2))
    p = P.matrix
    A = LatticeOperator(P.geometry, 0.5 * ((p * lam2[None, :]) @ p + ((p * lam2[None, :]) @ p).conj().T))
    return winding_op(A, eig)


# --------------------------------------------------------------------------- SVD helpers

def _svd_blocks(m: np.ndarray):
    for idx in matrix_blocks(m):
        W, s, Vh = np.linalg.svd(m[np.ix_(idx, idx)])
        yield idx, W, s, Vh


def _masses(m: np.ndarray, region: Optional[np.ndarray]):
    """Singular values with the region mass of each right and left singular vector."""
    s_all, mv_all, mw_all = [], [], []
    for idx, W, s, Vh in _svd_blocks(m):
        s_all.append(s)
        if region is None:
            mv_all.append(np.ones_like(s))
            mw_all.append(np.ones_like(s))
        else:
            r = region[idx]
            mv_all.append(r @ np.abs(Vh.conj().T) ** 2)
            mw_all.append(r @ np.abs(W) ** 2)
    return np.concatenate(s_all), np.concatenate(mv_all), np.concatenate(mw_all)


def fedosov_sequence(A: LatticeOperator | np.ndarray, schedule: Sequence[int],
                     region: Optional[np.ndarray] = None) -> list[tuple[int, float]]:
    """``[(n, tr_R((1−A†A)ⁿ) − tr_R((1−AA†)ⁿ)) for n in schedule]``."""
    m = A.matrix if isinstance(A, LatticeOperator) else np.asarray(A)
    s, mv, mw = _masses(m, region)
    base = np.clip(1.0 - s ** 2, 0.0, None) if np.all(s <= 1 + 1e-10) else 1.0 - s ** 2
    return [(int(n), float(np.sum(base ** n * (mv - mw)))) for n in schedule]


def fredholm_index_fedosov(A: LatticeOperator, region: Optional[np.ndarray] | str = "disk",
                           n_start: int = 8, n_max: int = 4096, tol: float = 0.05,
                           step_tol: float = 0.01) -> IndexResult:
    """Fredholm index by the Fedosov power traces.

    ``raw_n = Σ_j (1 − σ_j²)ⁿ (‖χ v_j‖² − ‖χ w_j‖²)`` over the singular
    triplets ``(σ_j, v_j, w_j)``, with ``χ`` the region weight; this equals
    ``tr(χ(1−A†A)ⁿ) − tr(χ(1−AA†)ⁿ)``.  ``n`` doubles from ``n_start`` until
    ``raw_n`` is within ``tol`` of an integer and within ``step_tol`` of
    ``raw_{n/2}``.

    On a finite lattice no singular value is exactly zero, so for very large
    ``n`` every term dies and ``raw_n → 0``.  A plateau is rejected when the
    modes that were alive at ``n_start`` (weight ``(1−σ²)ⁿ ≥ ½``) and have
    died since carried more than ``tol`` of region mass; the
    ``decayed_mass`` diagnostic records that amount.

    Parameters
    ----------
    region : "disk", None or array
        ``"disk"`` uses :func:`disk_region` with its defaults; ``None`` is the
        unrestricted trace (identically 0 for a finite matrix).
    """
    if isinstance(region, str):
        if region != "disk":
            raise ConfigurationError(f"unknown region {region!r}")
        region = disk_region(A.geometry)
    schedule = []
    n = n_start
    while n <= n_max:
        schedule.append(n)
        n *= 2
    m = A.matrix if isinstance(A, LatticeOperator) else np.asarray(A)
    s, mv, mw = _masses(m, region)
    base = np.clip(1.0 - s ** 2, 0.0, None) if np.all(s <= 1 + 1e-10) else 1.0 - s ** 2
    d = mv - mw
    alive0 = np.abs(base) ** n_start >= 0.5
    hist = [(int(n), float(np.sum(base ** n * d))) for n in schedule]
    status = "not-converged"
    used = hist[-1]
    lost = 0.0
    for i, (n, raw) in enumerate(hist):
        lost = float(np.sum(np.abs(d[alive0 & (np.abs(base) ** n < 0.5)])))
        close = abs(raw - round(raw)) <= tol
        steady = i > 0 and abs(raw - hist[i - 1][1]) <= step_tol
        if close and (steady or n_start == n_max) and lost <= tol:
            status, used = "converged", (n, raw)
            hist = hist[: i + 1]
            break
    raw = used[1]
    diag = {"sigma_min": float(s.min(initial=np.inf)), "decayed_mass": lost}
    return IndexResult(raw, int(round(raw)), "Z", used[0], tuple(hist), abs(raw - round(raw)), status, diag)


def chern_kubo(P: LatticeOperator, region: Optional[np.ndarray] | str = "disk") -> float:
    """``−2πi tr_R(P[∂₁P, ∂₂P])`` with ``R`` the region (default disk about the corner).

    An imaginary residue above 1e-6 raises an :class:`IntegrityWarning`.
    """
    if isinstance(region, str):
        region = disk_region(P.geometry)
    g = P.geometry
    p = P.matrix
    l1 = heaviside(g.coordinate(1))
    l2 = heaviside(g.coordinate(2))
    d1 = -1j * (l1[:, None] * p - p * l1[None, :])
    d2 = -1j * (l2[:, None] * p - p * l2[None, :])
    comm = d1 @ d2 - d2 @ d1
    diag = np.einsum("ij,ji->i", p, comm)
    if region is not None:
        diag = diag * region
    val = -2j * np.pi * diag.sum()
    if abs(val.imag) > 1e-6:
        warnings.warn(f"Kubo trace has imaginary residue {val.imag:.2e}", IntegrityWarning, stacklevel=2)
    return float(val.real)


def kernel_dim_trace_limit(A: LatticeOperator | np.ndarray, n_schedule: Optional[Sequence[int]] = None,
                           tol: float = 0.01) -> IndexResult:
    """``lim_n tr((1 − A†A)ⁿ)`` = dim ker A for a contraction.

    The sequence must be non-increasing; the value is the nearest integer
    once successive terms agree within ``tol``.  ``value`` is the integer
    kernel dimension and ``diagnostics["z2"]`` its parity.
    """
    m = A.matrix if isinstance(A, LatticeOperator) else np.asarray(A)
    s = np.concatenate([np.linalg.svd(m[np.ix_(idx, idx)], compute_uv=False) for idx in matrix_blocks(m)])
    if s.max(initial=0.0) > 1 + 1e-10:
        raise ConfigurationError(f"‖A‖ = {s.max():.6f} exceeds 1")
    base = np.clip(1.0 - s ** 2, 0.0, 1.0)
    schedule = list(n_schedule) if n_schedule is not None else list(FEDOSOV_SCHEDULE)
    hist = []
    status = "not-converged"
    for i, n in enumerate(schedule):
        val = float(np.sum(base ** n))
        if hist and val > hist[-1][1] + 1e-12 * max(1.0, len(s)):
            raise IntegrityError(f"trace-limit sequence increased at n={n}")
        hist.append((int(n), val))
        if i > 0 and abs(val - hist[-2][1]) <= tol:
            status = "converged"
            break
    n_used, raw = hist[-1]
    k = int(round(raw))
    return IndexResult(raw, k, "dim", n_used, tuple(hist), abs(raw - k), status, {"z2": k % 2})


# --------------------------------------------------------------------------- near-kernel

def near_kernel_modes(A: LatticeOperator | np.ndarray, policy: str = "gap", tau: Optional[float] = None,
                      min_ratio: float = 10.0, ceiling: float = 0.5) -> SingularSpectrum:
    """Full SVD with the near-zero cluster identified.

    Policies
    --------
    ``"absolute"``
        cluster = singular values below ``tau``.
    ``"gap"``
        among singular values below ``ceiling``, split at the largest ratio
        ``σ_{k}/σ_{k−1}``; the cluster is everything below the split.
    """
    m = A.matrix if isinstance(A, LatticeOperator) else np.asarray(A)
    n = m.shape[0]
    svals, rights, lefts = [], [], []
    for idx, W, s, Vh in _svd_blocks(m):
        svals.append(s)
        R = np.zeros((n, len(s)), dtype=complex)
        L = np.zeros((n, len(s)), dtype=complex)
        R[idx] = Vh.conj().T
        L[idx] = W
        rights.append(R)
        lefts.append(L)
    s = np.concatenate(svals)
    order = np.argsort(s, kind="stable")
    s = s[order]
    floor = np.finfo(float).eps * max(float(s[-1]) if len(s) else 1.0, 1.0)
    if policy == "absolute":
        if tau is None:
            raise ConfigurationError("absolute policy needs tau")
        k = int(np.sum(s < tau))
        above = s[k] if k < n else np.inf
        below = s[k - 1] if k > 0 else tau
        ratio = above / max(below, floor)
        threshold = float(tau)
    elif policy == "gap":
        small = int(np.sum(s < ceiling))
        if small == 0:
            k, ratio, threshold = 0, float("inf"), float(ceiling)
        else:
            cand = np.arange(1, small + 1)
            nxt = np.array([s[c] if c < n else ceiling for c in cand])
            ratios = nxt / np.maximum(s[cand - 1], floor)
            best = int(np.argmax(ratios))
            k = int(cand[best])
            ratio = float(ratios[best])
            threshold = float(np.sqrt(max(s[k - 1], floor) * nxt[best]))
    else:
        raise ConfigurationError(f"unknown near-kernel policy {policy!r}")
    sel = order[:k]
    right = np.concatenate(rights, axis=1)[:, sel] if k else np.zeros((n, 0), dtype=complex)
    left = np.concatenate(lefts, axis=1)[:, sel] if k else np.zeros((n, 0), dtype=complex)
    status = "ok" if ratio >= min_ratio else "ambiguous"
    return SingularSpectrum(s, k, threshold, float(ratio), status, right, left, policy)


def z2_localized_count(A: LatticeOperator, center: Sequence[float] = FLUX_CENTER,
                       radius: Optional[float] = None, spectrum: Optional[SingularSpectrum] = None,
                       policy: str = "gap") -> IndexResult:
    """Parity of the near-kernel dimension localized around ``center``.

    The cluster's right singular subspace is diagonalized against the region
    weight, which makes the count independent of the basis chosen inside
    degenerate (Kramers) pairs; vectors with mass above ½ are counted.

    Raises
    ------
    AmbiguityError
        If the cluster is not separated (gap ratio < 10) or a mass lies in
        ``[0.4, 0.6]``.
    """
    spec = spectrum if spectrum is not None else near_kernel_modes(A, policy)
    if spec.status != "ok":
        raise AmbiguityError(f"near-kernel cluster not separated (gap ratio {spec.gap_ratio:.2f})")
    region = disk_region(A.geometry, center, radius)
    if spec.cluster_size:
        Vc = spec.right
        masses = np.linalg.eigvalsh(Vc.conj().T @ (region[:, None] * Vc))
    else:
        masses = np.zeros(0)
    bad = (masses >= 0.4) & (masses <= 0.6)
    if np.any(bad):
        raise AmbiguityError(f"kernel mass {masses[bad][0]:.3f} is neither localized nor absent; enlarge the lattice")
    count = int(np.sum(masses > 0.5))
    diag = {"cluster_size": spec.cluster_size, "gap_ratio": spec.gap_ratio,
            "fredholm_gap": spec.fredholm_gap, "masses": [float(x) for x in masses], "count": count}
    raw = float(masses.sum())
    return IndexResult(raw, count % 2, "Z2", 0, (), abs(raw - round(raw)), "converged", diag)


# --------------------------------------------------------------------------- edge

def edge_operator(Hhat: LatticeOperator, g: SwitchFunction, bulk_gap: Optional[GapReport] = None,
                  eig: Optional[EigenDecomposition] = None) -> LatticeOperator:
    """``F̂ = 𝕎₁ g(Ĥ)`` on the strip.

    If ``bulk_gap`` is given, the switch window must sit inside it.
    """
    if bulk_gap is not None and not (bulk_gap.gap_lower < g.a and g.b < bulk_gap.gap_upper) \
            or (bulk_gap is not None and bulk_gap.contains_zero):
        raise GapViolationError(f"switch window ({g.a}, {g.b}) not inside the bulk gap")
    eig = eig if eig is not None else eig_hermitian(Hhat)
    G = LatticeOperator(Hhat.geometry, eig.apply(g))
    return winding_op(G)


def edge_chern(Fhat: LatticeOperator, region: Optional[np.ndarray] | str = "lower-half", **kw) -> IndexResult:
    """Fedosov index of ``F̂`` restricted to the lower half of the strip."""
    if isinstance(region, str):
        region = lower_half_region(Fhat.geometry)
    return fredholm_index_fedosov(Fhat, region, **kw)


def edge_z2(Fhat: LatticeOperator, corner: Sequence[float] = (0.0, 0.0), radius: Optional[float] = None,
            policy: str = "gap") -> IndexResult:
    """ℤ₂ index of ``F̂``: near-kernel parity localized at the lower corner."""
    return z2_localized_count(Fhat, corner, radius, policy=policy)


# --------------------------------------------------------------------------- scans

def fermi_scan(H: LatticeOperator, mu_grid: Sequence[float], region: Optional[np.ndarray] | str = "disk",
               eig: Optional[EigenDecomposition] = None, U: Optional[LatticeOperator] = None) -> list[dict]:
    """Flux-route index and Fredholm gap across Fermi levels.

    For each ``μ`` the record holds the eigenvalue-free interval around ``μ``,
    ``sigma_min`` and ``fredholm_gap`` of ``F_μ = P_μ U P_μ + P_μ⊥`` and the
    Fedosov index.  A ``μ`` on an eigenvalue is recorded with
    ``in_gap = False`` and no index.
    """
    eig = eig if eig is not None else eig_hermitian(H)
    w = eig.eigenvalues
    if isinstance(region, str):
        region = disk_region(H.geometry)
    lo, hi = float(w.min()) - 1, float(w.max()) + 1
    out = []
    for mu in mu_grid:
        mu = float(mu)
        if not lo <= mu <= hi:
            raise ConfigurationError(f"μ = {mu} outside [{lo}, {hi}]")
        gap = spectral_gap(w, around=mu)
        rec = {"mu": mu, "gap": gap, "in_gap": not gap.contains_zero,
               "sigma_min": None, "fredholm_gap": None, "index": None}
        if gap.contains_zero:
            out.append(rec)
            continue
        P = fermi_projection(H, mu, eig)
        F = bulk_flux_operator(P, U)
        spec = near_kernel_modes(F)
        rec["sigma_min"] = float(spec.values[0])
        rec["fredholm_gap"] = spec.fredholm_gap
        rec["cluster_status"] = spec.status
        rec["index"] = fredholm_index_fedosov(F, region)
        out.append(rec)
    return out

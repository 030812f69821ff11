"""Tight-binding models, on-site disorder and boundary conditions.

Hoppings are stored as ``T_d = H_{x+d, x}`` for ``d`` in ``{(0,0), (1,0), (0,1)}``;
the Bloch matrix is ``h(k) = Σ_d T_d e^{−ik·d} + h.c.`` (on-site counted once).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, GeometryError, NotHermitianError
from .lattice import LatticeGeometry, LatticeOperator, restrict_half_space
from .symmetry import TimeReversal, standard_tr

__all__ = [
    "ModelSpec",
    "DisorderSpec",
    "BoundaryCondition",
    "DISORDER_ALGORITHM",
    "model_hoppings",
    "disorder_field",
    "build_bulk",
    "build_edge",
    "edge_potential",
    "doubled_model",
    "double_operator",
    "doubled_tr",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

DISORDER_ALGORITHM = "numpy.PCG64/SeedSequence([seed, x2 + 2**20])/uniform[-1,1)/x1-window[-1024,1024)"
_ROW_OFFSET = 2 ** 20
_X1_WINDOW = (-1024, 1024)


@dataclass(frozen=True)
class ModelSpec:
    """Clean model parameters.

    Parameters
    ----------
    family : {"qwz", "bhz", "atomic-trivial"}
    mass : float
        ``u`` for QWZ and BHZ, on-site splitting for the atomic model.
    inter_block : float
        Strength of a time-reversal-symmetric Rashba-type hopping coupling the
        two BHZ spin blocks (0 disables it).
    spinful : bool
        Atomic model only: double the internal space so that Θ applies.
    """

    family: str
    mass: float
    inter_block: float = 0.0
    spinful: bool = False
    hopping_range: int = 1

    def __post_init__(self):
        if self.family not in ("qwz", "bhz", "atomic-trivial"):
            raise ConfigurationError(f"unknown model family {self.family!r}")
        if self.hopping_range != 1:
            raise ConfigurationError("only nearest-neighbour models are supported")
        if self.inter_block and self.family != "bhz":
            raise ConfigurationError("inter_block coupling exists only for bhz")

    @property
    def n_internal(self) -> int:
        if self.family == "qwz":
            return 2
        if self.family == "bhz":
            return 4
        return 4 if self.spinful else 2

    @property
    def time_reversal_invariant(self) -> bool:
        return self.family == "bhz" or (self.family == "atomic-trivial" and self.spinful)

    def to_dict(self) -> dict:
        return {"family": self.family, "mass": self.mass, "inter_block": self.inter_block,
                "spinful": self.spinful}


@dataclass(frozen=True)
class DisorderSpec:
    """I.i.d. scalar on-site disorder ``W·uniform[−1, 1]``, keyed by site coordinates."""

    amplitude: float = 0.0
    seed: int = 0
    kind: str = "onsite-scalar"

    def __post_init__(self):
        if self.amplitude < 0:
            raise ConfigurationError("disorder amplitude must be non-negative")
        if self.kind != "onsite-scalar":
            raise ConfigurationError(f"unknown disorder kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "seed": self.seed, "kind": self.kind,
                "algorithm": DISORDER_ALGORITHM}


def model_hoppings(model: ModelSpec) -> dict[tuple[int, int], np.ndarray]:
    """Hopping matrices ``T_d = H_{x+d, x}`` of the clean model."""
    u = float(model.mass)
    if model.family == "atomic-trivial":
        onsite = u * SIGMA_Z
        if model.spinful:
            onsite = np.kron(np.eye(2), onsite)
        zero = np.zeros_like(onsite)
        return {(0, 0): onsite, (1, 0): zero, (0, 1): zero}
    qwz = {
        (0, 0): u * SIGMA_Z,
        (1, 0): 0.5 * (SIGMA_Z + 1j * SIGMA_X),
        (0, 1): 0.5 * (SIGMA_Z + 1j * SIGMA_Y),
    }
    if model.family == "qwz":
        return qwz
    up = np.diag([1.0, 0.0])
    dn = np.diag([0.0, 1.0])
    out = {d: np.kron(up, T) + np.kron(dn, T.conj()) for d, T in qwz.items()}
    lam = float(model.inter_block)
    if lam:
        out[(1, 0)] = out[(1, 0)] + 1j * lam * np.kron(SIGMA_X, np.eye(2))
        out[(0, 1)] = out[(0, 1)] + 1j * lam * np.kron(SIGMA_Y, np.eye(2))
    return out


def disorder_field(geometry: LatticeGeometry, disorder: DisorderSpec) -> np.ndarray:
    """Per-site disorder values in storage order.

    Every row ``x2`` has its own generator seeded from ``(seed, x2)`` and a
    fixed draw over a wide x1 window, so any two geometries that share a
    site see the same value there.
    """
    lo1, hi1 = geometry.x1_range
    if lo1 < _X1_WINDOW[0] or hi1 >= _X1_WINDOW[1]:
        raise GeometryError("geometry exceeds the disorder x1 window")
    if disorder.amplitude == 0:
        return np.zeros(geometry.n_sites)
    rows = []
    for x2 in range(geometry.x2_range[0], geometry.x2_range[1] + 1):
        ss = np.random.SeedSequence([int(disorder.seed) & (2 ** 64 - 1), x2 + _ROW_OFFSET])
        draw = np.random.Generator(np.random.PCG64(ss)).uniform(-1.0, 1.0, size=_X1_WINDOW[1] - _X1_WINDOW[0])
        rows.append(draw[lo1 - _X1_WINDOW[0]: hi1 - _X1_WINDOW[0] + 1])
    return disorder.amplitude * np.concatenate(rows)


def _assemble(geometry: LatticeGeometry, hops: dict[tuple[int, int], np.ndarray],
              onsite_scalar: Optional[np.ndarray] = None) -> np.ndarray:
    n, N = geometry.n_sites, geometry.n_internal
    H4 = np.zeros((n, n, N, N), dtype=complex)
    x1, x2 = geometry.site_x1, geometry.site_x2
    src = np.arange(n)
    H4[src, src] += hops[(0, 0)]
    for (d1, d2), T in hops.items():
        if (d1, d2) == (0, 0) or not np.any(T):
            continue
        pairs = [(i, geometry.wrap(int(a) + d1, int(b) + d2)) for i, a, b in zip(src, x1, x2)]
        i_idx = np.array([i for i, t in pairs if t is not None], dtype=int)
        targets = [t for _, t in pairs if t is not None]
        if not targets:
            continue
        j_idx = np.array([(t[1] - geometry.x2_range[0]) * geometry.n1 + (t[0] - geometry.x1_range[0])
                          for t in targets], dtype=int)
        np.add.at(H4, (j_idx, i_idx), T)
        np.add.at(H4, (i_idx, j_idx), T.conj().T)
    if onsite_scalar is not None:
        H4[src, src] += onsite_scalar[:, None, None] * np.eye(N)
    return H4.transpose(0, 2, 1, 3).reshape(n * N, n * N)


def build_bulk(model: ModelSpec, disorder: Optional[DisorderSpec], geometry: LatticeGeometry) -> LatticeOperator:
    """Real-space Hamiltonian of ``model`` plus on-site disorder on ``geometry``.

    Open axes have Dirichlet edges; periodic axes wrap.
    """
    if geometry.n_internal != model.n_internal:
        raise GeometryError(f"geometry has N={geometry.n_internal}, model needs N={model.n_internal}")
    pot = disorder_field(geometry, disorder) if disorder is not None and disorder.amplitude else None
    return LatticeOperator(geometry, _assemble(geometry, model_hoppings(model), pot))


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """Dirichlet truncation, optionally plus a boundary perturbation.

    ``perturbation`` must be Hermitian, live on the strip, vanish outside the
    first ``depth`` rows and couple only sites at distance ≤ ``hop_range``.
    """

    kind: str = "dirichlet"
    perturbation: Optional[LatticeOperator] = None
    depth: int = 1
    hop_range: float = 1.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "loc2-perturbation"):
            raise ConfigurationError(f"unknown boundary condition {self.kind!r}")
        if self.kind == "loc2-perturbation" and self.perturbation is None:
            raise ConfigurationError("loc2-perturbation needs a perturbation operator")

    def validate(self, strip: LatticeGeometry):
        V = self.perturbation
        if V is None:
            return
        if V.geometry != strip:
            raise GeometryError("perturbation must live on the strip geometry")
        if not V.hermitian:
            raise NotHermitianError("boundary perturbation is not self-adjoint")
        g = strip
        N = g.n_internal
        nz = np.abs(V.matrix).reshape(g.n_sites, N, g.n_sites, N).max(axis=(1, 3)) > 0
        rows, cols = np.nonzero(nz)
        if np.any(g.site_x2[rows] >= self.depth) or np.any(g.site_x2[cols] >= self.depth):
            raise GeometryError(f"perturbation reaches beyond depth {self.depth}")
        if np.any(g.site_distance()[rows, cols] > self.hop_range + 1e-12):
            raise GeometryError(f"perturbation hops beyond range {self.hop_range}")


def edge_potential(strip: LatticeGeometry, onsite: float, hopping: float = 0.0, depth: int = 1) -> BoundaryCondition:
    """Real scalar boundary term on the first ``depth`` rows (time-reversal symmetric).

    On-site energy ``onsite`` and nearest-neighbour x1-hopping ``hopping``,
    both times the identity on internal space.
    """
    if strip.kind != "half-space":
        raise GeometryError("edge_potential needs a strip geometry")
    N = strip.n_internal
    pot = np.where(strip.site_x2 < depth, float(onsite), 0.0)
    eye = np.eye(N, dtype=complex)
    hops = {(0, 0): np.zeros((N, N), dtype=complex), (1, 0): float(hopping) * eye, (0, 1): 0 * eye}
    m = _assemble(strip, hops, pot)
    # keep hoppings only inside the boundary rows
    rows = np.repeat(strip.site_x2 < depth, N)
    m = m * (rows[:, None] & rows[None, :])
    return BoundaryCondition("loc2-perturbation", LatticeOperator(strip, m), depth=depth, hop_range=1.0)


def build_edge(model: ModelSpec, disorder: Optional[DisorderSpec], strip: LatticeGeometry,
               bc: Optional[BoundaryCondition] = None) -> LatticeOperator:
    """Half-space Hamiltonian ``ι* H ι`` plus an optional boundary perturbation."""
    if strip.kind != "half-space":
        raise GeometryError("build_edge needs a half-space geometry")
    H = build_bulk(model, disorder, strip.covering_bulk())
    Hhat = restrict_half_space(H, strip)
    bc = bc or BoundaryCondition()
    bc.validate(strip)
    if bc.perturbation is not None:
        Hhat = Hhat + bc.perturbation
    return Hhat


def doubled_model(H: LatticeOperator, theta: TimeReversal) -> tuple[LatticeOperator, TimeReversal]:
    """``H̃ = H ⊕ ΘHΘ*`` with ``Θ̃ = [[0, Θ], [Θ, 0]]``.

    The doubled internal index is ``copy·N + s``.
    """
    if not H.hermitian:
        raise NotHermitianError("doubled_model needs a Hermitian operator")
    g = H.geometry
    if theta.dim != g.dim:
        raise GeometryError("Θ and H dimensions differ")
    return double_operator(H, theta.conjugate(H.matrix)), doubled_tr(theta, g)


def double_operator(A: LatticeOperator, B: np.ndarray) -> LatticeOperator:
    """Per-site direct sum ``A ⊕ B`` on the doubled internal space."""
    g = A.geometry
    n, N = g.n_sites, g.n_internal
    out = np.zeros((n, 2, N, n, 2, N), dtype=complex)
    out[:, 0, :, :, 0, :] = A.matrix.reshape(n, N, n, N)
    out[:, 1, :, :, 1, :] = np.asarray(B).reshape(n, N, n, N)
    return LatticeOperator(g.with_internal(2 * N), out.reshape(2 * g.dim, 2 * g.dim))


def doubled_tr(theta: TimeReversal, geometry: LatticeGeometry) -> TimeReversal:
    c = theta.site_block
    z = np.zeros_like(c)
    return TimeReversal(np.block([[z, c], [c, z]]), theta.n_sites, geometry.with_internal(2 * theta.n_internal))

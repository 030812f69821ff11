"""Square-lattice geometry, dense lattice operators and locality estimation.

Sites are ordered x2-major, then x1, then the internal index ``s``.  This
ordering is part of the on-disk format written by :func:`dump_operator`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, GeometryError

__all__ = [
    "LatticeGeometry",
    "LatticeOperator",
    "LocalityFit",
    "heaviside",
    "site_index",
    "position_multiplier",
    "step_operator",
    "flux_phase",
    "nc_derivative",
    "embed_half_space",
    "restrict_half_space",
    "decay_fit",
    "block_trace_norms",
    "dump_operator",
    "load_operator",
]

HERMITIAN_TOL = 1e-12


def heaviside(x: np.ndarray) -> np.ndarray:
    """Step function with the convention ``Λ(x) = 1`` iff ``x >= 0``."""
    return (np.asarray(x) >= 0).astype(float)


@dataclass(frozen=True)
class LatticeGeometry:
    """Finite rectangular patch of the square lattice.

    Parameters
    ----------
    kind : {"bulk", "half-space"}
        A bulk patch must contain (0, 0) strictly inside; a half-space strip
        starts at ``x2 = 0``.
    x1_range, x2_range : tuple of int
        Inclusive coordinate ranges.
    n_internal : int
        Internal (orbital and spin) dimension per site.
    origin_offset : tuple of float
        Shift of the flux branch point away from the site (0, 0).
    periodic : tuple of bool
        Periodic wrap per axis.  Half-space strips may only wrap along x1.
    """

    kind: Literal["bulk", "half-space"]
    x1_range: tuple[int, int]
    x2_range: tuple[int, int]
    n_internal: int = 1
    origin_offset: tuple[float, float] = (0.5, 0.5)
    periodic: tuple[bool, bool] = (False, False)

    def __post_init__(self):
        object.__setattr__(self, "x1_range", tuple(int(v) for v in self.x1_range))
        object.__setattr__(self, "x2_range", tuple(int(v) for v in self.x2_range))
        object.__setattr__(self, "origin_offset", tuple(float(v) for v in self.origin_offset))
        object.__setattr__(self, "periodic", tuple(bool(v) for v in self.periodic))
        if self.kind not in ("bulk", "half-space"):
            raise GeometryError(f"unknown geometry kind {self.kind!r}")
        if self.n_internal < 1:
            raise GeometryError("n_internal must be positive")
        for lo, hi in (self.x1_range, self.x2_range):
            if hi < lo:
                raise GeometryError(f"empty coordinate range [{lo}, {hi}]")
        if self.kind == "bulk":
            if not (self.x1_range[0] < 0 < self.x1_range[1] and self.x2_range[0] < 0 < self.x2_range[1]):
                raise GeometryError("bulk geometry must contain (0, 0) strictly in its interior")
        else:
            if self.x2_range[0] != 0:
                raise GeometryError("half-space x2_range must start at 0")
            if self.periodic[1]:
                raise GeometryError("half-space geometry cannot be periodic in x2")

    @classmethod
    def square(cls, side: int, n_internal: int = 1, periodic: bool = False, **kw) -> "LatticeGeometry":
        """Bulk ``side x side`` patch with coordinates ``[-side//2, side - side//2 - 1]``."""
        lo = -(side // 2)
        hi = side - side // 2 - 1
        return cls("bulk", (lo, hi), (lo, hi), n_internal, periodic=(periodic, periodic), **kw)

    @classmethod
    def strip(cls, side: int, width: int, n_internal: int = 1, periodic_x1: bool = False) -> "LatticeGeometry":
        """Half-space strip of ``side`` columns and ``width`` rows."""
        lo = -(side // 2)
        return cls("half-space", (lo, lo + side - 1), (0, width - 1), n_internal, periodic=(periodic_x1, False))

    def covering_bulk(self) -> "LatticeGeometry":
        """Bulk geometry whose upper half is this strip (rows ``[-W, W-1]``)."""
        if self.kind != "half-space":
            raise GeometryError("covering_bulk needs a half-space geometry")
        width = self.x2_range[1] + 1
        return LatticeGeometry("bulk", self.x1_range, (-width, width - 1), self.n_internal,
                               self.origin_offset, (self.periodic[0], False))

    def with_internal(self, n_internal: int) -> "LatticeGeometry":
        return LatticeGeometry(self.kind, self.x1_range, self.x2_range, n_internal,
                               self.origin_offset, self.periodic)

    @property
    def n1(self) -> int:
        return self.x1_range[1] - self.x1_range[0] + 1

    @property
    def n2(self) -> int:
        return self.x2_range[1] - self.x2_range[0] + 1

    @property
    def n_sites(self) -> int:
        return self.n1 * self.n2

    @property
    def dim(self) -> int:
        return self.n_sites * self.n_internal

    @cached_property
    def site_x1(self) -> np.ndarray:
        """x1 coordinate of every site in storage order."""
        return np.tile(np.arange(self.x1_range[0], self.x1_range[1] + 1), self.n2)

    @cached_property
    def site_x2(self) -> np.ndarray:
        return np.repeat(np.arange(self.x2_range[0], self.x2_range[1] + 1), self.n1)

    def coordinate(self, axis: int, per_site: bool = False) -> np.ndarray:
        """Coordinate of ``axis`` for every flat index (or every site)."""
        x = self.site_x1 if axis == 1 else self.site_x2
        if axis not in (1, 2):
            raise GeometryError(f"axis must be 1 or 2, got {axis}")
        return x if per_site else np.repeat(x, self.n_internal)

    def contains(self, x1: int, x2: int) -> bool:
        return self.x1_range[0] <= x1 <= self.x1_range[1] and self.x2_range[0] <= x2 <= self.x2_range[1]

    def wrap(self, x1: int, x2: int) -> Optional[tuple[int, int]]:
        """Map a coordinate into the patch using periodic wraps; ``None`` if outside."""
        if self.periodic[0]:
            x1 = (x1 - self.x1_range[0]) % self.n1 + self.x1_range[0]
        if self.periodic[1]:
            x2 = (x2 - self.x2_range[0]) % self.n2 + self.x2_range[0]
        return (x1, x2) if self.contains(x1, x2) else None

    def site_distance(self, metric: str = "euclidean") -> np.ndarray:
        """Site-to-site distance matrix (minimum image on periodic axes).

        ``metric`` is ``"euclidean"``, ``"chebyshev"`` (max of the axis
        distances) or ``"manhattan"`` (hopping distance).
        """
        d1 = np.abs(self.site_x1[:, None] - self.site_x1[None, :]).astype(float)
        d2 = np.abs(self.site_x2[:, None] - self.site_x2[None, :]).astype(float)
        if self.periodic[0]:
            d1 = np.minimum(d1, self.n1 - d1)
        if self.periodic[1]:
            d2 = np.minimum(d2, self.n2 - d2)
        if metric == "euclidean":
            return np.hypot(d1, d2)
        if metric == "chebyshev":
            return np.maximum(d1, d2)
        if metric == "manhattan":
            return d1 + d2
        raise ConfigurationError(f"unknown metric {metric!r}")

    def boundary_distance(self) -> np.ndarray:
        """Per-site distance to the nearest open edge of the patch (inf if none)."""
        out = np.full(self.n_sites, np.inf)
        for axis, (lo, hi) in ((1, self.x1_range), (2, self.x2_range)):
            if self.periodic[axis - 1]:
                continue
            x = self.coordinate(axis, per_site=True)
            out = np.minimum(out, np.minimum(x - lo, hi - x))
        return out

    def cut_distance(self, axis: int) -> np.ndarray:
        """Per-site distance to the nearest line where ``Λ(X_axis)`` or the patch jumps.

        For a bulk patch these are the cut between -1 and 0 and, on a periodic
        axis, the wrap seam.  For a half-space strip along axis 2 these are the
        two physical edges of the strip.
        """
        x = self.coordinate(axis, per_site=True).astype(float)
        lo, hi = self.x1_range if axis == 1 else self.x2_range
        if self.kind == "half-space" and axis == 2:
            return np.minimum(x - lo, hi - x)
        d = np.abs(x + 0.5) - 0.5
        if self.periodic[axis - 1]:
            d = np.minimum(d, np.minimum(x - lo, hi - x))
        return d

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "x1_range": list(self.x1_range),
            "x2_range": list(self.x2_range),
            "n_internal": self.n_internal,
            "origin_offset": list(self.origin_offset),
            "periodic": list(self.periodic),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeGeometry":
        return cls(d["kind"], tuple(d["x1_range"]), tuple(d["x2_range"]), int(d["n_internal"]),
                   tuple(d.get("origin_offset", (0.5, 0.5))), tuple(d.get("periodic", (False, False))))


@dataclass(frozen=True, eq=False)
class LatticeOperator:
    """Dense operator on the Hilbert space of a :class:`LatticeGeometry`.

    The matrix is copied and frozen at construction.  ``hermitian`` is
    measured, never trusted from the caller.
    """

    geometry: LatticeGeometry
    matrix: np.ndarray
    hermitian: bool = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.geometry.dim, self.geometry.dim):
            raise GeometryError(f"matrix shape {m.shape} does not match geometry dimension {self.geometry.dim}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        herm = bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= HERMITIAN_TOL)
        object.__setattr__(self, "hermitian", herm)

    @classmethod
    def identity(cls, geometry: LatticeGeometry) -> "LatticeOperator":
        return cls(geometry, np.eye(geometry.dim))

    @classmethod
    def zeros(cls, geometry: LatticeGeometry) -> "LatticeOperator":
        return cls(geometry, np.zeros((geometry.dim, geometry.dim)))

    @classmethod
    def diagonal(cls, geometry: LatticeGeometry, values: np.ndarray) -> "LatticeOperator":
        return cls(geometry, np.diag(np.asarray(values, dtype=complex)))

    def _check(self, other: "LatticeOperator"):
        if other.geometry != self.geometry:
            raise GeometryError("operators live on different geometries")

    def __matmul__(self, other: "LatticeOperator") -> "LatticeOperator":
        self._check(other)
        return LatticeOperator(self.geometry, self.matrix @ other.matrix)

    def __add__(self, other: "LatticeOperator") -> "LatticeOperator":
        self._check(other)
        return LatticeOperator(self.geometry, self.matrix + other.matrix)

    def __sub__(self, other: "LatticeOperator") -> "LatticeOperator":
        self._check(other)
        return LatticeOperator(self.geometry, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "LatticeOperator":
        return LatticeOperator(self.geometry, scalar * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "LatticeOperator":
        return LatticeOperator(self.geometry, -self.matrix)

    def dagger(self) -> "LatticeOperator":
        return LatticeOperator(self.geometry, self.matrix.conj().T)

    def norm(self) -> float:
        """Operator (spectral) norm."""
        return float(np.linalg.norm(self.matrix, 2))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix), initial=0.0))


def site_index(geometry: LatticeGeometry, x1: int, x2: int, s: int = 0) -> int:
    """Flat row/column index of ``(x1, x2, s)``."""
    if not geometry.contains(x1, x2):
        raise GeometryError(f"site ({x1}, {x2}) outside geometry {geometry.x1_range} x {geometry.x2_range}")
    if not 0 <= s < geometry.n_internal:
        raise GeometryError(f"internal index {s} outside [0, {geometry.n_internal})")
    i1 = x1 - geometry.x1_range[0]
    i2 = x2 - geometry.x2_range[0]
    return (i2 * geometry.n1 + i1) * geometry.n_internal + s


def position_multiplier(geometry: LatticeGeometry, axis: int, f: Callable[[np.ndarray], np.ndarray]) -> LatticeOperator:
    """Diagonal operator ``f(X_axis) ⊗ 1_N``."""
    x = geometry.coordinate(axis)
    return LatticeOperator.diagonal(geometry, np.asarray(f(x), dtype=complex))


def step_operator(geometry: LatticeGeometry, axis: int) -> LatticeOperator:
    """Half-space projection ``Λ_axis = Λ(X_axis)``."""
    return position_multiplier(geometry, axis, heaviside)


def flux_phase(geometry: LatticeGeometry, orientation: int = 1) -> LatticeOperator:
    """Diagonal flux-insertion unitary.

    Entry at site ``x`` is ``exp(i * orientation * arg((x1+o1) + i(x2+o2)))``.
    ``orientation=-1`` gives the adjoint.
    """
    if geometry.kind != "bulk":
        raise GeometryError("flux_phase requires a bulk geometry")
    if orientation not in (1, -1):
        raise ConfigurationError("orientation must be +1 or -1")
    o1, o2 = geometry.origin_offset
    z = (geometry.coordinate(1) + o1) + 1j * (geometry.coordinate(2) + o2)
    if np.any(np.abs(z) < 1e-12):
        raise ConfigurationError(f"origin offset {geometry.origin_offset} puts the branch point on a lattice site")
    return LatticeOperator.diagonal(geometry, np.exp(1j * orientation * np.angle(z)))


def nc_derivative(axis: int, A: LatticeOperator) -> LatticeOperator:
    """Non-commutative derivative ``-i [Λ_axis, A]``."""
    lam = heaviside(A.geometry.coordinate(axis))
    m = A.matrix
    return LatticeOperator(A.geometry, -1j * (lam[:, None] * m - m * lam[None, :]))


def _half_space_rows(bulk: LatticeGeometry, half: LatticeGeometry) -> np.ndarray:
    if half.kind != "half-space" or bulk.kind != "bulk":
        raise GeometryError("need a (bulk, half-space) pair")
    if bulk.x1_range != half.x1_range or bulk.n_internal != half.n_internal:
        raise GeometryError("bulk and half-space must share x1_range and n_internal")
    if not (bulk.x2_range[0] <= 0 and bulk.x2_range[1] >= half.x2_range[1]):
        raise GeometryError("bulk x2_range must cover the half-space rows")
    offset = (0 - bulk.x2_range[0]) * bulk.n1 * bulk.n_internal
    return offset + np.arange(half.dim)


def embed_half_space(A_half: LatticeOperator, bulk: LatticeGeometry,
                     filler: Optional[LatticeOperator] = None) -> LatticeOperator:
    """Return ``ι Â ι*`` on ``bulk``, plus ``filler`` if given."""
    rows = _half_space_rows(bulk, A_half.geometry)
    m = np.zeros((bulk.dim, bulk.dim), dtype=complex)
    m[np.ix_(rows, rows)] = A_half.matrix
    if filler is not None:
        if filler.geometry != bulk:
            raise GeometryError("filler must live on the bulk geometry")
        m = m + filler.matrix
    return LatticeOperator(bulk, m)


def restrict_half_space(A: LatticeOperator, half: LatticeGeometry) -> LatticeOperator:
    """Return ``ι* A ι`` on the half-space geometry ``half``."""
    rows = _half_space_rows(A.geometry, half)
    return LatticeOperator(half, A.matrix[np.ix_(rows, rows)])


@dataclass(frozen=True)
class LocalityFit:
    """Result of :func:`decay_fit`.

    ``status`` is ``"ok"`` for a successful fit (then ``rate > 0``),
    ``"failed"`` when no decaying envelope could be fitted and
    ``"numerically-zero"`` when every block is below 1e-15.
    """

    model: str
    rate: float
    prefactor: float
    max_residual: float
    status: str
    confinement_direction: Optional[int] = None
    n_shells: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "rate": self.rate,
            "prefactor": self.prefactor,
            "max_residual": self.max_residual,
            "status": self.status,
            "confinement_direction": self.confinement_direction,
            "n_shells": self.n_shells,
        }


FIT_MODELS = ("exponential", "polynomial", "loc2-exponential", "loc2-polynomial")


def block_trace_norms(A: LatticeOperator) -> np.ndarray:
    """Trace norms of all N x N site blocks, shape ``(n_sites, n_sites)``."""
    g = A.geometry
    n, N = g.n_sites, g.n_internal
    blocks = A.matrix.reshape(n, N, n, N).transpose(0, 2, 1, 3)
    if N == 1:
        return np.abs(blocks[..., 0, 0])
    return np.linalg.svd(blocks, compute_uv=False).sum(axis=-1)


def decay_fit(A: LatticeOperator, model: str = "exponential",
              confinement_direction: Optional[int] = None, margin: int = 2,
              zero_floor: float = 1e-15, metric: str = "euclidean",
              off_diagonal: bool = False) -> LocalityFit:
    """Fit the decay envelope of the site blocks of ``A``.

    The block norms ``‖A_xy‖₁`` are grouped into shells of equal effective
    distance ``d`` and the shell maxima are fitted by least squares:
    ``log‖A_xy‖ ≈ log C − μ d`` (exponential) or ``log C − α log(1+d)``
    (polynomial).  For the ``loc2`` models ``d = ‖x−y‖ + c(x) + c(y)``
    where ``c`` is the distance to the nearest confinement line along
    ``confinement_direction`` (see :meth:`LatticeGeometry.cut_distance`).

    Only sites at least ``margin`` away from an open patch edge enter, except
    along the confinement direction of a half-space strip, whose edges are the
    object of study.  ``metric`` selects the lattice distance (see
    :meth:`LatticeGeometry.site_distance`); ``off_diagonal`` drops the
    on-site blocks.

    Returns
    -------
    LocalityFit
        ``status="ok"`` iff at least two shells carry data and the fitted
        rate is positive.
    """
    if model not in FIT_MODELS:
        raise ConfigurationError(f"unknown fit model {model!r}")
    g = A.geometry
    loc2 = model.startswith("loc2")
    if loc2 and confinement_direction not in (1, 2):
        raise ConfigurationError("loc2 models need confinement_direction 1 or 2")
    norms = block_trace_norms(A)
    scale = max(float(norms.max(initial=0.0)), 1.0)
    if norms.max(initial=0.0) < zero_floor:
        return LocalityFit(model, float("nan"), 0.0, 0.0, "numerically-zero", confinement_direction)

    keep = np.ones(g.n_sites, dtype=bool)
    for axis, (lo, hi) in ((1, g.x1_range), (2, g.x2_range)):
        if g.periodic[axis - 1]:
            continue
        if loc2 and g.kind == "half-space" and axis == confinement_direction == 2:
            continue
        x = g.coordinate(axis, per_site=True)
        keep &= (x - lo >= margin) & (hi - x >= margin)
    idx = np.flatnonzero(keep)
    dist = g.site_distance(metric)[np.ix_(idx, idx)]
    if loc2:
        c = g.cut_distance(confinement_direction)[idx]
        dist = dist + c[:, None] + c[None, :]
    vals = norms[np.ix_(idx, idx)]
    shells = np.round(dist, 6).ravel()
    vals = vals.ravel()
    big = vals > zero_floor * scale
    if off_diagonal:
        big &= (g.site_distance()[np.ix_(idx, idx)] > 0).ravel()
    if not np.any(big):
        return LocalityFit(model, float("nan"), 0.0, 0.0, "numerically-zero", confinement_direction)
    uniq, inv = np.unique(shells[big], return_inverse=True)
    env = np.zeros(len(uniq))
    np.maximum.at(env, inv, vals[big])
    if len(uniq) < 2:
        return LocalityFit(model, float("nan"), 0.0, 0.0, "failed", confinement_direction, len(uniq))
    xfit = np.log1p(uniq) if model.endswith("polynomial") else uniq
    yfit = np.log(env)
    slope, intercept = np.polyfit(xfit, yfit, 1)
    resid = float(np.max(np.abs(yfit - (slope * xfit + intercept))))
    rate = -float(slope)
    status = "ok" if rate > 0 else "failed"
    return LocalityFit(model, rate, float(np.exp(intercept)), resid, status, confinement_direction, len(uniq))


def dump_operator(A: LatticeOperator, path: str) -> None:
    """Write ``A`` as JSON: geometry fields plus row-major (re, im) float pairs."""
    m = A.matrix
    payload = {
        "format": "fredholm_lab.operator/1",
        "geometry": A.geometry.to_dict(),
        "shape": list(m.shape),
        "data": np.stack([m.real, m.imag], axis=-1).ravel().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_operator(path: str) -> LatticeOperator:
    with open(path) as fh:
        payload = json.load(fh)
    geom = LatticeGeometry.from_dict(payload["geometry"])
    data = np.asarray(payload["data"], dtype=float).reshape(*payload["shape"], 2)
    return LatticeOperator(geom, data[..., 0] + 1j * data[..., 1])

"""Interpolation paths between index formulas and their monitors.

A *winding* path is a family of Hermitian generators ``A(t)`` whose
winding operators ``𝕎₁A(t)`` must stay Fredholm; a *hamiltonian* path is a
family ``H(t)`` whose spectral gap must stay open.  :func:`monitor` samples a
path, refines around dips and returns a :class:`HomotopyReport`.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AmbiguityError, ConfigurationError, FredholmLabError, GapViolationError, GeometryError
from .indices import (FLUX_CENTER, IndexResult, disk_region, fredholm_index_fedosov, lower_half_region,
                      near_kernel_modes, winding_op, z2_localized_count)
from .lattice import LatticeOperator, LocalityFit, decay_fit, heaviside, restrict_half_space
from .spectral import SwitchFunction, apply_function_eig, eig_hermitian, spectral_gap
from .symmetry import TimeReversal, commutes_with_tr

__all__ = [
    "HomotopyPath",
    "HomotopyReport",
    "MonitorThresholds",
    "path_corner_flatten",
    "path_truncate_flatten",
    "path_boundary_conditions",
    "path_physical",
    "path_projection_family",
    "monitor",
]

DEFAULT_SAMPLES = tuple(np.linspace(0.0, 1.0, 21))


@dataclass(frozen=True, eq=False)
class HomotopyPath:
    """Family ``t ↦ A(t)`` on ``[0, 1]``.

    ``kind`` is ``"winding"`` (generators of winding operators) or
    ``"hamiltonian"`` (physical Hamiltonians whose gap must stay open).
    """

    generator: Callable[[float], LatticeOperator]
    label: str
    kind: str = "winding"
    samples: tuple = DEFAULT_SAMPLES
    endpoints: tuple = (None, None)

    def __call__(self, t: float) -> LatticeOperator:
        A = self.generator(float(t))
        if not A.hermitian:
            raise ConfigurationError(f"path {self.label} produced a non-Hermitian operator at t={t}")
        return A

    def endpoint_error(self) -> float:
        """Max-norm mismatch between ``A(0), A(1)`` and the declared endpoints."""
        err = 0.0
        for t, ref in zip((0.0, 1.0), self.endpoints):
            if ref is not None:
                err = max(err, float(np.max(np.abs(self(t).matrix - ref.matrix))))
        return err


@dataclass(frozen=True)
class MonitorThresholds:
    fredholm_gap: float = 0.05
    spectral_gap: float = 0.05
    refinements: int = 3
    loc2_model: str = "loc2-exponential"


@dataclass
class HomotopyReport:
    label: str
    kind: str
    records: list
    verdict: str
    reference_value: Optional[int] = None
    flagged: list = field(default_factory=list)

    @property
    def min_fredholm_gap(self) -> float:
        vals = [r["fredholm_gap"] for r in self.records if r.get("fredholm_gap") is not None]
        return float(min(vals)) if vals else float("nan")

    @property
    def min_spectral_gap(self) -> float:
        vals = [r["gap_width"] for r in self.records if r.get("gap_width") is not None]
        return float(min(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        recs = []
        for r in self.records:
            d = dict(r)
            if isinstance(d.get("index"), IndexResult):
                d["index"] = d["index"].to_dict()
            if isinstance(d.get("loc2_fit"), LocalityFit):
                d["loc2_fit"] = d["loc2_fit"].to_dict()
            recs.append(d)
        return {"label": self.label, "kind": self.kind, "verdict": self.verdict,
                "reference_value": self.reference_value, "flagged": list(self.flagged), "records": recs}


def _lam2(A: LatticeOperator) -> np.ndarray:
    return heaviside(A.geometry.coordinate(2))


def _check_window(H: LatticeOperator, g: SwitchFunction):
    gap = spectral_gap(H)
    if gap.contains_zero or not (gap.gap_lower < g.a and g.b < gap.gap_upper):
        raise GapViolationError(f"switch window ({g.a}, {g.b}) is not inside the gap "
                                f"({gap.gap_lower:.4f}, {gap.gap_upper:.4f})")


def _herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def path_corner_flatten(H: LatticeOperator, g: SwitchFunction, samples: Sequence[float] = DEFAULT_SAMPLES) -> HomotopyPath:
    """``A(t) = t Λ₂ g(H) Λ₂ + (1−t) g(H) Λ₂ g(H)``."""
    _check_window(H, g)
    G = apply_function_eig(H, g).matrix
    lam = _lam2(H)
    A0 = _herm((G * lam[None, :]) @ G)
    A1 = _herm(lam[:, None] * G * lam[None, :])
    geom = H.geometry
    ends = (LatticeOperator(geom, A0), LatticeOperator(geom, A1))
    return HomotopyPath(lambda t: LatticeOperator(geom, (1 - t) * A0 + t * A1), "corner-flatten",
                        samples=tuple(samples), endpoints=ends)


def path_truncate_flatten(H: LatticeOperator, g: SwitchFunction, samples: Sequence[float] = DEFAULT_SAMPLES) -> HomotopyPath:
    """``A(t) = (1−t) Λ₂ g(H) Λ₂ + t Λ₂ g(Λ₂HΛ₂) Λ₂``."""
    _check_window(H, g)
    lam = _lam2(H)
    G = apply_function_eig(H, g).matrix
    Ht = LatticeOperator(H.geometry, lam[:, None] * H.matrix * lam[None, :])
    Gt = apply_function_eig(Ht, g).matrix
    A0 = _herm(lam[:, None] * G * lam[None, :])
    A1 = _herm(lam[:, None] * Gt * lam[None, :])
    geom = H.geometry
    ends = (LatticeOperator(geom, A0), LatticeOperator(geom, A1))
    return HomotopyPath(lambda t: LatticeOperator(geom, (1 - t) * A0 + t * A1), "truncate-flatten",
                        samples=tuple(samples), endpoints=ends)


def path_boundary_conditions(H: LatticeOperator, Hhat: LatticeOperator, g: SwitchFunction,
                             depth: int = 1, samples: Sequence[float] = DEFAULT_SAMPLES) -> HomotopyPath:
    """``A(t) = t g(ι*Hι) + (1−t) g(Ĥ)`` on the strip.

    ``Ĥ − ι*Hι`` must vanish outside the first ``depth`` rows.
    """
    strip = Hhat.geometry
    Hd = restrict_half_space(H, strip)
    diff = np.abs(Hd.matrix - Hhat.matrix).reshape(strip.n_sites, strip.n_internal, strip.n_sites, -1).max(axis=(1, 3))
    rows, cols = np.nonzero(diff > 1e-12)
    if np.any(strip.site_x2[rows] >= depth) or np.any(strip.site_x2[cols] >= depth):
        raise GeometryError(f"Ĥ differs from ι*Hι beyond depth {depth}: not a compatible pair")
    G1 = apply_function_eig(Hd, g).matrix
    G0 = apply_function_eig(Hhat, g).matrix
    ends = (LatticeOperator(strip, G0), LatticeOperator(strip, G1))
    return HomotopyPath(lambda t: LatticeOperator(strip, (1 - t) * G0 + t * G1), "boundary-conditions",
                        samples=tuple(samples), endpoints=ends)


def path_physical(H0: LatticeOperator, H1: LatticeOperator, kind: str = "linear",
                  samples: Sequence[float] = DEFAULT_SAMPLES) -> HomotopyPath:
    """Straight line ``H(t) = (1−t) H0 + t H1`` between Hamiltonians."""
    if kind != "linear":
        raise ConfigurationError(f"unknown path kind {kind!r}")
    if H0.geometry != H1.geometry:
        raise GeometryError("endpoints live on different geometries")
    m0, m1 = H0.matrix, H1.matrix
    geom = H0.geometry
    return HomotopyPath(lambda t: LatticeOperator(geom, (1 - t) * m0 + t * m1), "physical", "hamiltonian",
                        tuple(samples), (H0, H1))


def path_projection_family(family: Callable[[float], LatticeOperator], g: SwitchFunction,
                           label: str = "projection-family",
                           samples: Sequence[float] = DEFAULT_SAMPLES) -> HomotopyPath:
    """Winding path with generator ``g(H(t)) Λ₂ g(H(t))`` for a Hamiltonian family.

    Used for adversarial checks: if ``H(t)`` closes its gap the generator
    stops being a projection away from the cut and the monitor must notice.
    """
    def gen(t):
        H = family(t)
        G = apply_function_eig(H, g).matrix
        lam = _lam2(H)
        return LatticeOperator(H.geometry, _herm((G * lam[None, :]) @ G))
    return HomotopyPath(gen, label, samples=tuple(samples))


def _evaluate(path: HomotopyPath, t: float, index_method: str, thr: MonitorThresholds,
              center, radius, theta: Optional[TimeReversal]) -> dict:
    rec: dict = {"t": float(t), "flags": []}
    try:
        A = path(t)
    except FredholmLabError as exc:
        rec["flags"].append(f"generator: {exc}")
        return rec
    if theta is not None:
        rec["tr_residual"] = commutes_with_tr(A, theta)
        if rec["tr_residual"] > 1e-8:
            rec["flags"].append("time-reversal residual above 1e-8")
    if path.kind == "hamiltonian":
        gap = spectral_gap(A)
        rec["gap_lower"], rec["gap_upper"] = gap.gap_lower, gap.gap_upper
        rec["gap_width"] = float(gap.width)
        if gap.contains_zero or gap.width < thr.spectral_gap:
            rec["flags"].append("spectral gap closed")
        return rec
    eig = eig_hermitian(A)
    W = winding_op(A, eig)
    spec = near_kernel_modes(W)
    rec["fredholm_gap"] = spec.fredholm_gap
    rec["cluster_size"] = spec.cluster_size
    if spec.fredholm_gap < thr.fredholm_gap:
        rec["flags"].append("fredholm gap below threshold")
    defect = LatticeOperator(A.geometry, eig.apply(lambda w: w * w - w))
    fit = decay_fit(defect, thr.loc2_model, confinement_direction=2)
    rec["loc2_fit"] = fit
    if fit.status not in ("ok", "numerically-zero"):
        rec["flags"].append("A(t)^2 - A(t) failed the LOC2 fit")
    try:
        if index_method == "z2":
            idx = z2_localized_count(W, center, radius, spectrum=spec)
        elif index_method == "fedosov":
            g = A.geometry
            region = lower_half_region(g) if g.kind == "half-space" else disk_region(g, center, radius)
            idx = fredholm_index_fedosov(W, region)
        else:
            raise ConfigurationError(f"unknown index method {index_method!r}")
        rec["index"] = idx
        if not idx.converged:
            rec["flags"].append("index not converged")
    except AmbiguityError as exc:
        rec["flags"].append(f"index ambiguous: {exc}")
    return rec


def monitor(path: HomotopyPath, index_method: str = "fedosov", thresholds: MonitorThresholds = MonitorThresholds(),
            center: Optional[Sequence[float]] = None, radius: Optional[float] = None,
            theta: Optional[TimeReversal] = None, workers: int = 1) -> HomotopyReport:
    """Sample ``path``, refine near gap dips and judge index constancy.

    Verdicts: ``"violation"`` if two converged, unflagged samples disagree;
    otherwise ``"withheld"`` if any sample is flagged (gap below threshold,
    LOC₂ failure, ambiguous or unconverged index, generator error);
    otherwise ``"index-constant"``.  Hamiltonian paths have no index; their
    verdict is ``"index-constant"`` exactly when the gap stays open.
    """
    ts = sorted(set(float(t) for t in path.samples))
    records: dict = {}

    def run(batch):
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                res = list(pool.map(lambda t: _evaluate(path, t, index_method, thresholds, center_, radius, theta), batch))
        else:
            res = [_evaluate(path, t, index_method, thresholds, center_, radius, theta) for t in batch]
        for r in res:
            records[r["t"]] = r

    def gap_of(r):
        return r.get("gap_width") if path.kind == "hamiltonian" else r.get("fredholm_gap")

    limit = thresholds.spectral_gap if path.kind == "hamiltonian" else thresholds.fredholm_gap
    center_ = center
    if center_ is None:
        probe = path.endpoints[0] if path.endpoints[0] is not None else path(0.0)
        center_ = (0.0, 0.0) if probe.geometry.kind == "half-space" else FLUX_CENTER
    run(ts)
    for _ in range(thresholds.refinements):
        order = sorted(records)
        new = set()
        for i, t in enumerate(order):
            gv = gap_of(records[t])
            if gv is None or gv < 2 * limit:
                if i > 0:
                    new.add(0.5 * (order[i - 1] + t))
                if i + 1 < len(order):
                    new.add(0.5 * (t + order[i + 1]))
        new -= set(records)
        if not new:
            break
        run(sorted(new))
    recs = [records[t] for t in sorted(records)]
    flagged = [r["t"] for r in recs if r["flags"]]
    if path.kind == "hamiltonian":
        verdict = "withheld" if flagged else "index-constant"
        return HomotopyReport(path.label, path.kind, recs, verdict, None, flagged)
    good = [r["index"].value for r in recs if not r["flags"] and isinstance(r.get("index"), IndexResult)]
    ref = recs[0]["index"].value if isinstance(recs[0].get("index"), IndexResult) else None
    if len(set(good)) > 1 or (ref is not None and good and any(v != ref for v in good)):
        verdict = "violation"
    elif flagged or ref is None:
        verdict = "withheld"
    else:
        verdict = "index-constant"
    return HomotopyReport(path.label, path.kind, recs, verdict, ref, flagged)

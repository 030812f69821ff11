"""Config-driven command line front end.

Usage::

    fredholm-lab <experiment> --config run.json [--seeds 0,1,2] [--workers 4] [--out results]

Every experiment writes ``<stem>.json`` (full nested record), ``<stem>.csv``
(one row per sample or grid point, preceded by a ``#`` schema row) and
``<stem>.timing.json``.  The first two are a pure function of the config;
wall times only ever go to the timing sidecar and to stderr.

Exit codes: 0 for a fully converged, warning-free run; 2 when every sample
ran but some index did not converge, a monitor flagged a sample or a numerical
warning was raised; 1 on errors.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigurationError, FredholmLabError, GapViolationError
from .homotopy import (HomotopyReport, MonitorThresholds, monitor, path_boundary_conditions, path_corner_flatten,
                       path_physical, path_projection_family, path_truncate_flatten)
from .indices import (FLUX_CENTER, IndexResult, bulk_corner_operator, bulk_flux_operator, chern_kubo, disk_region,
                      edge_chern, edge_operator, edge_z2, fermi_scan, fredholm_index_fedosov, z2_localized_count)
from .lattice import LatticeGeometry, LatticeOperator, LocalityFit, decay_fit
from .models import (DISORDER_ALGORITHM, BoundaryCondition, DisorderSpec, ModelSpec, build_bulk, build_edge,
                     edge_potential)
from .oracles import bulk_gap_kspace, chern_berry, edge_spectral_flow, z2_pfaffian_trim
from .spectral import (GapReport, apply_function_eig, apply_function_hs, combes_thomas_check, default_switch,
                       eig_hermitian, fermi_projection, spectral_gap)
from .symmetry import standard_tr

__all__ = ["EXPERIMENTS", "DEFAULT_CONFIG", "CONFIG_SCHEMA", "load_config", "run", "selfcheck", "main"]

EXPERIMENTS = ("bulk-index", "edge-index", "bec-check", "phase-scan", "mu-scan", "homotopy-check",
               "locality-check", "selfcheck")

DEFAULT_CONFIG: dict = {
    "experiment": "bulk-index",
    "model": {"family": "qwz", "mass": -1.0, "inter_block": 0.0, "spinful": False},
    "disorder": {"amplitude": 0.0, "unit": "absolute", "kind": "onsite-scalar"},
    "geometry": {"n1": 16, "n2": 0, "strip_width": 24, "periodic": True},
    "boundaries": [{"kind": "dirichlet", "onsite": 0.0, "hopping": 0.0, "depth": 1}],
    "index": {"fedosov_tol": 0.05, "step_tol": 0.01, "n_start": 8, "n_max": 4096, "policy": "gap",
              "radius": 0.0},
    "switch": {"fraction": 0.8},
    "monitor": {"fredholm_gap": 0.05, "spectral_gap": 0.05, "refinements": 3, "samples": 21,
                "paths": ["corner-flatten", "truncate-flatten", "boundary-conditions"],
                "adversarial_target": -3.0},
    "scan": {"masses": [-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
             "mu_start": -3.5, "mu_stop": 0.0, "mu_num": 40},
    "transport": {"enabled": False, "samples": 11},
    "locality": {"im_z": [0.25, 0.5, 1.0], "hs_side": 8, "hs_quadrature": [64, 96, 128]},
    "seeds": [0],
    "output": {"dir": "results", "stem": ""},
}

# key path -> (unit, description); documents every config field
CONFIG_SCHEMA: dict = {
    "experiment": ("", "one of " + ", ".join(EXPERIMENTS)),
    "model.family": ("", "qwz, bhz or atomic-trivial"),
    "model.mass": ("hopping units", "mass u (on-site splitting for atomic-trivial)"),
    "model.inter_block": ("hopping units", "BHZ spin-block coupling strength (0 = decoupled)"),
    "model.spinful": ("", "atomic-trivial only: double the internal space so time reversal applies"),
    "disorder.amplitude": ("hopping units or gap widths", "W in W*uniform[-1,1) on-site disorder"),
    "disorder.unit": ("", "absolute, or clean-gap to measure W in clean spectral-gap widths"),
    "disorder.kind": ("", "onsite-scalar"),
    "geometry.n1": ("sites", "bulk side along x1 (even)"),
    "geometry.n2": ("sites", "bulk side along x2 (even; 0 means equal to n1)"),
    "geometry.strip_width": ("sites", "rows of the half-space strip"),
    "geometry.periodic": ("", "bulk patch is a torus"),
    "boundaries[].kind": ("", "dirichlet or edge-potential"),
    "boundaries[].onsite": ("hopping units", "edge-potential on-site energy"),
    "boundaries[].hopping": ("hopping units", "edge-potential x1 hopping"),
    "boundaries[].depth": ("rows", "edge-potential support depth"),
    "index.fedosov_tol": ("", "Fedosov distance-to-integer tolerance"),
    "index.step_tol": ("", "Fedosov successive-term tolerance"),
    "index.n_start": ("", "first Fedosov power"),
    "index.n_max": ("", "last Fedosov power"),
    "index.policy": ("", "near-kernel policy: gap"),
    "index.radius": ("sites", "localization radius (0 = a quarter of each side, half the strip width)"),
    "switch.fraction": ("", "switch window as a fraction of the spectral gap"),
    "monitor.fredholm_gap": ("", "homotopy Fredholm-gap threshold"),
    "monitor.spectral_gap": ("energy", "homotopy spectral-gap threshold for Hamiltonian paths"),
    "monitor.refinements": ("", "maximum refinement rounds near gap dips"),
    "monitor.samples": ("", "equidistant samples per path"),
    "monitor.paths": ("", "corner-flatten, truncate-flatten, boundary-conditions, physical, adversarial"),
    "monitor.adversarial_target": ("hopping units", "final mass of the adversarial mass sweep"),
    "scan.masses": ("hopping units", "phase-scan mass grid"),
    "scan.mu_start": ("energy", "mu-scan first Fermi level"),
    "scan.mu_stop": ("energy", "mu-scan last Fermi level"),
    "scan.mu_num": ("", "mu-scan number of Fermi levels"),
    "transport.enabled": ("", "bec-check: transport the clean bulk index to the disordered sample"),
    "transport.samples": ("", "samples on the clean-to-disordered path"),
    "locality.im_z": ("energy", "imaginary parts for the Combes-Thomas resolvent fits"),
    "locality.hs_side": ("sites", "side of the Helffer-Sjostrand cross-check torus"),
    "locality.hs_quadrature": ("", "quadrature sizes; the first is the default, the rest refinements"),
    "seeds": ("", "disorder seeds, one sample each"),
    "output.dir": ("", "output directory"),
    "output.stem": ("", "file stem (empty = experiment name)"),
}

_PATHS = ("corner-flatten", "truncate-flatten", "boundary-conditions", "physical", "adversarial")


# --------------------------------------------------------------------------- config

def _merge(base: dict, user: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config key {path!r}")
        ref = base[key]
        if isinstance(ref, dict):
            if not isinstance(val, dict):
                raise ConfigurationError(f"config key {path!r} must be an object")
            out[key] = _merge(ref, val, path + ".")
        elif key == "boundaries":
            if not isinstance(val, list) or not val:
                raise ConfigurationError("'boundaries' must be a non-empty list")
            out[key] = [_merge(ref[0], b, f"boundaries[{i}].") for i, b in enumerate(val)]
        else:
            out[key] = _check_type(path, ref, val)
    return out


def _check_type(path: str, ref, val):
    if isinstance(ref, bool):
        ok = isinstance(val, bool)
    elif isinstance(ref, int):
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif isinstance(ref, float):
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        val = float(val) if ok else val
    elif isinstance(ref, str):
        ok = isinstance(val, str)
    elif isinstance(ref, list):
        ok = isinstance(val, list)
    else:
        ok = True
    if not ok:
        raise ConfigurationError(f"config key {path!r} has the wrong type ({type(val).__name__})")
    return val


def load_config(source: str | Path | dict, experiment: Optional[str] = None,
                seeds: Optional[Sequence[int]] = None, out: Optional[str] = None) -> dict:
    """Read a JSON config, fill defaults and validate it.

    Command-line overrides (``experiment``, ``seeds``, ``out``) take
    precedence over the file.
    """
    if isinstance(source, dict):
        user = copy.deepcopy(source)
    else:
        try:
            user = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigurationError("config must be a JSON object")
    cfg = _merge(DEFAULT_CONFIG, user)
    if experiment is not None:
        if "experiment" in user and user["experiment"] != experiment:
            raise ConfigurationError(f"config experiment {user['experiment']!r} differs from {experiment!r}")
        cfg["experiment"] = experiment
    if seeds is not None:
        cfg["seeds"] = [int(s) for s in seeds]
    if out is not None:
        cfg["output"]["dir"] = str(out)
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {cfg['experiment']!r}")
    ModelSpec(**cfg["model"])
    if cfg["disorder"]["unit"] not in ("absolute", "clean-gap"):
        raise ConfigurationError("disorder.unit must be 'absolute' or 'clean-gap'")
    geo = cfg["geometry"]
    for key in ("n1", "n2"):
        if geo[key] % 2 or geo[key] < 0 or (key == "n1" and geo[key] < 4):
            raise ConfigurationError(f"geometry.{key} must be even and at least 4")
    if geo["strip_width"] < 2:
        raise ConfigurationError("geometry.strip_width must be at least 2")
    for b in cfg["boundaries"]:
        if b["kind"] not in ("dirichlet", "edge-potential"):
            raise ConfigurationError(f"unknown boundary kind {b['kind']!r}")
    if not cfg["seeds"] or any(not isinstance(s, int) or s < 0 for s in cfg["seeds"]):
        raise ConfigurationError("seeds must be a non-empty list of non-negative integers")
    if len(set(cfg["seeds"])) != len(cfg["seeds"]):
        raise ConfigurationError("seeds must be distinct")
    for p in cfg["monitor"]["paths"]:
        if p not in _PATHS:
            raise ConfigurationError(f"unknown homotopy path {p!r}")
    if cfg["monitor"]["samples"] < 2 or cfg["scan"]["mu_num"] < 1:
        raise ConfigurationError("monitor.samples must be >= 2 and scan.mu_num >= 1")
    if cfg["index"]["policy"] != "gap":
        raise ConfigurationError("index.policy must be 'gap'")


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical config without the output section."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# --------------------------------------------------------------------------- serialization

def _plain(obj):
    """Recursively convert results to JSON-ready values with fixed float precision."""
    if isinstance(obj, (IndexResult, GapReport, LocalityFit, HomotopyReport)):
        return _plain(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.12g}")
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.10g}"
    return str(v)


def render_csv(columns: Sequence[tuple[str, str, str]], rows: Sequence[dict]) -> str:
    """CSV text: a ``#`` schema row (``name [unit]: description``), the header, the rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    schema = [f"{name} [{unit}]: {desc}" if unit else f"{name}: {desc}" for name, unit, desc in columns]
    schema[0] = "# " + schema[0]
    w.writerow(schema)
    w.writerow([c[0] for c in columns])
    for r in rows:
        w.writerow([_cell(r.get(c[0])) for c in columns])
    return buf.getvalue()


# --------------------------------------------------------------------------- builders

@dataclass
class _Sample:
    """Per-sample outcome: CSV rows, nested JSON record, warnings, error."""

    seed: int
    rows: list = field(default_factory=list)
    record: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    error: Optional[str] = None


def _model(cfg) -> ModelSpec:
    return ModelSpec(**cfg["model"])


def _bulk_geometry(cfg, N: int, n1: Optional[int] = None, n2: Optional[int] = None) -> LatticeGeometry:
    geo = cfg["geometry"]
    n1 = n1 or geo["n1"]
    n2 = n2 or geo["n2"] or n1
    per = geo["periodic"]
    return LatticeGeometry("bulk", (-(n1 // 2), n1 // 2 - 1), (-(n2 // 2), n2 // 2 - 1), N, periodic=(per, per))


def _strip_geometry(cfg, N: int) -> LatticeGeometry:
    return LatticeGeometry.strip(cfg["geometry"]["n1"], cfg["geometry"]["strip_width"], N)


def _disorder(cfg, model: ModelSpec, seed: int) -> Optional[DisorderSpec]:
    d = cfg["disorder"]
    amp = float(d["amplitude"])
    if amp == 0:
        return None
    if d["unit"] == "clean-gap":
        lo, hi = bulk_gap_kspace(model)
        amp *= hi - lo
    return DisorderSpec(amp, seed, d["kind"])


def _radius(cfg):
    r = cfg["index"]["radius"]
    return None if r == 0 else float(r)


def _region(cfg, geometry: LatticeGeometry):
    return disk_region(geometry, FLUX_CENTER, _radius(cfg))


def _fedosov(cfg, A: LatticeOperator, region=None) -> IndexResult:
    ix = cfg["index"]
    region = _region(cfg, A.geometry) if region is None else region
    return fredholm_index_fedosov(A, region, ix["n_start"], ix["n_max"], ix["fedosov_tol"], ix["step_tol"])


def _boundary(b: dict, strip: LatticeGeometry) -> Optional[BoundaryCondition]:
    if b["kind"] == "dirichlet":
        return None
    return edge_potential(strip, b["onsite"], b["hopping"], b["depth"])


def _boundary_label(b: dict) -> str:
    if b["kind"] == "dirichlet":
        return "dirichlet"
    return f"edge-potential(onsite={b['onsite']:g},hopping={b['hopping']:g},depth={b['depth']})"


def _clean_oracle(model: ModelSpec, cfg) -> Optional[int]:
    """Clean-limit oracle value, or None when the clean model is gapless."""
    try:
        if model.time_reversal_invariant:
            return z2_pfaffian_trim(model)
        return chern_berry(model)
    except FredholmLabError:
        return None


def _bulk_index(cfg, H: LatticeOperator, model: ModelSpec) -> dict:
    """Bulk index routes at the Fermi level 0: flux, corner and Kubo (Z) or the ℤ₂ flux count."""
    eig = eig_hermitian(H)
    gap = spectral_gap(eig.eigenvalues)
    out = {"gap": gap}
    if gap.contains_zero:
        raise GapViolationError("Fermi level 0 lies in the spectrum")
    P = fermi_projection(H, 0.0, eig)
    if model.time_reversal_invariant:
        out["z2"] = z2_localized_count(bulk_flux_operator(P), FLUX_CENTER, _radius(cfg))
    else:
        out["flux"] = _fedosov(cfg, bulk_flux_operator(P))
        out["corner"] = _fedosov(cfg, bulk_corner_operator(P))
        out["kubo"] = chern_kubo(P, _region(cfg, H.geometry))
    return out


def _index_rows(seed: int, idx: dict, oracle, tol: float) -> list[dict]:
    gap = idx["gap"]
    base = {"seed": seed, "gap_lower": gap.gap_lower, "gap_upper": gap.gap_upper, "oracle": oracle}
    rows = []
    for route in ("flux", "corner", "z2"):
        if route in idx:
            r = idx[route]
            rows.append({**base, "route": route, "value": r.value, "raw": r.raw, "status": r.status,
                         "n_used": r.n_used, "fredholm_gap": r.diagnostics.get("fredholm_gap")})
    if "kubo" in idx:
        k = idx["kubo"]
        rows.append({**base, "route": "kubo", "value": int(round(k)), "raw": k,
                     "status": "converged" if abs(k - round(k)) <= tol else "not-converged"})
    return rows


def _warn_unconverged(sample: _Sample, label: str, r: IndexResult):
    if not r.converged:
        sample.warnings.append(f"seed {sample.seed}: {label} index not converged (raw {r.raw:.4f})")


# --------------------------------------------------------------------------- experiments

_INDEX_COLUMNS = [
    ("seed", "", "disorder seed"),
    ("route", "", "flux, corner, kubo or z2"),
    ("value", "", "integer (Z) or parity (Z2) index"),
    ("raw", "", "unrounded estimator (Fedosov trace, Kubo trace or localized kernel mass)"),
    ("status", "", "converged or not-converged"),
    ("n_used", "", "Fedosov power at which the estimate was taken"),
    ("fredholm_gap", "", "smallest singular value above the near-kernel cluster"),
    ("gap_lower", "energy", "largest eigenvalue below the Fermi level"),
    ("gap_upper", "energy", "smallest eigenvalue above the Fermi level"),
    ("oracle", "", "clean-limit k-space oracle value"),
]


def _exp_bulk_index(cfg, seed: int, sample: _Sample):
    model = _model(cfg)
    geom = _bulk_geometry(cfg, model.n_internal)
    H = build_bulk(model, _disorder(cfg, model, seed), geom)
    idx = _bulk_index(cfg, H, model)
    oracle = _clean_oracle(model, cfg)
    sample.rows = _index_rows(seed, idx, oracle, cfg["index"]["fedosov_tol"])
    for route in ("flux", "corner", "z2"):
        if route in idx:
            _warn_unconverged(sample, route, idx[route])
    if "kubo" in idx and abs(idx["kubo"] - round(idx["kubo"])) > cfg["index"]["fedosov_tol"]:
        sample.warnings.append(f"seed {seed}: Kubo trace {idx['kubo']:.4f} not within tolerance of an integer")
    sample.record = {"seed": seed, "geometry": geom.to_dict(), "oracle": oracle,
                     **idx}


_EDGE_COLUMNS = [
    ("seed", "", "disorder seed"),
    ("boundary", "", "boundary condition"),
    ("route", "", "edge-chern or edge-z2"),
    ("value", "", "edge index"),
    ("raw", "", "unrounded estimator"),
    ("status", "", "converged or not-converged"),
    ("fredholm_gap", "", "smallest singular value above the near-kernel cluster"),
    ("bulk_gap_lower", "energy", "bulk spectral gap lower edge"),
    ("bulk_gap_upper", "energy", "bulk spectral gap upper edge"),
    ("oracle", "", "clean-limit oracle (spectral flow or Berry Chern number)"),
]


def _edge_indices(cfg, model: ModelSpec, seed: int, gap: GapReport) -> list[tuple[dict, IndexResult]]:
    strip = _strip_geometry(cfg, model.n_internal)
    dis = _disorder(cfg, model, seed)
    g = default_switch(gap, cfg["switch"]["fraction"])
    out = []
    for b in cfg["boundaries"]:
        Hhat = build_edge(model, dis, strip, _boundary(b, strip))
        F = edge_operator(Hhat, g, gap)
        if model.time_reversal_invariant:
            r = edge_z2(F, radius=_radius(cfg))
        else:
            ix = cfg["index"]
            r = edge_chern(F, n_start=ix["n_start"], n_max=ix["n_max"], tol=ix["fedosov_tol"],
                           step_tol=ix["step_tol"])
        out.append((b, r))
    return out


def _edge_oracle(model: ModelSpec, cfg) -> Optional[int]:
    try:
        if model.time_reversal_invariant:
            return edge_spectral_flow(model, cfg["geometry"]["strip_width"])
        return chern_berry(model)
    except FredholmLabError:
        return None


def _exp_edge_index(cfg, seed: int, sample: _Sample):
    model = _model(cfg)
    H = build_bulk(model, _disorder(cfg, model, seed), _bulk_geometry(cfg, model.n_internal))
    gap = spectral_gap(H)
    oracle = _edge_oracle(model, cfg)
    route = "edge-z2" if model.time_reversal_invariant else "edge-chern"
    recs = []
    for b, r in _edge_indices(cfg, model, seed, gap):
        sample.rows.append({"seed": seed, "boundary": _boundary_label(b), "route": route, "value": r.value,
                            "raw": r.raw, "status": r.status, "fredholm_gap": r.diagnostics.get("fredholm_gap"),
                            "bulk_gap_lower": gap.gap_lower, "bulk_gap_upper": gap.gap_upper, "oracle": oracle})
        _warn_unconverged(sample, f"{route} ({_boundary_label(b)})", r)
        recs.append({"boundary": b, "index": r})
    sample.record = {"seed": seed, "bulk_gap": gap, "oracle": oracle, "edges": recs}


def _bec_columns(model: ModelSpec) -> list:
    k = "z2" if model.time_reversal_invariant else "chern"
    return [
        ("seed", "", "disorder seed"),
        ("boundary", "", "boundary condition"),
        (f"bulk_{k}", "", "bulk index (direct estimator)"),
        (f"edge_{k}", "", "edge index"),
        ("agree", "", "bulk and edge indices coincide"),
        ("bulk_raw", "", "unrounded bulk estimator"),
        ("edge_raw", "", "unrounded edge estimator"),
        (f"bulk_{k}_transported", "", "clean bulk index carried along a gapped clean-to-disordered path"),
        ("transport_verdict", "", "index-constant, withheld or not-run"),
        ("transport_min_gap", "energy", "smallest spectral gap width along the transport path"),
        ("oracle", "", "clean-limit bulk oracle"),
    ]


def _transport(cfg, model: ModelSpec, seed: int, clean_value: Optional[int], H1: LatticeOperator):
    """Carry the clean bulk index to ``H1`` along the straight path of Hamiltonians."""
    H0 = build_bulk(model, None, H1.geometry)
    n = cfg["transport"]["samples"]
    thr = MonitorThresholds(spectral_gap=cfg["monitor"]["spectral_gap"], refinements=cfg["monitor"]["refinements"])
    rep = monitor(path_physical(H0, H1, samples=tuple(np.linspace(0.0, 1.0, n))), thresholds=thr)
    value = clean_value if rep.verdict == "index-constant" else None
    return rep, value


def _exp_bec_check(cfg, seed: int, sample: _Sample):
    model = _model(cfg)
    k = "z2" if model.time_reversal_invariant else "chern"
    geom = _bulk_geometry(cfg, model.n_internal)
    dis = _disorder(cfg, model, seed)
    H = build_bulk(model, dis, geom)
    idx = _bulk_index(cfg, H, model)
    bulk = idx["z2"] if model.time_reversal_invariant else idx["flux"]
    _warn_unconverged(sample, "bulk", bulk)
    transported, verdict, tgap, rep = None, "not-run", None, None
    if cfg["transport"]["enabled"] and dis is not None:
        clean = _bulk_index(cfg, build_bulk(model, None, geom), model)
        clean_r = clean["z2"] if model.time_reversal_invariant else clean["flux"]
        rep, transported = _transport(cfg, model, seed, clean_r.value if clean_r.converged else None, H)
        verdict, tgap = rep.verdict, rep.min_spectral_gap
        if transported is None:
            sample.warnings.append(f"seed {seed}: transport path verdict {rep.verdict}")
        elif transported != bulk.value:
            sample.warnings.append(f"seed {seed}: transported bulk index {transported} != direct {bulk.value}")
    oracle = _clean_oracle(model, cfg)
    edges = []
    for b, r in _edge_indices(cfg, model, seed, idx["gap"]):
        _warn_unconverged(sample, f"edge ({_boundary_label(b)})", r)
        agree = r.value == bulk.value
        if not agree:
            sample.warnings.append(f"seed {seed}: bulk {bulk.value} != edge {r.value} ({_boundary_label(b)})")
        sample.rows.append({"seed": seed, "boundary": _boundary_label(b), f"bulk_{k}": bulk.value,
                            f"edge_{k}": r.value, "agree": agree, "bulk_raw": bulk.raw, "edge_raw": r.raw,
                            f"bulk_{k}_transported": transported, "transport_verdict": verdict,
                            "transport_min_gap": tgap, "oracle": oracle})
        edges.append({"boundary": b, "index": r})
    sample.record = {"seed": seed, "bulk": bulk, "bulk_gap": idx["gap"], "edges": edges, "oracle": oracle,
                     "transport": rep}


_PHASE_COLUMNS = [
    ("seed", "", "disorder seed"),
    ("mass", "hopping units", "model mass u"),
    ("route", "", "flux (Z) or z2"),
    ("value", "", "bulk index; empty when the gap is closed"),
    ("raw", "", "unrounded estimator"),
    ("status", "", "converged, not-converged or gapless"),
    ("gap_lower", "energy", "largest eigenvalue below 0"),
    ("gap_upper", "energy", "smallest eigenvalue above 0"),
    ("gap_width", "energy", "spectral gap width around 0"),
    ("oracle", "", "clean-limit oracle; empty where the clean model is gapless"),
]


def _exp_phase_scan(cfg, seed: int, sample: _Sample):
    base = _model(cfg)
    recs = []
    for u in cfg["scan"]["masses"]:
        model = ModelSpec(base.family, float(u), base.inter_block, base.spinful)
        route = "z2" if model.time_reversal_invariant else "flux"
        H = build_bulk(model, _disorder(cfg, model, seed), _bulk_geometry(cfg, model.n_internal))
        gap = spectral_gap(H)
        oracle = _clean_oracle(model, cfg)
        row = {"seed": seed, "mass": float(u), "route": route, "gap_lower": gap.gap_lower,
               "gap_upper": gap.gap_upper, "gap_width": gap.width, "oracle": oracle}
        if gap.contains_zero or gap.width < cfg["monitor"]["spectral_gap"]:
            row["status"] = "gapless"
            sample.warnings.append(f"seed {seed}: mass {u:g} is gapless at this size; index not computed")
            recs.append({"mass": float(u), "gap": gap, "index": None})
        else:
            try:
                r = _bulk_index(cfg, H, model)[route]
                row.update(value=r.value, raw=r.raw, status=r.status)
                _warn_unconverged(sample, f"mass {u:g}", r)
            except FredholmLabError as exc:
                r = None
                row["status"] = "not-converged"
                sample.warnings.append(f"seed {seed}: mass {u:g}: {type(exc).__name__}: {exc}")
            recs.append({"mass": float(u), "gap": gap, "index": r})
        sample.rows.append(row)
    sample.record = {"seed": seed, "scan": recs}


_MU_COLUMNS = [
    ("seed", "", "disorder seed"),
    ("mu", "energy", "Fermi level"),
    ("in_gap", "", "mu is not an eigenvalue"),
    ("gap_lower", "energy", "largest eigenvalue below mu"),
    ("gap_upper", "energy", "smallest eigenvalue above mu"),
    ("sigma_min", "", "smallest singular value of the flux operator"),
    ("fredholm_gap", "", "smallest singular value above the near-kernel cluster"),
    ("value", "", "flux-route Fedosov index"),
    ("raw", "", "unrounded Fedosov trace"),
    ("status", "", "converged or not-converged"),
]


def _exp_mu_scan(cfg, seed: int, sample: _Sample):
    model = _model(cfg)
    H = build_bulk(model, _disorder(cfg, model, seed), _bulk_geometry(cfg, model.n_internal))
    sc = cfg["scan"]
    grid = np.linspace(sc["mu_start"], sc["mu_stop"], sc["mu_num"])
    recs = fermi_scan(H, grid, _region(cfg, H.geometry))
    for r in recs:
        idx = r["index"]
        sample.rows.append({"seed": seed, "mu": r["mu"], "in_gap": r["in_gap"], "gap_lower": r["gap"].gap_lower,
                            "gap_upper": r["gap"].gap_upper, "sigma_min": r["sigma_min"],
                            "fredholm_gap": r["fredholm_gap"], "value": None if idx is None else idx.value,
                            "raw": None if idx is None else idx.raw, "status": None if idx is None else idx.status})
    sample.record = {"seed": seed, "scan": recs}


_HOMOTOPY_COLUMNS = [
    ("seed", "", "disorder seed"),
    ("path", "", "homotopy path label"),
    ("verdict", "", "index-constant, withheld or violation (per path)"),
    ("t", "", "path parameter"),
    ("fredholm_gap", "", "smallest singular value above the near-kernel cluster"),
    ("gap_width", "energy", "spectral gap width (Hamiltonian paths)"),
    ("loc2_status", "", "LOC2 fit status of A(t)^2 - A(t)"),
    ("loc2_rate", "1/sites", "fitted LOC2 decay rate"),
    ("loc2_residual", "", "worst log-residual of the LOC2 fit"),
    ("value", "", "index at this sample"),
    ("raw", "", "unrounded index estimator"),
    ("n_flags", "", "number of monitor flags"),
]


def _homotopy_paths(cfg, model: ModelSpec, seed: int):
    geom = _bulk_geometry(cfg, model.n_internal)
    dis = _disorder(cfg, model, seed)
    H = build_bulk(model, dis, geom)
    gap = spectral_gap(H)
    g = default_switch(gap, cfg["switch"]["fraction"])
    samples = tuple(np.linspace(0.0, 1.0, cfg["monitor"]["samples"]))
    for name in cfg["monitor"]["paths"]:
        if name == "corner-flatten":
            yield path_corner_flatten(H, g, samples)
        elif name == "truncate-flatten":
            yield path_truncate_flatten(H, g, samples)
        elif name == "boundary-conditions":
            strip = _strip_geometry(cfg, model.n_internal)
            Hb = build_bulk(model, dis, strip.covering_bulk())
            pert = next((b for b in cfg["boundaries"] if b["kind"] != "dirichlet"), cfg["boundaries"][0])
            Hhat = build_edge(model, dis, strip, _boundary(pert, strip))
            yield path_boundary_conditions(Hb, Hhat, g, pert["depth"], samples)
        elif name == "physical":
            yield path_physical(build_bulk(model, None, geom), H, samples=samples)
        elif name == "adversarial":
            u0, u1 = float(model.mass), float(cfg["monitor"]["adversarial_target"])

            def family(t, u0=u0, u1=u1):
                m = ModelSpec(model.family, (1 - t) * u0 + t * u1, model.inter_block, model.spinful)
                return build_bulk(m, dis, geom)
            yield path_projection_family(family, g, "adversarial", samples)


def _exp_homotopy_check(cfg, seed: int, sample: _Sample):
    model = _model(cfg)
    method = "z2" if model.time_reversal_invariant else "fedosov"
    mon = cfg["monitor"]
    thr = MonitorThresholds(mon["fredholm_gap"], mon["spectral_gap"], mon["refinements"])
    reports = []
    for path in _homotopy_paths(cfg, model, seed):
        theta = standard_tr(path(0.0).geometry) if model.time_reversal_invariant else None
        rep = monitor(path, method, thr, radius=_radius(cfg), theta=theta)
        reports.append(rep)
        if path.label == "adversarial":
            # the gapless path must be caught, either as a violation or by flagged samples
            if rep.verdict == "index-constant":
                sample.warnings.append(f"seed {seed}: adversarial path passed unflagged")
        elif rep.verdict != "index-constant":
            sample.warnings.append(f"seed {seed}: path {path.label} verdict {rep.verdict}")
        for r in rep.records:
            fit = r.get("loc2_fit")
            idx = r.get("index")
            sample.rows.append({"seed": seed, "path": path.label, "verdict": rep.verdict, "t": r["t"],
                                "fredholm_gap": r.get("fredholm_gap"), "gap_width": r.get("gap_width"),
                                "loc2_status": None if fit is None else fit.status,
                                "loc2_rate": None if fit is None else fit.rate,
                                "loc2_residual": None if fit is None else fit.max_residual,
                                "value": None if idx is None else idx.value,
                                "raw": None if idx is None else idx.raw, "n_flags": len(r["flags"])})
    sample.record = {"seed": seed, "reports": reports}


_LOCALITY_COLUMNS = [
    ("seed", "", "disorder seed"),
    ("object", "", "fermi-projection, switch, resolvent or helffer-sjostrand"),
    ("parameter", "", "Im z for resolvents, quadrature size for Helffer-Sjostrand"),
    ("rate", "1/sites", "fitted exponential decay rate"),
    ("prefactor", "", "fitted prefactor"),
    ("residual", "", "worst log-residual of the fit"),
    ("status", "", "fit status"),
    ("error", "", "max-norm Helffer-Sjostrand minus eigendecomposition"),
]


def _exp_locality_check(cfg, seed: int, sample: _Sample):
    model = _model(cfg)
    dis = _disorder(cfg, model, seed)
    geom = _bulk_geometry(cfg, model.n_internal)
    H = build_bulk(model, dis, geom)
    gap = spectral_gap(H)
    P = fermi_projection(H)
    g = default_switch(gap, cfg["switch"]["fraction"])
    fits = [("fermi-projection", None, decay_fit(P)), ("switch", None, decay_fit(apply_function_eig(H, g)))]
    center = 0.5 * (gap.gap_lower + gap.gap_upper)
    for y, f in zip(cfg["locality"]["im_z"], combes_thomas_check(H, [center + 1j * y for y in cfg["locality"]["im_z"]])):
        fits.append(("resolvent", float(y), f))
    rates = [f.rate for o, _, f in fits if o == "resolvent"]
    prefs = [f.prefactor for o, _, f in fits if o == "resolvent"]
    if not (all(np.diff(rates) > 0) and all(np.diff(prefs) < 0)):
        sample.warnings.append(f"seed {seed}: resolvent fits not monotone in Im z")
    for obj, par, f in fits:
        if not f.ok:
            sample.warnings.append(f"seed {seed}: {obj} decay fit {f.status}")
        sample.rows.append({"seed": seed, "object": obj, "parameter": par, "rate": f.rate,
                            "prefactor": f.prefactor, "residual": f.max_residual, "status": f.status})
    side = cfg["locality"]["hs_side"]
    Hs = build_bulk(model, dis, _bulk_geometry(cfg, model.n_internal, side, side))
    gs = default_switch(spectral_gap(Hs), cfg["switch"]["fraction"])
    ref = apply_function_eig(Hs, gs).matrix
    errors = []
    for q in cfg["locality"]["hs_quadrature"]:
        err = float(np.max(np.abs(apply_function_hs(Hs, gs, quadrature=(q, q)).matrix - ref)))
        errors.append(err)
        sample.rows.append({"seed": seed, "object": "helffer-sjostrand", "parameter": q, "error": err,
                            "status": "ok"})
    if errors and errors[0] > 1e-6:
        sample.warnings.append(f"seed {seed}: Helffer-Sjostrand error {errors[0]:.2e} at the default quadrature")
    if any(b >= a for a, b in zip(errors, errors[1:])):
        sample.warnings.append(f"seed {seed}: Helffer-Sjostrand error not decreasing under refinement")
    sample.record = {"seed": seed, "gap": gap, "fits": [{"object": o, "parameter": p, "fit": f} for o, p, f in fits],
                     "hs_errors": errors}


_RUNNERS: dict[str, tuple[Callable, Callable[[ModelSpec], list]]] = {
    "bulk-index": (_exp_bulk_index, lambda m: _INDEX_COLUMNS),
    "edge-index": (_exp_edge_index, lambda m: _EDGE_COLUMNS),
    "bec-check": (_exp_bec_check, _bec_columns),
    "phase-scan": (_exp_phase_scan, lambda m: _PHASE_COLUMNS),
    "mu-scan": (_exp_mu_scan, lambda m: _MU_COLUMNS),
    "homotopy-check": (_exp_homotopy_check, lambda m: _HOMOTOPY_COLUMNS),
    "locality-check": (_exp_locality_check, lambda m: _LOCALITY_COLUMNS),
}


# --------------------------------------------------------------------------- driver

@dataclass
class RunResult:
    """Outcome of :func:`run`: serialized payloads, exit code and wall times."""

    payload: dict
    json_text: str
    csv_text: str
    exit_code: int
    wall_time: dict
    paths: dict = field(default_factory=dict)


def _run_sample(runner: Callable, cfg: dict, seed: int) -> tuple[_Sample, float]:
    sample = _Sample(seed)
    t0 = time.perf_counter()
    try:
        runner(cfg, seed, sample)
    except FredholmLabError as exc:
        sample.error = f"seed {seed}: {type(exc).__name__}: {exc}"
    return sample, time.perf_counter() - t0


def run(config: dict, workers: int = 1, write: bool = True) -> RunResult:
    """Execute the configured experiment.

    Samples (one per seed) run on ``workers`` threads and are merged in
    config order.  Python warnings raised during the run are recorded.
    """
    cfg = load_config(config)
    exp = cfg["experiment"]
    if exp == "selfcheck":
        raise ConfigurationError("use selfcheck() for the selfcheck experiment")
    runner, columns = _RUNNERS[exp]
    model = _model(cfg)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                done = list(pool.map(lambda s: _run_sample(runner, cfg, s), cfg["seeds"]))
        else:
            done = [_run_sample(runner, cfg, s) for s in cfg["seeds"]]
    total = time.perf_counter() - t0
    samples = [s for s, _ in done]
    py_warnings = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    sample_warnings = [w for s in samples for w in s.warnings]
    errors = [s.error for s in samples if s.error]
    status = "error" if errors else ("warnings" if sample_warnings or py_warnings else "ok")
    payload = {
        "experiment": exp,
        "version": __version__,
        "config": {k: v for k, v in cfg.items() if k != "output"},
        "config_hash": config_hash(cfg),
        "disorder_algorithm": DISORDER_ALGORITHM,
        "status": status,
        "errors": errors,
        "warnings": sample_warnings,
        "integrity_warnings": py_warnings,
        "samples": [s.record if not s.error else {"seed": s.seed, "error": s.error} for s in samples],
    }
    json_text = json.dumps(_plain(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    rows = [r for s in samples for r in s.rows]
    csv_text = render_csv(columns(model), rows)
    wall = {"total_seconds": total, "per_seed_seconds": {str(s.seed): dt for s, dt in done}}
    code = {"ok": 0, "warnings": 2, "error": 1}[status]
    result = RunResult(payload, json_text, csv_text, code, wall)
    if write:
        result.paths = _write(cfg, json_text, csv_text, wall)
    return result


def _write(cfg: dict, json_text: str, csv_text: str, wall: dict) -> dict:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    stem = cfg["output"]["stem"] or cfg["experiment"]
    paths = {"json": out / f"{stem}.json", "csv": out / f"{stem}.csv", "timing": out / f"{stem}.timing.json"}
    paths["json"].write_text(json_text)
    paths["csv"].write_text(csv_text)
    paths["timing"].write_text(json.dumps(wall, indent=2, sort_keys=True) + "\n")
    return {k: str(v) for k, v in paths.items()}


# --------------------------------------------------------------------------- selfcheck

@dataclass(frozen=True)
class CheckOutcome:
    module: str
    invariant: str
    seed: int
    passed: bool
    detail: str

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} [{self.module}] {self.invariant} (seed {self.seed}): {self.detail}"


def _check_derivative_identities(seed: int) -> CheckOutcome:
    from .lattice import nc_derivative, site_index
    rng = np.random.default_rng(seed)
    g = LatticeGeometry.square(6, 2)
    worst = 0.0
    x = (g.site_x1, g.site_x2)
    for axis in (1, 2):
        # shift by one site along the axis; only the bond (-1 -> 0) crosses the cut
        S = np.zeros((g.dim, g.dim), dtype=complex)
        expect = np.zeros_like(S)
        for i in range(g.n_sites):
            y = [x[0][i], x[1][i]]
            y[axis - 1] += 1
            if not g.contains(*y):
                continue
            for s in range(g.n_internal):
                a, b = site_index(g, *y, s), site_index(g, x[0][i], x[1][i], s)
                S[a, b] = 1.0
                if x[axis - 1][i] == -1:
                    expect[a, b] = -1j
        worst = max(worst, float(np.max(np.abs(nc_derivative(axis, LatticeOperator(g, S)).matrix - expect))))
        A = LatticeOperator(g, rng.normal(size=(g.dim, g.dim)) + 1j * rng.normal(size=(g.dim, g.dim)))
        B = LatticeOperator(g, rng.normal(size=(g.dim, g.dim)) + 1j * rng.normal(size=(g.dim, g.dim)))
        lhs = nc_derivative(axis, A @ B).matrix
        rhs = (nc_derivative(axis, A) @ B + A @ nc_derivative(axis, B)).matrix
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    ok = worst < 1e-10
    return CheckOutcome("lattice", "derivative identities (shift across the cut, Leibniz rule)", seed, ok,
                        f"max deviation {worst:.2e}")


def _check_route_concordance(seed: int) -> list[CheckOutcome]:
    # the corner route needs side 16 to reach tolerance 0.05 and is left to the acceptance suite
    out = []
    g = LatticeGeometry.square(12, 2, periodic=True)
    for u in (-1.0, 3.0):
        model = ModelSpec("qwz", u)
        H = build_bulk(model, None, g)
        P = fermi_projection(H)
        flux = fredholm_index_fedosov(bulk_flux_operator(P))
        kubo = chern_kubo(P)
        berry = chern_berry(model)
        ok = flux.converged and abs(kubo - round(kubo)) <= 0.05 and flux.value == round(kubo) == berry
        out.append(CheckOutcome("indices", "Fedosov/Kubo concordance (flux Fedosov = Kubo = Berry)", seed, ok,
                                f"u={u:g}: Fedosov {flux.raw:.4f} ({flux.status}), Kubo {kubo:.4f}, Berry {berry}"))
    return out


def _check_z2_triangle(seed: int) -> list[CheckOutcome]:
    out = []
    g = LatticeGeometry.square(12, 4, periodic=True)
    strip = LatticeGeometry.strip(12, 16, 4)
    for u in (-1.0, 3.0):
        model = ModelSpec("bhz", u)
        H = build_bulk(model, None, g)
        gap = spectral_gap(H)
        try:
            bulk = z2_localized_count(bulk_flux_operator(fermi_projection(H))).value
            edge = edge_z2(edge_operator(build_edge(model, None, strip), default_switch(gap), gap)).value
        except FredholmLabError as exc:
            out.append(CheckOutcome("indices", "Z2 triangle (bulk = edge = Pfaffian = spectral flow)", seed, False,
                                    f"u={u:g}: {type(exc).__name__}: {exc}"))
            continue
        pf = z2_pfaffian_trim(model)
        sf = edge_spectral_flow(model, 16)
        ok = bulk == edge == pf == sf
        out.append(CheckOutcome("indices", "Z2 triangle (bulk = edge = Pfaffian = spectral flow)", seed, ok,
                                f"u={u:g}: bulk {bulk}, edge {edge}, Pfaffian {pf}, spectral flow {sf}"))
    return out


def _check_doubling(seed: int) -> CheckOutcome:
    from .models import doubled_model
    g = LatticeGeometry.square(12, 2, periodic=True)
    H = build_bulk(ModelSpec("qwz", -1.0), None, g)
    Ht, _ = doubled_model(H, standard_tr(g))
    z = z2_localized_count(bulk_flux_operator(fermi_projection(Ht))).value
    c = chern_berry(ModelSpec("qwz", -1.0))
    return CheckOutcome("indices", "doubling (Z2 of doubled model = Chern mod 2)", seed, z == c % 2,
                        f"z2 {z}, Chern {c}")


def _check_functional_calculus(seed: int) -> CheckOutcome:
    g = LatticeGeometry.square(6, 2, periodic=True)
    H = build_bulk(ModelSpec("qwz", 3.0), None, g)
    sw = default_switch(spectral_gap(H))
    ref = apply_function_eig(H, sw).matrix
    errs = [float(np.max(np.abs(apply_function_hs(H, sw, quadrature=(q, q)).matrix - ref))) for q in (64, 96)]
    ok = errs[0] <= 1e-6 and errs[1] < errs[0]
    return CheckOutcome("spectral", "Helffer-Sjostrand = eigendecomposition", seed, ok,
                        "errors " + ", ".join(f"{e:.2e}" for e in errs))


def _check_trace_limit(seed: int) -> CheckOutcome:
    from .indices import kernel_dim_trace_limit
    from .oracles import brute_force_kernel
    rng = np.random.default_rng(seed)
    bad = []
    for i in range(5):
        n, k = 24, int(rng.integers(0, 6))
        U = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))[0]
        V = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))[0]
        s = np.concatenate([np.zeros(k), rng.uniform(0.1, 1.0, n - k)])
        A = U @ np.diag(s) @ V.conj().T
        r = kernel_dim_trace_limit(A)
        if r.value != brute_force_kernel(A) or r.value != k:
            bad.append(i)
    return CheckOutcome("indices", "trace limit = kernel dimension", seed, not bad, f"failures {bad}")


def _check_theta_odd(seed: int) -> CheckOutcome:
    from .symmetry import random_theta_odd
    odd = []
    for i in range(20):
        m = random_theta_odd(16, seed * 100 + i, rank_deficiency=i % 5)
        rank = int(np.sum(np.linalg.svd(m, compute_uv=False) > 1e-8))
        if rank % 2:
            odd.append(i)
    return CheckOutcome("symmetry", "Theta-odd matrices have even rank", seed, not odd, f"odd ranks at {odd}")


def _check_homotopy(seed: int) -> CheckOutcome:
    model = ModelSpec("qwz", -1.0)
    H = build_bulk(model, None, LatticeGeometry.square(12, 2, periodic=True))
    strip = LatticeGeometry.strip(12, 12, 2)
    Hb = build_bulk(model, None, strip.covering_bulk())
    Hhat = build_edge(model, None, strip, edge_potential(strip, 0.5, 0.3))
    path = path_boundary_conditions(Hb, Hhat, default_switch(spectral_gap(H)), samples=np.linspace(0, 1, 6))
    rep = monitor(path)
    return CheckOutcome("homotopy", "boundary-condition path keeps the edge index", seed,
                        rep.verdict == "index-constant",
                        f"verdict {rep.verdict}, min Fredholm gap {rep.min_fredholm_gap:.3f}")


def _check_determinism(seed: int) -> CheckOutcome:
    cfg = {"experiment": "bulk-index", "model": {"family": "qwz", "mass": -1.0},
           "disorder": {"amplitude": 0.5}, "geometry": {"n1": 8}, "seeds": [seed, seed + 1]}
    a = run(cfg, write=False)
    b = run(cfg, workers=2, write=False)
    ok = a.json_text == b.json_text and a.csv_text == b.csv_text
    return CheckOutcome("cli", "identical config gives byte-identical output", seed, ok,
                        "identical" if ok else "outputs differ")


SELFCHECKS: dict[str, Callable[[int], CheckOutcome | list[CheckOutcome]]] = {
    "derivative-identities": _check_derivative_identities,
    "route-concordance": _check_route_concordance,
    "z2-triangle": _check_z2_triangle,
    "doubling": _check_doubling,
    "functional-calculus": _check_functional_calculus,
    "trace-limit": _check_trace_limit,
    "theta-odd": _check_theta_odd,
    "homotopy": _check_homotopy,
    "determinism": _check_determinism,
}


def selfcheck(only: Optional[Sequence[str]] = None, seed: int = 0) -> list[CheckOutcome]:
    """Run the small-size invariant suite (lattices of side at most 12).

    Returns one :class:`CheckOutcome` per invariant instance; a failing
    outcome names its module, invariant and seed.  An exception inside a
    check counts as a failure of that check.
    """
    names = list(SELFCHECKS) if only is None else list(only)
    out = []
    for name in names:
        fn = SELFCHECKS[name]
        try:
            res = fn(seed)
        except Exception as exc:  # a crash is a failed invariant, reported with provenance
            res = CheckOutcome(name, name, seed, False, f"{type(exc).__name__}: {exc}")
        out.extend(res if isinstance(res, list) else [res])
    return out


# --------------------------------------------------------------------------- entry point

def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fredholm-lab", description="Fredholm-index experiments on finite lattices.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON run config (required except for selfcheck)")
    p.add_argument("--seeds", type=_parse_seeds, help="comma-separated seed list overriding the config")
    p.add_argument("--workers", type=int, default=1, help="sample-level worker threads")
    p.add_argument("--out", help="output directory overriding the config")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_defaults:
        print(json.dumps(DEFAULT_CONFIG, indent=2, sort_keys=True))
        return 0
    if args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return 1
    if args.experiment == "selfcheck":
        t0 = time.perf_counter()
        outcomes = selfcheck()
        for o in outcomes:
            print(o.line())
        print(f"selfcheck wall time {time.perf_counter() - t0:.1f} s", file=sys.stderr)
        return 0 if all(o.passed for o in outcomes) else 1
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config, args.experiment, args.seeds, args.out)
        result = run(cfg, args.workers)
    except (FredholmLabError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for e in result.payload["errors"]:
        print(f"error: {e}", file=sys.stderr)
    for w in result.payload["warnings"] + result.payload["integrity_warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {result.paths['json']} and {result.paths['csv']} "
          f"(wall time {result.wall_time['total_seconds']:.1f} s)", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())

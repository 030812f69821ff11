"""Acceptance suite: one test per criterion, each recorded for the terminal summary.

Every test records its outcome with ``record_criterion`` before asserting, so
the "acceptance criteria" section printed at the end of the pytest run holds
one PASS/FAIL line per criterion.
"""
import csv

import numpy as np
import pytest
from scipy.stats import unitary_group

from conftest import record_criterion
from fredholm_lab import cli
from fredholm_lab.errors import AmbiguityError
from fredholm_lab.homotopy import (monitor, path_boundary_conditions, path_corner_flatten, path_projection_family,
                                   path_truncate_flatten)
from fredholm_lab.indices import (bulk_corner_operator, bulk_flux_operator, chern_kubo, edge_operator, edge_z2,
                                  fermi_scan, fredholm_index_fedosov, kernel_dim_trace_limit, near_kernel_modes,
                                  z2_localized_count)
from fredholm_lab.lattice import LatticeGeometry, LatticeOperator
from fredholm_lab.models import ModelSpec, build_bulk, build_edge, doubled_model, edge_potential
from fredholm_lab.oracles import brute_force_kernel, chern_berry, edge_spectral_flow, z2_pfaffian_trim
from fredholm_lab.spectral import (apply_function_eig, apply_function_hs, combes_thomas_check, default_switch,
                                   fermi_projection, spectral_gap)
from fredholm_lab.symmetry import random_theta_odd, random_theta_odd_like, standard_tr

pytestmark = pytest.mark.acceptance

QWZ_MASSES = (-3.0, -1.0, 1.0, 3.0)
SAMPLES = tuple(np.linspace(0.0, 1.0, 21))


def _torus(n1, N, n2=None):
    n2 = n2 or n1
    return LatticeGeometry("bulk", (-(n1 // 2), n1 // 2 - 1), (-(n2 // 2), n2 // 2 - 1), N, periodic=(True, True))


def _planted(rng, n, k):
    U = unitary_group.rvs(n, random_state=rng)
    V = unitary_group.rvs(n, random_state=rng)
    s = np.concatenate([np.zeros(k), rng.uniform(0.1, 1.0, n - k)])
    return U @ np.diag(s) @ V.conj().T


def test_criterion_01_index_route_concordance():
    rows, ok = [], True
    for u in QWZ_MASSES:
        model = ModelSpec("qwz", u)
        P = fermi_projection(build_bulk(model, None, _torus(16, 2)))
        flux = fredholm_index_fedosov(bulk_flux_operator(P))
        corner = fredholm_index_fedosov(bulk_corner_operator(P))
        kubo = chern_kubo(P)
        berry = chern_berry(model)
        good = (flux.converged and corner.converged and flux.value == corner.value == round(kubo) == berry
                and abs(flux.raw - flux.value) <= 0.05 and abs(corner.raw - corner.value) <= 0.05
                and abs(kubo - round(kubo)) <= 0.05)
        ok &= good
        rows.append(f"u={u:g}: flux {flux.raw:.3f} corner {corner.raw:.3f} kubo {kubo:.3f} berry {berry}")
    record_criterion(1, ok, "; ".join(rows))
    assert ok, rows


def test_criterion_02_z2_doubling():
    agree, rows = 0, []
    for u in QWZ_MASSES:
        model = ModelSpec("qwz", u)
        g = _torus(16, 2)
        H = build_bulk(model, None, g)
        Ht, _ = doubled_model(H, standard_tr(g))
        c = chern_berry(model)
        # block route: the first diagonal block of the doubled operator is H itself
        n = g.n_sites
        block = Ht.matrix.reshape(n, 2, 2, n, 2, 2)[:, 0, :, :, 0, :].reshape(g.dim, g.dim)
        via_block = fredholm_index_fedosov(bulk_flux_operator(fermi_projection(LatticeOperator(g, block))))
        via_count = z2_localized_count(bulk_flux_operator(fermi_projection(Ht)))
        agree += (via_block.converged and via_block.value % 2 == c % 2) + (via_count.value == c % 2)
        rows.append(f"u={u:g}: block {via_block.value % 2}, count {via_count.value}, chern mod 2 {c % 2}")
    ok = agree == 8
    record_criterion(2, ok, f"{agree}/8 agreements; " + "; ".join(rows))
    assert ok, rows


def test_criterion_03_clean_z2_triangle():
    masses = (-3.0, -1.5, -1.0, 1.0, 1.5, 3.0)
    agree, ambiguous, rows = 0, 0, []
    for u in masses:
        model = ModelSpec("bhz", u)
        try:
            bulk = z2_localized_count(bulk_flux_operator(fermi_projection(build_bulk(model, None, _torus(16, 4)))))
            b = bulk.value
        except AmbiguityError:
            ambiguous += 1
            b = None
        pf = z2_pfaffian_trim(model)
        sf = edge_spectral_flow(model, 24)
        agree += b == pf == sf
        rows.append(f"u={u:g}: bulk {b} pfaffian {pf} flow {sf}")
    phases = {r.split("pfaffian ")[1][0] for r in rows}
    ok = agree == len(masses) and ambiguous == 0 and phases == {"0", "1"}
    record_criterion(3, ok, f"{agree}/{len(masses)} agree, {ambiguous} ambiguous; " + "; ".join(rows))
    assert ok, rows


def _bec_config():
    return {"experiment": "bec-check", "model": {"family": "bhz", "mass": -1.0},
            "disorder": {"amplitude": 0.3, "unit": "clean-gap"},
            "geometry": {"n1": 16, "strip_width": 24},
            "boundaries": [{"kind": "dirichlet"},
                           {"kind": "edge-potential", "onsite": 0.5, "hopping": 0.3, "depth": 1}],
            "transport": {"enabled": True}, "seeds": list(range(10))}


@pytest.fixture(scope="module")
def bec_run():
    return cli.run(cli.load_config(_bec_config()), write=False)


def test_criterion_04_bulk_edge_correspondence(bec_run):
    lines = bec_run.csv_text.splitlines()
    rows = list(csv.DictReader(lines[1:]))  # the first line is the schema row
    good = [r for r in rows
            if r["bulk_z2_transported"] == r["bulk_z2"] == r["edge_z2"] and r["transport_verdict"] == "index-constant"]
    ok = len(rows) == 20 and len(good) == 20 and not bec_run.payload["errors"]
    bad = [(r["seed"], r["boundary"], r["bulk_z2"], r["bulk_z2_transported"], r["edge_z2"])
           for r in rows if r not in good]
    record_criterion(4, ok, f"{len(good)}/{len(rows)} runs agree (bulk direct = transported = edge); failures {bad}")
    assert ok, bad


def test_criterion_05_trace_limit():
    rng = np.random.default_rng(2024)
    matches, monotone = 0, 0
    for _ in range(100):
        n = int(rng.integers(8, 41))
        k = int(rng.integers(0, n // 2 + 1))
        A = _planted(rng, n, k)
        r = kernel_dim_trace_limit(A)
        matches += r.value == brute_force_kernel(A) == k
        raws = [v for _, v in r.history]
        monotone += all(b <= a + 1e-12 for a, b in zip(raws, raws[1:]))
    ok = matches == 100 and monotone == 100
    record_criterion(5, ok, f"{matches}/100 exact, {monotone}/100 non-increasing")
    assert ok


def test_criterion_06_fedosov_unitaries():
    rng = np.random.default_rng(7)
    g = LatticeGeometry.square(6, 2)
    worst, zeros = 0.0, 0
    for _ in range(50):
        U = unitary_group.rvs(g.dim, random_state=rng)
        r = fredholm_index_fedosov(LatticeOperator(g, U), n_start=1, n_max=1)
        worst = max(worst, abs(r.raw))
        zeros += r.value == 0
    ok = zeros == 50 and worst < 1e-10
    record_criterion(6, ok, f"{zeros}/50 index 0, worst |raw| {worst:.1e}")
    assert ok


@pytest.fixture(scope="module")
def bhz_edge():
    model = ModelSpec("bhz", -1.0)
    gap = spectral_gap(build_bulk(model, None, _torus(16, 4)))
    strip = LatticeGeometry.strip(16, 24, 4)
    F = edge_operator(build_edge(model, None, strip), default_switch(gap), gap)
    return strip, F


def test_criterion_07_theta_odd(bhz_edge):
    odd = 0
    rng = np.random.default_rng(11)
    for i in range(1000):
        d = 2 * int(rng.integers(1, 21))
        m = random_theta_odd(d, i, rank_deficiency=int(rng.integers(0, d // 2 + 1)))
        odd += int(np.sum(np.linalg.svd(m, compute_uv=False) > 1e-8)) % 2
    strip, F = bhz_edge
    theta = standard_tr(strip)
    base = edge_z2(F)
    fgap = near_kernel_modes(F).fredholm_gap
    small = []
    for _ in range(20):
        E = random_theta_odd_like(theta, rng)
        E *= 0.1 * fgap / np.linalg.norm(E, 2)
        small.append(edge_z2(LatticeOperator(strip, F.matrix + E)).value)
    corner = np.nonzero((strip.coordinate(2) <= 2) & (np.abs(strip.coordinate(1)) <= 2))[0]
    compact = []
    for i in range(20):
        E = random_theta_odd_like(theta, rng, support=corner, rank=2 + 2 * (i % 2))
        compact.append(edge_z2(LatticeOperator(strip, F.matrix + E)).value)
    same_small = sum(v == base.value for v in small)
    same_compact = sum(v == base.value for v in compact)
    ok = odd == 0 and same_small == 20 and same_compact == 20
    record_criterion(7, ok, f"odd ranks {odd}/1000; index {base.value} kept under {same_small}/20 small and "
                            f"{same_compact}/20 finite-rank perturbations (Fredholm gap {fgap:.3f})")
    assert ok


def _homotopy_paths(family, N, n1):
    model = ModelSpec(family, -1.0)
    H = build_bulk(model, None, _torus(n1, N, 16))
    sw = default_switch(spectral_gap(H))
    strip = LatticeGeometry.strip(16, 24, N)
    Hb = build_bulk(model, None, strip.covering_bulk())
    Hhat = build_edge(model, None, strip, edge_potential(strip, 0.5, 0.3))
    return [path_corner_flatten(H, sw, SAMPLES), path_truncate_flatten(H, sw, SAMPLES),
            path_boundary_conditions(Hb, Hhat, sw, 1, SAMPLES)]


HOMOTOPY_CASES = {"qwz": (2, 32, "fedosov"), "bhz": (4, 24, "z2")}


def test_criterion_08_homotopy_monitors():
    lines, ok = [], True
    for family, (N, n1, method) in HOMOTOPY_CASES.items():
        for path in _homotopy_paths(family, N, n1):
            theta = standard_tr(path(0.0).geometry) if method == "z2" else None
            rep = monitor(path, method, theta=theta)
            loc2 = all(r["loc2_fit"] is not None and r["loc2_fit"].ok for r in rep.records)
            good = (rep.verdict == "index-constant" and len(rep.records) >= 21 and loc2
                    and rep.min_fredholm_gap >= 0.05)
            ok &= good
            lines.append(f"{family} {path.label}: {rep.verdict}, {len(rep.records)} samples, "
                         f"min Fredholm gap {rep.min_fredholm_gap:.3f}, LOC2 {'ok' if loc2 else 'failed'}")
    g = _torus(16, 2)
    sw = default_switch(spectral_gap(build_bulk(ModelSpec("qwz", -1.0), None, g)))
    adv = monitor(path_projection_family(lambda t: build_bulk(ModelSpec("qwz", -1.0 - 2.0 * t), None, g), sw,
                                         "adversarial", SAMPLES))
    caught = adv.verdict != "index-constant" and bool(adv.flagged)
    ok &= caught
    lines.append(f"adversarial: {adv.verdict}, {len(adv.flagged)} flagged samples")
    record_criterion(8, ok, "; ".join(lines))
    assert ok, lines


def test_criterion_09_helffer_sjostrand():
    H = build_bulk(ModelSpec("qwz", 3.0), None, LatticeGeometry.square(8, 2, periodic=True))
    sw = default_switch(spectral_gap(H))
    ref = apply_function_eig(H, sw).matrix
    errs = [float(np.linalg.norm(apply_function_hs(H, sw, quadrature=(q, q)).matrix - ref, 2))
            for q in (64, 96, 128)]
    ok = errs[0] <= 1e-6 and errs[0] > errs[1] > errs[2]
    record_criterion(9, ok, "errors " + ", ".join(f"{e:.2e}" for e in errs) + " at quadrature 64, 96, 128")
    assert ok, errs


def test_criterion_10_combes_thomas():
    H = build_bulk(ModelSpec("qwz", -1.0), None, _torus(12, 2))
    fits = combes_thomas_check(H, [0.25j, 0.5j, 1.0j])
    rates = [f.rate for f in fits]
    pref = [f.prefactor for f in fits]
    res = max(f.max_residual for f in fits)
    ok = (all(f.ok for f in fits) and rates[0] < rates[1] < rates[2] and pref[0] > pref[1] > pref[2]
          and res <= 1.0)
    record_criterion(10, ok, f"rates {np.round(rates, 3).tolist()}, prefactors {np.round(pref, 3).tolist()}, "
                             f"worst residual {res:.2f}")
    assert ok


def _forcing(records):
    """Smallest Fredholm gap strictly between the last index-0 level and the first nonzero level above it."""
    conv = [(i, r) for i, r in enumerate(records) if r["index"] is not None and r["index"].converged]
    zeros = [i for i, r in conv if r["index"].value == 0]
    if not zeros:
        return None
    lo = zeros[0]
    while lo + 1 in zeros:
        lo += 1
    hi = next((i for i, r in conv if i > lo and r["index"].value != 0), None)
    if hi is None:
        return None
    gaps = [records[i]["fredholm_gap"] for i in range(lo + 1, hi) if records[i]["fredholm_gap"] is not None]
    return min(gaps) if gaps else None


def test_criterion_11_delocalization_forcing():
    H = build_bulk(ModelSpec("qwz", -1.0), None, _torus(20, 2))
    recs = fermi_scan(H, np.linspace(-3.9, 0.0, 40))
    mid = recs[-1]["index"]
    forced = _forcing(recs)
    atomic = build_bulk(ModelSpec("atomic-trivial", 1.0), None, _torus(20, 2))
    arecs = fermi_scan(atomic, np.linspace(-1.95, 0.0, 40))
    avals = {r["index"].value for r in arecs if r["index"] is not None}
    ok = mid.value in (-1, 1) and forced is not None and forced < 0.1 and avals == {0}
    record_criterion(11, ok, f"mid-gap index {mid.value}, smallest Fredholm gap in the transition "
                             f"{forced if forced is None else round(forced, 3)}; atomic indices {sorted(avals)}")
    assert ok


def test_criterion_12_determinism(bec_run):
    again = cli.run(cli.load_config(_bec_config()), workers=2, write=False)
    ok = again.json_text == bec_run.json_text and again.csv_text == bec_run.csv_text
    record_criterion(12, ok, "criterion 4 run repeated with 2 workers: "
                             + ("byte-identical JSON and CSV" if ok else "outputs differ"))
    assert ok

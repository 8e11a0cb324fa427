"""Acceptance criteria 1-12; each test prints one PASS/FAIL line."""

import json
import math
import os
import time

import numpy as np
import pytest
from scipy import integrate

from carnot_gmt import algebra as ca
from carnot_gmt import catalog as cat
from carnot_gmt import density as dn
from carnot_gmt import homnorm as hn
from carnot_gmt import ineq as iq
from carnot_gmt.cli import main
from carnot_gmt.scenario import _horizontal_field

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
MANIFEST = os.path.join(ROOT, "scenarios", "acceptance.json")
RADII = tuple(2.0**-j for j in range(7))
ORIGIN = np.zeros(3)


@pytest.fixture
def announce(capsys):
    def emit(number, ok, detail, seconds):
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'} ({seconds:.1f} s) {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def koranyi_h1():
    alg = ca.heisenberg(1)
    return alg, hn.HomogeneousNorm(alg, "koranyi")


def explicit_heisenberg(x, y):
    z = x + y
    z[:, 2] += 0.5 * (x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0])
    return z


def test_01_structure(announce):
    start = time.perf_counter()
    reps = {name: ca.validate_structure(make()) for name, make in ca.BUILTIN_GROUPS.items()}
    secs = time.perf_counter() - start
    ok = all(
        r.all_pass and r.antisymmetry_residual == 0 and r.jacobi_residual == 0 for r in reps.values()
    ) and secs < 1.0
    assert announce(1, ok, f"groups={sorted(reps)}", secs)


def test_02_bch_closed_form(announce):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    h1 = ca.heisenberg(1)
    x, y = rng.normal(size=(2, 1000, 3))
    law = float(np.max(np.abs(ca.bch_product(h1, x, y) - explicit_heisenberg(x, y))))
    assoc = 0.0
    for make in ca.BUILTIN_GROUPS.values():
        alg = make()
        a, b, c = rng.normal(size=(3, 1000, alg.n))
        lhs = ca.bch_product(alg, ca.bch_product(alg, a, b), c)
        rhs = ca.bch_product(alg, a, ca.bch_product(alg, b, c))
        assoc = max(assoc, float(np.max(np.abs(lhs - rhs))))
    secs = time.perf_counter() - start
    ok = law <= 1e-12 and assoc <= 1e-12 and secs < 5.0
    assert announce(2, ok, f"law residual={law:.2e} associativity={assoc:.2e}", secs)


def test_03_norm_calculus(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1000, 3))
    t = rng.uniform(0.1, 10.0, 1000)
    r = rho(x)
    hom = float(np.max(np.abs(rho(ca.dilate(alg, t, x)) - t * r) / r))
    sym = float(np.max(np.abs(rho(-x) - r) / r))
    g = hn.horizontal_gradient(rho, x)
    h = 1e-6
    fd = np.stack(
        [(rho(ca.bch_product(alg, x, h * e)) - rho(ca.bch_product(alg, x, -h * e))) / (2 * h) for e in np.eye(3)[:2]],
        axis=-1,
    )
    gerr = float(np.max(np.abs(g - fd)))
    gmax = float(np.max(np.linalg.norm(g, axis=-1)))
    p, q = rng.normal(size=(2, 100, 3))
    radial = float(np.max(hn.radial_identity_residual(rho, p, q)))
    secs = time.perf_counter() - start
    ok = hom <= 1e-12 and sym <= 1e-12 and gerr <= 1e-6 and gmax <= 1 + 1e-8 and radial <= 1e-6 and secs < 10
    detail = f"homogeneity={hom:.1e} symmetry={sym:.1e} grad-fd={gerr:.1e} max|grad|={gmax:.12f} radial={radial:.1e}"
    assert announce(3, ok, detail, secs)


def test_04_metric_factor_noncharacteristic(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    oracle, _ = integrate.quad(lambda y: math.sqrt(1 - y**4), 0, 1, epsabs=1e-13)
    est = dn.metric_factor_noncharacteristic(alg, rho, np.array([1.0, 0.0]))
    secs = time.perf_counter() - start
    rel = abs(est.value - oracle) / oracle
    ok = rel <= 5e-3 and secs < 60
    assert announce(4, ok, f"kappa={est.value:.6f} oracle={oracle:.6f} rel={rel:.1e}", secs)


def test_05_metric_factor_characteristic(announce, koranyi_h1, tmp_path):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    prof = dn.density_profile(cat.cplane(alg, rho), ORIGIN, RADII)
    worst = max(abs(v - math.pi / 3) / (math.pi / 3) for v in prof.values)
    doc = {"name": "d", "check": "density", "group": "heisenberg1", "norm": {"kind": "koranyi"}, "surface": "cplane",
           "center": [0, 0, 0], "radii": [1, 0.5]}
    path = tmp_path / "d.json"
    path.write_text(json.dumps(doc))
    code = main(["run", str(path), "--out", str(tmp_path / "out")])
    notes = json.loads((tmp_path / "out" / "d.json").read_text())["report"]["notes"]
    flagged = any("O_{2n}/4n" in n for n in notes)
    secs = time.perf_counter() - start
    ok = worst <= 1e-2 and code == 0 and flagged and secs < 120
    assert announce(5, ok, f"max rel dev from pi/3={worst:.1e} discrepancy flagged={flagged}", secs)


def test_06_identities(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    S = cat.vplane(alg, rho, domain=[[0, 1], [0, 1]])
    co = iq.coarea_check(S, iq.coordinate_function(3, 1))
    t_co = time.perf_counter() - start
    div = iq.divergence_check(S, _horizontal_field("x2X2", alg))
    secs = time.perf_counter() - start
    ok = co.residual <= 1e-3 and div.residual <= 1e-3 and t_co < 60 and secs - t_co < 60
    assert announce(6, ok, f"coarea residual={co.residual:.1e} divergence residual={div.residual:.1e}", secs)


def test_07_monotonicity(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    flat = iq.monotonicity_profile(cat.vplane(alg, rho), ORIGIN)
    m = np.array(flat.terms["m"])
    spread = float((m.max() - m.min()) / m.mean())
    cap = iq.monotonicity_profile(cat.koranyi_sphere(alg, rho), np.array([1.0, 0.0, 0.0]))
    exp_rows = [r for r in cap.rows if r["kind"] == "exponential"]
    slack = min(r["m_exp_next"] - r["m_exp"] + r["error"] for r in exp_rows)
    secs = time.perf_counter() - start
    ok = spread <= 1e-2 and slack >= 0 and len(exp_rows) == 6 and secs < 300
    assert announce(7, ok, f"vplane spread={spread:.1e} sphere min slack={slack:.3f} H0={cap.constants['H0']:.3f}", secs)


def test_08_mu_ratio(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    a = iq.mu_ratio(cat.vplane(alg, rho), ORIGIN, (0.25, 0.0625, 2.0**-6))
    b = iq.mu_ratio(cat.cplane(alg, rho, domain=[[-1, 3], [-2, 2]]), np.array([1.0, 0.0, 0.0]), (0.25, 0.0625, 2.0**-6))
    ra, rb = a.rows[-1]["ratio"], b.rows[-1]["ratio"]
    secs = time.perf_counter() - start
    ok = abs(ra - 1) <= 1e-2 and abs(rb - 1) <= 1e-2
    assert announce(8, ok, f"vplane ratio={ra:.6f} cplane ratio={rb:.6f} at t=2^-6", secs)


def test_09_bounds_chain(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    K1, K2 = dn.metric_factor_bounds(alg, rho)
    ks = [dn.metric_factor_noncharacteristic(alg, rho, v).value for v in dn.random_directions(2, 16, seed=9)]
    cb = dn.constants_bundle(alg, rho)
    secs = time.perf_counter() - start
    ok = all(K1 <= k <= K2 for k in ks) and abs(cb.C_dim - 0.5) <= 1e-6 and abs(cb.c[0] - 0.25) <= 1e-6
    detail = f"K1={K1:.5f} kappa in [{min(ks):.5f}, {max(ks):.5f}] K2={K2:.4f} c_2={cb.c[0]:.6f} C_dim={cb.C_dim:.6f}"
    assert announce(9, ok, detail, secs)


def test_10_isoperimetric(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    sq = iq.isoperimetric_check(cat.vplane(alg, rho, domain=[[0, 1], [0, 1]]))
    C_expect = 2 * 2**alg.Q / sq.constants["K1"] ** (1 / (alg.Q - 1))
    probe = iq.thin_rectangle_probe(alg, rho, (1.0, 10.0, 100.0))
    C = [r["C_emp"] for r in probe.rows]
    Ls = [r["L"] for r in probe.rows]
    growth = all(b > a for a, b in zip(C, C[1:]))
    law = max(abs(c / (C[0] * L ** (2 / 3)) - 1) for c, L in zip(C, Ls))
    secs = time.perf_counter() - start
    ok = (
        abs(sq.terms["C_emp"] - 0.5) <= 5e-3
        and sq.verdict == "holds"
        and math.isclose(sq.constants["C_Isop"], C_expect, rel_tol=1e-12)
        and growth
        and law <= 2e-2
        and probe.verdict == "finding"
    )
    assert announce(10, ok, f"C_emp={sq.terms['C_emp']:.6f} C_Isop={C_expect:.4f} probe C_emp={[round(c, 4) for c in C]}", secs)


def test_11_sobolev(announce, koranyi_h1):
    start = time.perf_counter()
    alg, rho = koranyi_h1
    S = cat.vplane(alg, rho, domain=[[-1.5, 1.5], [-1.5, 1.5]])
    one = iq.sobolev_check(S, iq.radial_bump(1.0), 1.0)
    two = iq.sobolev_check(S, iq.radial_bump(2.0), 1.0)
    drift = abs(one.terms["C_emp"] - two.terms["C_emp"])
    higher = [iq.sobolev_check(S, iq.radial_bump(1.0), p) for p in (2.0, alg.Q - 1.0)]
    finite = all(math.isfinite(r.lhs) and math.isfinite(r.rhs) for r in higher)
    secs = time.perf_counter() - start
    ok = one.verdict == "holds" and drift <= 1e-10 and finite
    detail = f"p=1 {one.verdict} C_emp drift={drift:.1e} p=2 {higher[0].verdict} p=Q-1 {higher[1].verdict}"
    assert announce(11, ok, detail, secs)


def test_12_determinism(announce, tmp_path):
    start = time.perf_counter()
    codes = [main(["suite", MANIFEST, "--out", str(tmp_path / tag)]) for tag in ("a", "b")]
    names = sorted(f for f in os.listdir(tmp_path / "a") if f.endswith(".csv"))
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in names)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    secs = time.perf_counter() - start
    ok = codes == [0, 0] and same and summary["identity_violations"] == 0 and len(names) > 1
    assert announce(12, ok, f"{len(names)} CSVs byte-identical={same} identity violations={summary['identity_violations']}", secs)

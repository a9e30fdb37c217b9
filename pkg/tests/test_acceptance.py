"""Acceptance suite: eleven end-to-end criteria, one PASS/FAIL line each.

The desk scenarios run once per session and most criteria read their
report records.  Lines are collected and echoed in the terminal summary.
"""

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pytest

from mafl import checkpoint, estimates as est, torus
from mafl.pipeline import run_scenario
from mafl.report import emit_report
from mafl.scenario import Scenario

SCEN = Path(__file__).resolve().parents[1] / "scenarios"
DESK = ("zero", "constant", "trig_n1", "trig_n2", "log_pole_n1", "theta_neg_inverse", "theta_power1", "theta_linear", "theta_cube_root", "sigma1_n2", "ma_n2")
GREEN_SCENARIOS = ("trig_n1", "log_pole_n1")


def _emit(lines, label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    print(line)
    lines.append(line)


def _records(rep, check):
    return [r for r in rep.records if r["check"] == check]


@dataclass
class Desk:
    root: Path
    reports: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    green: dict = field(default_factory=dict)
    green_seconds: float = 0.0


@pytest.fixture(scope="session")
def desk_root(tmp_path_factory):
    return tmp_path_factory.mktemp("desk")


@pytest.fixture(scope="session")
def green_runs(desk_root):
    """The two N=64, T=2 scenarios restricted to the average/Green/L1 checks."""
    out, start = {}, time.perf_counter()
    for name in GREEN_SCENARIOS:
        sc = replace(Scenario.load(SCEN / f"{name}.json"), checks=("lemma23",))
        out[name] = run_scenario(sc, desk_root / name)
    return out, time.perf_counter() - start


@pytest.fixture(scope="session")
def desk(desk_root, green_runs):
    d = Desk(desk_root, green=green_runs[0], green_seconds=green_runs[1])
    for name in DESK:
        sc = Scenario.load(SCEN / f"{name}.json")
        t = time.perf_counter()
        rep = run_scenario(sc, desk_root / name)
        emit_report(rep, desk_root / name)
        d.seconds[name] = time.perf_counter() - t
        d.reports[name] = rep
    return d


def test_stationary_exactness(acceptance_lines):
    sc = Scenario.load(SCEN / "stationary.json")
    t = time.perf_counter()
    rep = run_scenario(sc, None)
    dt = time.perf_counter() - t
    sup = rep.extras["sup_abs_phi_tilde"]
    ok = rep.complete and sup <= 1e-10 and dt < 5.0
    _emit(acceptance_lines, "stationary exactness", ok, f"sup|phi_tilde|={sup:.3g} over {len(rep.series)} checkpoints, {dt:.2f}s")
    assert ok


def test_spectral_fidelity(acceptance_lines):
    t = time.perf_counter()
    errs = []
    # n = 1: lambda = 1 + lap phi with lap = (d_xx + d_yy)/4
    g1 = torus.make_grid(1, 32)
    x, y = g1.coords()
    a, b = 0.01, 0.004
    phi = g1.field(lambda x, y: a * np.cos(2 * np.pi * x) + b * np.sin(2 * np.pi * (2 * x - 3 * y)))
    exact = 1 - a * np.pi**2 * np.cos(2 * np.pi * x) - b * np.pi**2 * 13 * np.sin(2 * np.pi * (2 * x - 3 * y))
    h = torus.complex_hessian(phi)
    errs.append(np.max(np.abs(h.eigenvalues[..., 0] - exact)))
    errs.append(np.max(np.abs(h.det() - h.eigenvalues[..., 0])))
    # n = 2, separable: diagonal ddbar with entries 1 - a pi^2 cos(2 pi x_j)
    g2 = torus.make_grid(2, 16)
    x1, y1, x2, y2 = g2.coords()
    phi = g2.field(lambda x1, y1, x2, y2: a * np.cos(2 * np.pi * x1) + b * np.cos(2 * np.pi * y2))
    l1 = np.broadcast_to(1 - a * np.pi**2 * np.cos(2 * np.pi * x1), g2.shape)
    l2 = np.broadcast_to(1 - b * np.pi**2 * np.cos(2 * np.pi * y2), g2.shape)
    h = torus.complex_hessian(phi)
    errs.append(np.max(np.abs(h.eigenvalues - np.sort(np.stack([l1, l2], -1), axis=-1))))
    errs.append(np.max(np.abs(h.det() - np.prod(h.eigenvalues, axis=-1))))
    # n = 2, mixed: every entry shifted by c/4, eigenvalues 1 and 1 + c/2
    phi = g2.field(lambda x1, y1, x2, y2: a * np.cos(2 * np.pi * (x1 + x2)))
    c = np.broadcast_to(-a * (2 * np.pi) ** 2 * np.cos(2 * np.pi * (x1 + x2)), g2.shape)
    h = torus.complex_hessian(phi)
    errs.append(np.max(np.abs(h.eigenvalues - np.sort(np.stack([np.ones(g2.shape), 1 + c / 2], -1), axis=-1))))
    errs.append(np.max(np.abs(h.det() - np.prod(h.eigenvalues, axis=-1))))
    dt = time.perf_counter() - t
    worst = float(max(errs))
    ok = worst <= 1e-10 and dt < 1.0
    _emit(acceptance_lines, "spectral fidelity", ok, f"worst eigenvalue/det error {worst:.2e}, {dt:.2f}s")
    assert ok


def test_average_green_and_l1_bounds(green_runs, acceptance_lines):
    runs, dt = green_runs
    parts, ok = [], dt < 120.0
    for name, rep in runs.items():
        jen = _records(rep, "lemma23_jensen")[0]["margin"]
        green = _records(rep, "lemma23_green")[0]["margin"]
        l1 = _records(rep, "lemma23_l1")[0]["margin"]
        ok &= rep.complete and jen <= 1e-6 and green <= 0 and l1 <= 0
        parts.append(f"{name} jensen={jen:.2e} green={green:.4f} l1={l1:.4f}")
    _emit(acceptance_lines, "average/Green/L1 bounds", ok, f"{'; '.join(parts)}; {dt:.0f}s")
    assert ok


def test_aux_identities(desk, acceptance_lines):
    recs = [(n, r) for n, rep in desk.reports.items() for r in _records(rep, "aux_identities")]
    bad = [(n, r["params"]) for n, r in recs if not (r["params"]["max_psidot"] <= 1e-12 and r["params"]["identity_residual"] <= 1e-6 and r["params"]["I_gap_min"] >= -1e-10)]
    worst_res = max(r["params"]["identity_residual"] for _, r in recs)
    worst_dot = max(r["params"]["max_psidot"] for _, r in recs)
    ok = bool(recs) and not bad and all(r["pass"] for _, r in recs)
    _emit(acceptance_lines, "aux-flow identities", ok, f"{len(recs)} aux runs, max psidot={worst_dot:.3g}, worst identity residual={worst_res:.2e}, failures={len(bad)}")
    assert ok


def test_level_set_bound(desk, acceptance_lines):
    names = [n for n in DESK if "lemma31" in Scenario.load(SCEN / f"{n}.json").checks]
    recs = [(n, r) for n in names for r in _records(desk.reports[n], "lemma31")]
    pairs = sum(desk.reports[n].extras.get("lemma31_nonempty_pairs", 0) for n in names)
    seconds = desk.green_seconds + sum(desk.seconds[n] for n in names)
    refined = sum(1 for _, r in recs if r["params"].get("refined"))
    worst = max(r["margin"] for _, r in recs if not r["params"].get("empty"))
    ok = pairs >= 12 and all(r["pass"] for _, r in recs) and all(desk.reports[n].complete for n in names) and seconds < 600
    _emit(acceptance_lines, "level-set test function bound", ok, f"{len(recs)} pairs ({pairs} non-empty), worst non-empty margin={worst:.3g}, refined={refined}, {seconds:.0f}s")
    assert ok


def test_degiorgi_random_inputs(acceptance_lines):
    rng = np.random.default_rng(20240917)
    t = time.perf_counter()
    done, ok = 0, True
    while done < 50:
        m = int(rng.integers(20, 200))
        s = np.concatenate([[0.0], np.cumsum(rng.uniform(0.005, 0.05, size=m - 1))])
        width = rng.uniform(0.3, 1.0) * s[-1]
        P = rng.uniform(0.1, 3.0) * np.maximum(0.0, 1 - s / width) ** rng.uniform(1, 4)
        P[-1] = 0.0
        P = np.minimum.accumulate(P)
        d0 = float(rng.uniform(0.2, 2.0))
        B0 = float(rng.uniform(1.0, 3.0)) * est.minimal_B0(s, P, d0)
        if not (B0 > 0 and math.isfinite(B0)):
            continue
        inp = est.DeGiorgiInput(s, P, B0, d0)
        if est.degiorgi_violation(inp) is not None:
            continue
        res = est.degiorgi_s_infinity(inp)
        spacing = float(np.max(np.diff(s)))
        ok &= res.ok and res.Phi_at_S_inf == 0.0
        ok &= res.S_inf <= res.s0 + 1 / (1 - 2 ** (-d0)) + spacing
        ok &= res.levels == est.degiorgi_scan_oracle(s, P, B0, d0)
        done += 1
    dt = time.perf_counter() - t
    ok &= dt < 5.0
    _emit(acceptance_lines, "De Giorgi level iteration", ok, f"{done} randomized inputs, scan oracle agrees, {dt:.2f}s")
    assert ok


def test_iteration_inequality(desk, acceptance_lines):
    parts, ok, seen = [], True, 0
    for name, rep in desk.reports.items():
        for r in _records(rep, "iteration_lower"):
            seen += 1
            sc = Scenario.load(SCEN / f"{name}.json")
            p = r["params"]
            ok &= r["lhs"] <= 1e-12 and r["pass"] and math.isfinite(p["B0_min"])
            if sc.n == 1 and sc.p == 4.0:
                ok &= p["delta0"] == 1.25
            parts.append(f"{name}:B0={p['B0_min']:.3g}")
    ok &= seen > 0 and est.delta0_printed(1, 4.0) == 1.25
    _emit(acceptance_lines, "iteration inequality", ok, f"{seen} scenarios, delta0(n=1,p=4)=1.25, minimal B0: {' '.join(parts)}")
    assert ok


def test_parabolic_abp(acceptance_lines):
    t = time.perf_counter()
    patch = est.quadratic_patch(m=2, points=33)
    a = est.abp_check(patch)
    b = est.abp_check(est.Patch(2 * patch.u, patch.dx, patch.dt, patch.diam, patch.mask))
    dt = time.perf_counter() - t
    drift = abs(b.ratio / a.ratio - 1)
    ok = a.lhs <= a.rhs and drift <= 1e-10 and dt < 10.0
    _emit(acceptance_lines, "parabolic ABP", ok, f"lhs={a.lhs:.4f} rhs={a.rhs:.4f} (C_dim={a.C_dim:.4f}), 2u ratio drift={drift:.1e}, {dt:.2f}s")
    assert ok


def test_generalized_operators(desk, acceptance_lines):
    ok, parts = True, []
    for name in ("sigma1_n2", "ma_n2"):
        rep = desk.reports[name]
        st = _records(rep, "structure")[0]
        ok &= rep.complete and st["pass"] and st["lhs"] <= 1e-8
        parts.append(f"{name} gamma-structure margin={st['lhs']:.2g}")
        for r in _records(rep, "h_minimum") + _records(rep, "A_maximum"):
            ok &= r["pass"]
    h = est.h_min_formula(1, 1.0, 1.0)
    ok &= h == -2.0 and abs(est.h_min_oracle(1, 1.0, 1.0) - h) <= 1e-12
    amax = est.A_max_formula(1.0, 1.0)
    ok &= amax == 0.25 and abs(est.A_max_oracle(1.0, 1.0) - amax) <= 1e-12
    for n, r, C3 in ((1, 1.0, 0.5), (2, 1.0, 2.0), (2, 2.0, 1.0)):
        f = est.h_min_formula(n, r, C3)
        ok &= abs(est.h_min_oracle(n, r, C3) - f) <= 1e-12 * max(1.0, abs(f))
    _emit(acceptance_lines, "generalized operators", ok, f"{'; '.join(parts)}; h_min(1,1,1)={h}, A_max(1,1)={amax}")
    assert ok


def test_theta_profiles(desk, acceptance_lines):
    mono = _records(desk.reports["theta_power1"], "power_monotone")[0]
    sign = _records(desk.reports["theta_neg_inverse"], "neg_inverse_sign")[0]
    K = _records(desk.reports["theta_neg_inverse"], "neg_inverse_K")[0]
    ok = mono["pass"] and sign["pass"] and K["lhs"] == 0.0 and sign["lhs"] < 0
    _emit(acceptance_lines, "Theta-profile monotonicity", ok, f"power(1) increase={mono['lhs']:.2g} (slack {mono['tolerance']:.2g}); neg_inverse max phidot={sign['lhs']:.3g}; K={K['lhs']}")
    assert ok


def test_determinism_and_formats(desk, tmp_path, acceptance_lines):
    same = []
    for name in ("zero", "constant", "theta_linear"):
        sc = Scenario.load(SCEN / f"{name}.json")
        out = tmp_path / name
        emit_report(run_scenario(sc, out, resume=False), out)
        same.append((out / "report.json").read_bytes() == (desk.root / name / "report.json").read_bytes())
    files = sorted(desk.root.glob("*/checkpoints/*.bin"))
    trips = 0
    for f in files:
        blob = f.read_bytes()
        fld, t, _ = checkpoint.read(f)
        trips += checkpoint.encode(fld, t) == blob
    ok = all(same) and trips == len(files) and len(files) > 0
    _emit(acceptance_lines, "determinism and formats", ok, f"{sum(same)}/{len(same)} reports byte-identical, {trips}/{len(files)} checkpoints round-trip")
    assert ok

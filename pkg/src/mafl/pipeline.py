"""End-to-end scenario execution: main flow, aux flows, checks, report."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mafl import auxflows, checkpoint, estimates as est, flow, functionals as fn, torus
from mafl.scenario import Scenario, generate_F, initial_potential
from mafl.torus import ScalarField, SpaceTimeField

log = logging.getLogger(__name__)

REPORT_VERSION = 1
DEGIORGI_LEVELS = 257
ENERGY_EXPONENTS = (1.0, 2.0, 4.0)


@dataclass
class MainRun:
    phi: SpaceTimeField
    phidot: SpaceTimeField
    diagnostics: list
    summary: dict

    @property
    def phi_tilde(self) -> SpaceTimeField:
        arr = self.phi.slices
        means = arr.reshape(len(arr), -1).mean(axis=1)
        return SpaceTimeField(self.phi.grid, self.phi.times, arr - means.reshape((-1,) + (1,) * self.phi.grid.ndim_real))


@dataclass
class EstimateReport:
    scenario: dict
    scenario_hash: str
    constants: dict = field(default_factory=dict)
    series: list = field(default_factory=list)
    records: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    complete: bool = True
    error: str | None = None
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.complete and all(r["pass"] for r in self.records)

    def as_dict(self) -> dict:
        return est._clean(
            {
                "report_version": REPORT_VERSION,
                "scenario": self.scenario,
                "scenario_hash": self.scenario_hash,
                "constants": self.constants,
                "series": self.series,
                "records": self.records,
                "extras": self.extras,
                "complete": self.complete,
                "error": self.error,
                "pass": self.passed,
            }
        )


# ---------------------------------------------------------------- main flow with checkpoints


def _ckpt_dir(out_dir) -> Path | None:
    return None if out_dir is None else Path(out_dir) / "checkpoints"


def _load_main(sc: Scenario, grid, out_dir) -> MainRun | None:
    d = _ckpt_dir(out_dir)
    if d is None or not (d / "main_run.json").exists():
        return None
    meta = json.loads((d / "main_run.json").read_text())
    if meta.get("flow_hash") != sc.flow_hash():
        return None
    times, phis, dots = [], [], []
    for i in range(meta["count"]):
        f, t, _ = checkpoint.read(d / f"main_{i:04d}.bin")
        g, _, _ = checkpoint.read(d / f"main_dot_{i:04d}.bin")
        if f.grid != grid:
            return None
        times.append(t)
        phis.append(f.values)
        dots.append(g.values)
    return MainRun(SpaceTimeField(grid, np.array(times), np.array(phis)), SpaceTimeField(grid, np.array(times), np.array(dots)), meta["diagnostics"], meta["summary"])


def _save_main(sc: Scenario, run: MainRun, out_dir):
    d = _ckpt_dir(out_dir)
    if d is None:
        return
    h = sc.flow_hash()
    grid = run.phi.grid
    for i, t in enumerate(run.phi.times):
        side = {"flow_hash": h, "kind": "phi", "index": i, "diagnostics": est._clean(run.diagnostics[i])}
        checkpoint.write(d / f"main_{i:04d}.bin", ScalarField(grid, run.phi.slices[i]), float(t), side)
        checkpoint.write(d / f"main_dot_{i:04d}.bin", ScalarField(grid, run.phidot.slices[i]), float(t), {"flow_hash": h, "kind": "phidot", "index": i})
    meta = {"flow_hash": h, "count": len(run.phi), "summary": run.summary, "diagnostics": est._clean(run.diagnostics)}
    # written last: its presence marks a complete main flow
    (d / "main_run.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def run_main(sc: Scenario, grid, src, op, theta, out_dir=None, resume: bool = True) -> MainRun:
    if resume:
        loaded = _load_main(sc, grid, out_dir)
        if loaded is not None:
            log.info("%s: resumed main flow from checkpoints", sc.name)
            return loaded
    phi0 = initial_potential(sc, grid)
    hf = sc.tolerances.get("high_freq", flow.HIGH_FREQ_LIMIT)
    fr = flow.run_flow(phi0, src, op, theta, sc.T, sc.checkpoint_every, high_freq_limit=hf)
    summary = {
        "steps": fr.steps,
        "rejections": fr.rejections,
        "max_phidot_seen": fr.max_phidot_seen,
        "min_eig_seen": fr.min_eig_seen,
        "structure_min_seen": fr.structure_min_seen,
    }
    run = MainRun(fr.trajectory(), fr.phidot_field(), fr.diagnostics, est._clean(summary))
    _save_main(sc, run, out_dir)
    return run


# ---------------------------------------------------------------- checks


@dataclass
class Context:
    sc: Scenario
    grid: torus.TorusGrid
    src: flow.SourceData
    op: object
    theta: object
    main: MainRun
    C3: float
    C4: float
    out_dir: Path | None = None
    records: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    aux: list = field(default_factory=list)  # (t0, s, weight, run)

    def add(self, rec: est.CheckRecord):
        rec.scenario = self.sc.name
        self.records.append(rec.as_dict())


def _window_starts(ctx: Context) -> list:
    T = float(ctx.main.phi.times[-1])
    return [float(t0) for t0 in ctx.sc.t0_grid if t0 < T - 1e-12]


def _save_aux(ctx: Context, tag: str, run: auxflows.AuxRun, params: dict):
    d = _ckpt_dir(ctx.out_dir)
    if d is None:
        return
    side = {"parent_scenario_hash": ctx.sc.hash(), **est._clean(params), "steps": run.steps, "stages": run.stages}
    checkpoint.write(d / f"aux_{tag}.bin", ScalarField(ctx.grid, run.psi[-1]), float(run.times[-1]), side)


def _aux_record(ctx: Context, run: auxflows.AuxRun, params: dict):
    diags = [d for d in run.diagnostics if d["time"] >= run.weight.t0 - 1e-12]
    worst_res = max(abs(d["identity_residual"]) / max(1.0, abs(d["mass_rate"])) for d in diags)
    min_gap = min(d["I_gap"] for d in diags)
    sup_psi = max(d["sup_psi"] for d in run.diagnostics)
    ratios = [run.max_psidot_seen / 1e-12, worst_res / 1e-6, -min_gap / 1e-10]
    # sup psi >= avg psi >= I(psi) = -(integrated mass): the sup bound the I-functional gives
    C1 = run.weight.mass()
    end = run.diagnostics[-1]
    ctx.add(est.CheckRecord("aux_sup_bound", -end["sup_psi"], C1 / ctx.grid.volume, 1e-8, {**params, "C1": C1, "I_end": end["I"]}))
    ctx.add(
        est.CheckRecord(
            "aux_identities",
            max(ratios),
            1.0,
            0.0,
            {**params, "max_psidot": run.max_psidot_seen, "identity_residual": worst_res, "I_gap_min": min_gap, "sup_psi": sup_psi, "steps": run.steps, "stages": run.stages},
        )
    )


def _level_pairs(ctx: Context):
    phit = ctx.main.phi_tilde
    for t0 in _window_starts(ctx):
        win = phit.window(t0, min(t0 + 1, float(phit.times[-1])))
        top = float((-win.slices).max())
        for frac in ctx.sc.s_fracs:
            yield t0, frac, frac * max(top, 0.0)


def run_level_aux(ctx: Context):
    phit = ctx.main.phi_tilde
    for t0, frac, s in _level_pairs(ctx):
        params = {"t0": t0, "s": s, "s_frac": frac, "k": ctx.sc.k_smooth}
        try:
            w = auxflows.build_weight(phit, ctx.src, "level_set", t0, s=s, k=ctx.sc.k_smooth)
        except auxflows.EmptySupport:
            ctx.aux.append((t0, s, None, None))
            continue
        run = auxflows.run_aux(w, dt_max=ctx.sc.aux_dt_max)
        _save_aux(ctx, f"level_t{t0:g}_s{frac:g}", run, params)
        _aux_record(ctx, run, {**params, "kind": "level_set"})
        ctx.aux.append((t0, s, w, run))


def lemma31_records(ctx: Context) -> list:
    out = []
    phit = ctx.main.phi_tilde
    for t0, s, w, run in ctx.aux:
        if w is None:
            rec = est.CheckRecord("lemma31", -s, 0.0, 0.0, {"t0": t0, "s": s, "empty": True})
        else:
            consts = est.constants31(ctx.grid.n, w.A, ctx.C4)
            win = phit.window(w.t0, w.t1)
            rec = est.check_lemma31(run.window_trajectory(), win, s, consts)
            rec.params.update({"empty": False, "N": ctx.grid.N, "residuals": list(consts.residuals), "printed_c": consts.printed_c})
        out.append(rec)
    return out


def _refined_lemma31(ctx: Context, failing: list) -> dict:
    """Re-run the main flow and the failing pairs once at doubled N."""
    sc2 = ctx.sc.refined()
    grid2 = sc2.grid()
    src2 = generate_F(sc2.F, grid2, sc2.p, sc2.theta_profile())
    sub = None if ctx.out_dir is None else Path(ctx.out_dir) / "refined"
    main2 = run_main(sc2, grid2, src2, ctx.op, ctx.theta, sub)
    C3 = fn.c3_constant(grid2, src2.K)
    ctx2 = Context(sc2, grid2, src2, ctx.op, ctx.theta, main2, C3, fn.c4_constant(grid2.n, C3), sub)
    phit = main2.phi_tilde
    out = {}
    for t0, s in failing:
        w = auxflows.build_weight(phit, src2, "level_set", t0, s=s, k=sc2.k_smooth)
        run = auxflows.run_aux(w, dt_max=sc2.aux_dt_max)
        consts = est.constants31(grid2.n, w.A, ctx2.C4)
        rec = est.check_lemma31(run.window_trajectory(), phit.window(w.t0, w.t1), s, consts)
        rec.params.update({"empty": False, "N": grid2.N, "refined": True, "residuals": list(consts.residuals)})
        out[(t0, s)] = rec
    return out


def check_lemma31_all(ctx: Context):
    recs = lemma31_records(ctx)
    failing = [(r.params["t0"], r.params["s"]) for r in recs if not r.passed]
    if failing and ctx.sc.allow_refine:
        log.info("%s: %d lemma31 failures, retrying at N=%d", ctx.sc.name, len(failing), 2 * ctx.grid.N)
        redo = _refined_lemma31(ctx, failing)
        recs = [redo.get((r.params["t0"], r.params["s"]), r) if not r.passed else r for r in recs]
    ctx.extras["lemma31_nonempty_pairs"] = sum(1 for r in recs if not r.params.get("empty"))
    for r in recs:
        ctx.add(r)


def check_lemma23(ctx: Context):
    m = fn.lemma23_checks(ctx.main.phi, ctx.main.phidot, ctx.src)
    jt = ctx.sc.tolerances.get("jensen", 1e-6)
    V = ctx.grid.volume
    ctx.add(est.CheckRecord("lemma23_jensen", m.jensen, 0.0, jt, {"form": "sup avg(phidot) + avg(nF)"}))
    ctx.add(est.CheckRecord("lemma23_average", m.average_vs_K + ctx.src.K / V, ctx.src.K / V, jt, {}))
    ctx.add(est.CheckRecord("lemma23_green", m.green + m.C3, m.C3, 0.0, {"C3": m.C3}))
    ctx.add(est.CheckRecord("lemma23_l1", m.l1 + 2 * m.C3 * V, 2 * m.C3 * V, 0.0, {"C3": m.C3}))
    scale = max(1.0, ctx.extras["sup_abs_phi_tilde"])
    ctx.add(est.CheckRecord("green_identity", m.green_identity, 0.0, 1e-10 * scale, {"nyquist_amplitude": m.nyquist}))


def check_exp_and_young(ctx: Context, alpha: float):
    phit = ctx.main.phi_tilde
    n = ctx.grid.n
    for t0, s, w, run in ctx.aux:
        if w is None:
            continue
        consts = est.constants31(n, w.A, ctx.C4)
        win = phit.window(w.t0, w.t1)
        psi = run.window_trajectory()
        if ctx.sc.enabled("exp_bound"):
            rec = est.check_exp_bound(psi, win, s, consts, alpha)
            rec.params["t0"] = t0
            ctx.add(rec)
        if ctx.sc.enabled("young"):
            lam = alpha / consts.c
            exc = -win.slices - s
            omega = exc > 0
            v = 0.5 * lam * (np.maximum(exc, 0.0) / w.A ** (1 / (n + 2))) ** ((n + 2) / (n + 1))
            rec = est.check_young(v, win, ctx.src.F, omega, ctx.sc.p)
            rec.params.update({"t0": t0, "s": s})
            ctx.add(rec)


def check_iteration_and_degiorgi(ctx: Context) -> dict:
    phit = ctx.main.phi_tilde
    n, p = ctx.grid.n, ctx.sc.p
    d0 = est.delta0_printed(n, p)
    plots = {}
    for t0 in _window_starts(ctx):
        win = phit.window(t0, min(t0 + 1, float(phit.times[-1])))
        top = float((-win.slices).max())
        if ctx.sc.enabled("iteration"):
            s_grid = [top * j / 8 for j in range(8)] if top > 0 else [0.0]
            it = est.check_iteration(win, ctx.src.F, s_grid, delta0=d0, p=p)
            ctx.add(est.CheckRecord("iteration_lower", it["lower_worst_violation"], 0.0, 1e-12, {"t0": t0, "B0_min": it["B0_min"], "B0_holder": it["B0_holder"], "delta0": d0, "delta0_holder": it["delta0_holder"], "pairs": len(it["rows"])}, extra_ok=bool(math.isfinite(it["B0_min"]))))
        levels = np.linspace(0.0, 1.1 * max(top, 1e-12), DEGIORGI_LEVELS)
        masses = fn.level_mass(phit, ctx.src.F, levels, t0)
        plots[f"{t0:g}"] = {"s": levels.tolist(), "phi": masses.tolist()}
        if ctx.sc.enabled("degiorgi"):
            E_win = fn.window_energy(phit, ctx.src.F, t0)
            cheb = float(np.max(levels * masses - E_win))
            if masses[0] <= 0:
                ctx.add(est.CheckRecord("degiorgi", 0.0, 0.0, 0.0, {"t0": t0, "vacuous": True, "chebyshev_excess": cheb}))
                continue
            B0 = 1.1 * est.minimal_B0(levels, masses, d0)
            res = est.degiorgi_s_infinity(est.DeGiorgiInput(levels, masses, B0, d0))
            ok = res.ok and res.Phi_at_S_inf == 0
            ctx.add(est.CheckRecord("degiorgi", res.S_inf if res.ok else math.inf, res.bound if res.ok else 0.0, 0.0, {"t0": t0, "B0": B0, "delta0": d0, "s0": res.s0, "levels": res.levels, "chebyshev_excess": cheb}, extra_ok=ok and cheb <= 1e-8))
    return plots


def run_entropy_aux(ctx: Context, alpha: float):
    phit = ctx.main.phi_tilde
    n = ctx.grid.n
    for t0 in _window_starts(ctx):
        w = auxflows.build_weight(phit, ctx.src, "entropy", t0)
        run = auxflows.run_aux(w, dt_max=ctx.sc.aux_dt_max)
        params = {"t0": t0, "kind": "entropy"}
        _save_aux(ctx, f"entropy_t{t0:g}", run, params)
        _aux_record(ctx, run, params)
        try:
            consts = est.constants41(n, ctx.sc.p, w.A, alpha, ctx.sc.N_cap)
        except est.InfeasibleConstants as exc:
            ctx.add(est.CheckRecord("lemma41", math.inf, ctx.sc.C_target, 0.0, {"t0": t0, "error": str(exc)}, extra_ok=False))
            continue
        win = phit.window(w.t0, w.t1)
        psi = run.window_trajectory()
        rec = est.check_lemma41(psi, win, consts, ctx.sc.C_target)
        rec.extra_ok = bool(rec.params["h_converges"]) or rec.lhs < 0
        ctx.add(rec)
        if ctx.sc.enabled("cutoff"):
            rho = -consts.eps * (-psi.slices + consts.Lam) ** consts.beta - win.slices
            i_max = np.unravel_index(int(np.argmax(rho)), rho.shape)
            x0 = [float(ax.ravel()[i]) for ax, i in zip(ctx.grid.coords(), i_max[1:])]
            M_val = max(1.0, float(np.max(est.h_smooth(rho, 1e-4) ** consts.b)))
            theta = consts.theta(M_val)
            try:
                cut = est.build_cutoff(ctx.grid, x0, theta, consts.r_inj)
            except est.CutoffResolutionError as exc:
                ctx.extras.setdefault("cutoff_skipped", []).append(str(exc))
                continue
            prm = {"t0": t0, "theta": theta, "r": consts.r_inj, "nominal_bound": est.CUTOFF_GRAD_NOMINAL, "eta_min": cut.eta_min, "eta_max": cut.eta_max}
            rng_ok = cut.eta_min >= 0.9 and cut.eta_max <= 1 + 1e-12
            ctx.add(est.CheckRecord("cutoff_grad", cut.grad_const, est.CUTOFF_GRAD_BOUND, 0.0, prm, extra_ok=rng_ok))
            ctx.add(est.CheckRecord("cutoff_hess", cut.hess_const, est.CUTOFF_HESS_BOUND, 0.0, prm, extra_ok=rng_ok))


def check_generalized(ctx: Context):
    op = ctx.op
    ctx.add(est.CheckRecord("structure", op.gamma - ctx.main.summary["structure_min_seen"], 0.0, 1e-8, {"gamma": op.gamma, "operator": op.label}))
    r = op.degree
    hf = est.h_min_formula(ctx.grid.n, r, ctx.C3)
    ho = est.h_min_oracle(ctx.grid.n, r, ctx.C3)
    ctx.add(est.CheckRecord("h_minimum", abs(hf - ho), 0.0, 1e-12 * max(1.0, abs(ho)), {"r": r, "C3": ctx.C3, "formula": hf, "oracle": ho}))
    am, ao = est.A_max_formula(1.0, 1.0), est.A_max_oracle(1.0, 1.0)
    ctx.add(est.CheckRecord("A_maximum", abs(am - ao), 0.0, 1e-12, {"a": 1.0, "l": 1.0, "formula": am, "oracle": ao}))
    if ctx.theta.kind != "log":
        return
    pair = next(((t0, s, w, run) for t0, s, w, run in ctx.aux if w is not None), None)
    if pair is None:
        phit = ctx.main.phi_tilde
        # every level set was empty; the entropy weight always has full support
        w = auxflows.build_weight(phit, ctx.src, "entropy", 0.0)
        run = auxflows.run_aux(w, dt_max=ctx.sc.aux_dt_max)
        pair = (0.0, 0.0, w, run)
    _, _, w, run = pair
    worst = {"amgm_slack": math.inf, "det_slack": math.inf, "log_identity_gap": 0.0}
    times = ctx.main.phi.times
    for i, t in enumerate(times):
        if t < w.t0 - 1e-12 or t > w.t1 + 1e-12:
            continue
        j = int(np.argmin(np.abs(np.array(run.times) - t)))
        res = est.check_generalized_chain(
            ScalarField(ctx.grid, ctx.main.phi.slices[i]), ctx.main.phidot.slices[i], op, ScalarField(ctx.grid, run.psi[j]), run.psidot[j], w.at(float(t)), ctx.src.F
        )
        worst["amgm_slack"] = min(worst["amgm_slack"], res["amgm_slack"])
        worst["det_slack"] = min(worst["det_slack"], res["det_slack"])
        worst["log_identity_gap"] = max(worst["log_identity_gap"], res["log_identity_gap"])
    ctx.add(est.CheckRecord("chain_amgm", -worst["amgm_slack"], 0.0, 1e-10, {}))
    ctx.add(est.CheckRecord("chain_det", -worst["det_slack"], 0.0, 1e-8, {"C7": est.C7_constant(ctx.grid.n, op.gamma)}))
    ctx.add(est.CheckRecord("chain_log", worst["log_identity_gap"], 0.0, 1e-8, {}))


def check_monotonicity(ctx: Context):
    kind = ctx.theta.kind
    diags = ctx.main.diagnostics
    if kind in ("power", "linear"):
        vals = np.array([d["int_phidot_vol"] for d in diags])
        scale = max(1.0, float(np.abs(vals).max()))
        inc = float(np.max(np.diff(vals))) if vals.size > 1 else 0.0
        ctx.add(est.CheckRecord("power_monotone", inc, 0.0, 1e-8 * scale, {"a": ctx.theta.a if kind == "power" else 1.0, "values": vals.tolist()}))
    if kind == "neg_inverse":
        top = float(ctx.main.summary["max_phidot_seen"])
        ctx.add(est.CheckRecord("neg_inverse_sign", top, 0.0, 0.0, {}, extra_ok=top < 0))
        ctx.add(est.CheckRecord("neg_inverse_K", ctx.src.theta_K, 0.0, 0.0, {}))


# ---------------------------------------------------------------- series and driver


def series_rows(ctx: Context, alpha: float | None) -> list:
    phit = ctx.main.phi_tilde
    grid = ctx.grid
    T = float(phit.times[-1])
    rows = []
    for i, d in enumerate(ctx.main.diagnostics):
        t = float(phit.times[i])
        row = {
            "time": t,
            "sup_phi_tilde": d["sup_phi_tilde"],
            "inf_phi_tilde": d["inf_phi_tilde"],
            "mean_phidot": d["int_phidot"] / grid.volume,
            "ent_p": ctx.src.ent_p,
            "I": fn.I_functional_values(grid, ctx.main.phi.slices[i]),
            "exp_int": None,
            "E_window": None,
        }
        if alpha is not None:
            row["exp_int"] = float(fn.exp_integral(SpaceTimeField(grid, phit.times[i : i + 1], phit.slices[i : i + 1]), alpha)[0])
        if t + 1 <= T + 1e-12 or (T < 1 and i == 0):
            row["E_window"] = fn.window_energy(phit, ctx.src.F, t)
        rows.append(row)
    return rows


def _constants(ctx: Context, alpha, E) -> dict:
    led = fn.ConstantsLedger(
        n=ctx.grid.n, V=ctx.grid.volume, K=ctx.src.K, ent_p=ctx.src.ent_p, C3=ctx.C3, C4=ctx.C4, alpha=alpha, E=E, C7=est.C7_constant(ctx.grid.n, ctx.op.gamma)
    )
    if alpha is not None:
        psis = [SpaceTimeField(ctx.grid, np.array(r.times), np.array(r.psi)) for _, _, w, r in ctx.aux if w is not None]
        if psis:
            led.C2 = max(fn.exp_integral(p, alpha)[0] for p in psis)
    d = led.as_dict()
    d["theta_K"] = ctx.src.theta_K
    d["gamma"] = ctx.op.gamma
    d["int_nF"] = ctx.src.int_nF
    return d


def run_scenario(sc: Scenario, out_dir=None, resume: bool = True) -> EstimateReport:
    t_start = time.perf_counter()
    report = EstimateReport(sc.to_dict(), sc.hash())
    grid = sc.grid()
    theta = sc.theta_profile()
    op = sc.operator_spec()
    src = generate_F(sc.F, grid, sc.p, theta)
    try:
        main = run_main(sc, grid, src, op, theta, out_dir, resume)
    except flow.FlowError as exc:
        report.complete = False
        report.error = f"main flow: {exc}"
        return report
    report.timings["main_flow"] = time.perf_counter() - t_start
    C3 = fn.c3_constant(grid, src.K)
    ctx = Context(sc, grid, src, op, theta, main, C3, fn.c4_constant(grid.n, C3), None if out_dir is None else Path(out_dir))
    phit = main.phi_tilde
    ctx.extras["sup_abs_phi_tilde"] = float(np.max(np.abs(phit.slices)))
    ctx.extras["main"] = main.summary
    E = fn.energy_sup(phit, src.F)
    ctx.extras["energy_N"] = {f"{k:g}": fn.energy_N(phit, src.F, 0.0, k) for k in ENERGY_EXPONENTS}
    ctx.extras["energy_exponent_label"] = (grid.n + 1) / (grid.n + 1 - sc.p) if sc.p < grid.n + 1 else None
    alpha = None
    try:
        is_log_ma = theta.kind == "log" and op.kind == "monge_ampere"
        if sc.enabled("lemma23") and is_log_ma:
            check_lemma23(ctx)
        if any(sc.enabled(c) for c in ("aux", "lemma31", "exp_bound", "young")):
            run_level_aux(ctx)
        if sc.enabled("lemma31") and is_log_ma:
            check_lemma31_all(ctx)
        report.timings["level_aux"] = time.perf_counter() - t_start
        corpus = [phit] + [SpaceTimeField(grid, np.array(r.times), np.array(r.psi)) for _, _, w, r in ctx.aux if w is not None]
        alpha = fn.calibrate_alpha(corpus)
        if is_log_ma:
            check_exp_and_young(ctx, alpha)
        plots = check_iteration_and_degiorgi(ctx)
        if sc.enabled("lemma41") and is_log_ma:
            run_entropy_aux(ctx, alpha)
        if sc.enabled("generalized"):
            check_generalized(ctx)
        if sc.enabled("monotonicity"):
            check_monotonicity(ctx)
    except (flow.FlowError, ValueError) as exc:
        report.complete = False
        report.error = f"checks: {exc}"
        plots = {}
    report.timings["total"] = time.perf_counter() - t_start
    report.constants = _constants(ctx, alpha, E)
    report.series = series_rows(ctx, alpha)
    report.records = ctx.records
    ctx.extras["level_mass"] = plots
    report.extras = ctx.extras
    return report

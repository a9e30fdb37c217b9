import math

import numpy as np
import pytest

from mafl import flow, torus
from mafl.operators import OperatorSpec, ThetaProfile
from mafl.torus import ScalarField

LOG = ThetaProfile("log")
MA1 = OperatorSpec("monge_ampere", 1)


def _src(grid, values, p=4.0, theta=None):
    return flow.make_source(ScalarField(grid, np.broadcast_to(values, grid.shape).copy()), p, theta)


def _smooth_F(grid, amp=0.3):
    return grid.field(lambda x, y: amp * np.cos(2 * np.pi * x) + 0.5 * amp * np.sin(2 * np.pi * (x + y))).values


def test_make_source_constant():
    g = torus.make_grid(1, 16)
    src = _src(g, 1.0, p=2.0)
    assert src.ent_p == pytest.approx(math.e, rel=1e-14)
    assert src.int_nF == pytest.approx(1.0, rel=1e-14)
    assert src.K == 0.0
    with pytest.raises(ValueError):
        _src(g, 0.0, p=1.0)


def test_neg_inverse_K_is_zero():
    g = torus.make_grid(1, 16)
    src = _src(g, _smooth_F(g), theta=ThetaProfile("neg_inverse"))
    assert src.theta_K == 0.0


def test_rhs_examples():
    g = torus.make_grid(1, 16)
    st0 = flow.initial_state(g.zeros(), _src(g, 0.0), MA1, LOG)
    assert np.all(flow.rhs(st0, _src(g, 0.0), MA1, LOG).values == 0.0)
    c = 0.7
    src = _src(g, c)
    assert np.allclose(flow.rhs(st0, src, MA1, LOG).values, -1 * c)
    g2 = torus.make_grid(2, 8)
    ma2 = OperatorSpec("monge_ampere", 2)
    src2 = _src(g2, c)
    st2 = flow.initial_state(g2.zeros(), src2, ma2, LOG)
    assert np.allclose(flow.rhs(st2, src2, ma2, LOG).values, -2 * c)
    ni = ThetaProfile("neg_inverse")
    assert np.allclose(flow.rhs(flow.initial_state(g.zeros(), _src(g, 0.0), MA1, ni), _src(g, 0.0), MA1, ni).values, -1.0)


def test_stable_dt_hand_value_and_scaling():
    src16 = _src(torus.make_grid(1, 16), 0.0)
    st = flow.initial_state(torus.make_grid(1, 16).zeros(), src16, MA1, LOG)
    # 0.5 h^2 / (2 * 2 * 1/4) with h = 1/16
    assert flow.stable_dt(st, src16, MA1, LOG) == pytest.approx(0.5 / 256, rel=1e-14)
    g32 = torus.make_grid(1, 32)
    st32 = flow.initial_state(g32.zeros(), _src(g32, 0.0), MA1, LOG)
    assert flow.stable_dt(st32) == pytest.approx(flow.stable_dt(st) / 4, rel=1e-14)
    assert flow.diffusion_dt(g32, 2.0) < flow.diffusion_dt(g32, 1.0)


def test_stationary_step_is_identity():
    g = torus.make_grid(1, 16)
    src = _src(g, 0.0)
    st = flow.initial_state(g.zeros(), src, MA1, LOG)
    nxt = flow.step(st, src, MA1, LOG, 0.37)
    assert np.array_equal(nxt.phi.values, st.phi.values)


def test_step_is_third_order():
    g = torus.make_grid(1, 16)
    src = _src(g, _smooth_F(g, 0.2))
    st = flow.initial_state(g.zeros(), src, MA1, LOG)
    errs = []
    for dt in (4e-4, 2e-4, 1e-4):
        big = flow.step(st, src, MA1, LOG, dt)
        half = flow.step(flow.step(st, src, MA1, LOG, dt / 2), src, MA1, LOG, dt / 2)
        errs.append(np.max(np.abs(big.phi.values - half.phi.values)))
    # local error of a third-order method scales like dt^4
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12


def test_huge_step_is_rejected():
    g = torus.make_grid(1, 32)
    src = _src(g, _smooth_F(g, 2.0))
    st = flow.initial_state(g.zeros(), src, MA1, LOG)
    with pytest.raises(flow.StepRejected):
        flow.step(st, src, MA1, LOG, 1.0)


def test_inadmissible_initial_potential():
    g = torus.make_grid(1, 16)
    phi0 = g.field(lambda x, y: 0.2 * np.cos(2 * np.pi * x))
    with pytest.raises(flow.FlowError):
        flow.initial_state(phi0, _src(g, 0.0), MA1, LOG)


def test_run_flow_zero_data_is_stationary():
    g = torus.make_grid(1, 16)
    run = flow.run_flow(g.zeros(), _src(g, 0.0), MA1, LOG, 1.0, 0.25)
    assert run.times == [0.0, 0.25, 0.5, 0.75, 1.0]
    for d in run.diagnostics:
        for key in ("sup_phi_tilde", "inf_phi_tilde", "int_phidot", "l1_phi_tilde", "max_abs_phidot"):
            assert d[key] == 0.0


def test_constant_source_has_constant_rate():
    g = torus.make_grid(1, 16)
    c = 0.4
    run = flow.run_flow(g.zeros(), _src(g, c), MA1, LOG, 0.5, 0.125)
    for t, phi, dot in zip(run.times, run.phi, run.phidot):
        assert np.max(np.abs(dot + c)) < 1e-8
        assert np.max(np.abs(phi + c * t)) < 1e-8


@pytest.fixture(scope="module")
def smooth_run():
    g = torus.make_grid(1, 32)
    src = _src(g, _smooth_F(g))
    return src, flow.run_flow(g.zeros(), src, MA1, LOG, 0.5, 0.125)


def test_normalization_and_cone_along_run(smooth_run):
    src, run = smooth_run
    tilde = run.normalized()
    for sl, phi in zip(tilde.slices, run.phi):
        assert abs(sl.mean()) <= 1e-10 * max(1.0, np.abs(phi).max())
    assert run.min_eig_seen > 0
    assert run.structure_min_seen >= MA1.gamma - 1e-8


def test_average_rate_jensen_bound(smooth_run):
    src, run = smooth_run
    for d in run.diagnostics:
        # mean(phidot) <= -mean(log e^{nF}) + 1e-6
        assert d["int_phidot"] <= -src.int_nF + 1e-6


def test_power_profile_functional_non_increasing():
    g = torus.make_grid(1, 32)
    src = _src(g, _smooth_F(g))
    run = flow.run_flow(g.zeros(), src, MA1, ThetaProfile("power", 1.0), 0.5, 0.0625)
    vals = np.array([d["int_phidot_vol"] for d in run.diagnostics])
    assert np.all(np.diff(vals) <= 1e-8 * max(1.0, np.abs(vals).max()))


def test_neg_inverse_rate_negative():
    g = torus.make_grid(1, 32)
    src = _src(g, _smooth_F(g), theta=ThetaProfile("neg_inverse"))
    run = flow.run_flow(g.zeros(), src, MA1, ThetaProfile("neg_inverse"), 0.25, 0.125)
    assert run.max_phidot_seen < 0


def test_resolution_monitor_aborts():
    g = torus.make_grid(1, 16)
    src = _src(g, g.field(lambda x, y: 0.3 * np.cos(2 * np.pi * 7 * x)).values)
    with pytest.raises(flow.ResolutionError) as info:
        flow.run_flow(g.zeros(), src, MA1, LOG, 0.05, 0.025)
    assert info.value.t is not None

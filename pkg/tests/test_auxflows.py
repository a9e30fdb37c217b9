import numpy as np
import pytest
from hypothesis import given, strategies as st

from mafl import auxflows as aux
from mafl import flow, torus
from mafl.operators import OperatorSpec, ThetaProfile
from mafl.torus import ScalarField, SpaceTimeField


def test_smooth_plus_examples():
    assert aux.smooth_plus(0.0, 10) == pytest.approx(0.05, abs=1e-16)
    assert aux.smooth_plus(1e3, 10) == pytest.approx(1e3, rel=1 / (2 * 10 * 1e3))
    assert aux.smooth_plus(-1.0, 1e8) < 1e-15
    with pytest.raises(ValueError):
        aux.smooth_plus(0.0, 0.5)


@given(x=st.floats(-1e3, 1e3), k=st.floats(1, 1e4))
def test_smooth_plus_properties(x, k):
    v = aux.smooth_plus(x, k)
    assert v >= 0
    assert v >= max(x, 0.0)
    assert v - max(x, 0.0) <= 1 / (2 * k) * (1 + 1e-12)
    assert aux.smooth_plus(x + 0.5, k) >= v


def _stack(grid, times, fn):
    return SpaceTimeField(grid, np.asarray(times, dtype=float), np.array([np.broadcast_to(fn(t), grid.shape) for t in times]))


def _src(grid, F=0.0, p=4.0):
    return flow.make_source(ScalarField(grid, np.broadcast_to(F, grid.shape).copy()), p)


def test_build_weight_empty_support():
    g = torus.make_grid(1, 8)
    phit = _stack(g, [0, 0.5, 1.0], lambda t: np.zeros(g.shape))
    with pytest.raises(aux.EmptySupport):
        aux.build_weight(phit, _src(g), "level_set", 0.0, s=0.0)
    with pytest.raises(aux.EmptySupport):
        aux.build_weight(_stack(g, [0, 1.0], lambda t: -np.ones(g.shape)), _src(g), "level_set", 0.0, s=1.0)


def test_level_weight_constant_field():
    g = torus.make_grid(1, 8)
    phit = _stack(g, [0, 0.25, 0.5, 0.75, 1.0], lambda t: -np.ones(g.shape))
    w = aux.build_weight(phit, _src(g), "level_set", 0.0, s=0.0, k=1e6)
    assert np.allclose(w.weights.slices, 1.0 / g.volume, rtol=1e-12)
    assert w.mass() == pytest.approx(1.0, abs=1e-8)


def test_entropy_weight_zero_F():
    g = torus.make_grid(1, 8)
    phit = _stack(g, [0, 0.5, 1.0, 1.5], lambda t: np.zeros(g.shape))
    w = aux.build_weight(phit, _src(g), "entropy", 0.5)
    assert (w.t0, w.t1) == (0.5, 1.5)
    assert np.allclose(w.weights.slices, 1.0 / g.volume)
    assert np.all(w.at(0.25) == 0.0) and np.all(w.at(1.75) == 0.0)


def test_weight_normalization_with_source():
    g = torus.make_grid(1, 16)
    F = g.field(lambda x, y: 0.4 * np.sin(2 * np.pi * x)).values
    phit = _stack(g, np.linspace(0, 1, 9), lambda t: -0.1 * t * np.cos(2 * np.pi * torus.make_grid(1, 16).coords()[1]) * np.ones(g.shape))
    for kind, s in (("level_set", 0.01), ("entropy", None)):
        w = aux.build_weight(phit, _src(g, F), kind, 0.0, s=s)
        assert w.mass() == pytest.approx(1.0, abs=1e-8)
        assert np.all(w.weights.slices >= 0)


def test_window_is_clipped_and_validated():
    g = torus.make_grid(1, 8)
    phit = _stack(g, [0, 0.5, 1.0], lambda t: -np.ones(g.shape))
    w = aux.build_weight(phit, _src(g), "entropy", 0.5)
    assert w.t1 == 1.0
    with pytest.raises(ValueError):
        aux.build_weight(phit, _src(g), "entropy", 1.0)
    with pytest.raises(ValueError):
        aux.build_weight(phit, _src(g), "other", 0.0)


def test_zero_weight_keeps_psi_zero():
    g = torus.make_grid(1, 16)
    run = aux.run_aux(aux.zero_weight(g, 0.0, 1.0))
    assert all(np.all(p == 0.0) for p in run.psi)


def test_constant_weight_decreases_psi():
    g = torus.make_grid(1, 16)
    phit = _stack(g, [0, 0.25, 0.5], lambda t: -np.ones(g.shape))
    w = aux.build_weight(phit, _src(g), "level_set", 0.0, s=0.0, k=1e6)
    run = aux.run_aux(w)
    assert run.max_psidot_seen < 0
    assert all(d["sup_psi"] <= 0 for d in run.diagnostics)
    # constant W = 2 on [0, 1/2]: psi(t) = -2t exactly while h_psi = I
    assert np.allclose(run.psi[-1], -1.0, atol=1e-12)


@pytest.fixture(scope="module")
def level_run():
    g = torus.make_grid(1, 32)
    F = g.field(lambda x, y: 0.3 * np.cos(2 * np.pi * x) + 0.2 * np.sin(2 * np.pi * (x + y)))
    src = flow.make_source(F, 4.0)
    fr = flow.run_flow(g.zeros(), src, OperatorSpec("monge_ampere", 1), ThetaProfile("log"), 1.0, 0.125)
    phit = fr.normalized()
    w = aux.build_weight(phit, src, "level_set", 0.0, s=0.0, k=100)
    return w, aux.run_aux(w)


def test_aux_identities_along_run(level_run):
    w, run = level_run
    assert run.max_psidot_seen <= 1e-12
    for d in run.diagnostics:
        assert d["sup_psi"] <= 0
        assert abs(d["identity_residual"]) <= 1e-6 * max(1.0, abs(d["mass_rate"]))
        assert d["I_gap"] >= -1e-10


def test_aux_sup_bound_from_mass(level_run):
    w, run = level_run
    end = run.diagnostics[-1]
    assert -end["I"] == pytest.approx(w.mass(), rel=1e-3)
    assert -end["sup_psi"] <= w.mass() / w.grid.volume


def test_rkc_matches_small_step_reference(level_run):
    # the same aux problem with a 16x smaller step cap changes psi by far less than it moves
    w, run = level_run
    fine = aux.run_aux(w, dt_max=aux.AUX_DT_MAX / 16)
    diff = np.max(np.abs(fine.psi[-1] - run.psi[-1]))
    assert diff < 1e-4 * np.max(np.abs(run.psi[-1]))


def test_aux_from_later_window_start():
    g = torus.make_grid(1, 16)
    phit = _stack(g, [0, 0.5, 1.0, 1.5], lambda t: -np.ones(g.shape))
    w = aux.build_weight(phit, _src(g), "entropy", 0.5)
    run = aux.run_aux(w)
    assert run.times[0] == 0.0 and run.times[1] == 0.5
    assert np.all(run.psi[1] == 0.0)
    assert [float(t) for t in run.window_trajectory().times] == [0.5, 1.0, 1.5]


def test_rkc_stage_count_grows_with_stiffness():
    assert aux.rkc_stages(1.0) == 2
    assert aux.rkc_stages(1e4) > aux.rkc_stages(1e2)

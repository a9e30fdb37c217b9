"""Windows starting after t = 0.

The auxiliary potential restarts from zero at the window start, so the
level-set test function there equals ``-eps Lambda^beta - phi_tilde(t0) - s``
exactly.  Nothing forces that to be non-positive when ``phi_tilde(t0)`` is
already negative and ``s`` is small; these tests pin the value down and show
where the start slice is harmless.
"""

import numpy as np
import pytest

from mafl import auxflows as aux
from mafl import estimates as est
from mafl import flow, functionals as fn, torus
from mafl.operators import OperatorSpec, ThetaProfile


@pytest.fixture(scope="module")
def late_window():
    g = torus.make_grid(1, 32)
    F = g.field(lambda x, y: 0.3 * np.cos(2 * np.pi * x) + 0.2 * np.cos(2 * np.pi * (2 * y) + 0.5))
    src = flow.make_source(F, 4.0)
    run = flow.run_flow(g.zeros(), src, OperatorSpec("monge_ampere", 1), ThetaProfile("log"), 1.5, 0.125)
    phit = run.normalized()
    C4 = fn.c4_constant(1, fn.c3_constant(g, src.K))
    return phit, src, C4


def _check(phit, src, C4, t0, s):
    w = aux.build_weight(phit, src, "level_set", t0, s=s, k=100)
    run = aux.run_aux(w)
    consts = est.constants31(1, w.A, C4)
    win = phit.window(w.t0, w.t1)
    return est.check_lemma31(run.window_trajectory(), win, s, consts), consts, win


def test_start_slice_value_is_explicit(late_window):
    phit, src, C4 = late_window
    rec, k, win = _check(phit, src, C4, 0.5, 0.0)
    expected = -k.eps * k.Lam**k.beta + float((-win.slices[0]).max())
    assert rec.params["slice_max"][0] == pytest.approx(expected, abs=1e-12)
    assert float((-win.slices[0]).max()) > 0


def test_start_slice_harmless_above_its_depth(late_window):
    phit, src, C4 = late_window
    depth = float((-phit.window(0.5, 1.5).slices[0]).max())
    rec, k, _ = _check(phit, src, C4, 0.5, depth)
    # at s = depth the level set just closes on the start slice
    assert rec.params["slice_max"][0] == pytest.approx(-k.eps * k.Lam**k.beta, abs=1e-12)
    assert rec.params["slice_max"][0] < 0


def test_zero_start_has_no_gap(late_window):
    phit, src, C4 = late_window
    rec, k, _ = _check(phit, src, C4, 0.0, 0.0)
    # phi_0 = 0, so the start slice sits at -eps Lambda^beta
    assert rec.params["slice_max"][0] == pytest.approx(-k.eps * k.Lam**k.beta, abs=1e-12)

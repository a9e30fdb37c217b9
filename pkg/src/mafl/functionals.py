"""Scalar functionals of potentials, sources and stored trajectories."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np
from scipy.special import logsumexp

from mafl import torus
from mafl.operators import ConeError, cone_check, elementary_symmetric
from mafl.torus import ScalarField, SpaceTimeField

ALPHA_SWEEP = tuple(2.0**-j for j in range(7))
ALPHA_BUDGET = 10.0


def entropy_p(F: ScalarField, p: float) -> float:
    """``int |F|^p e^{nF}``."""
    if not p > 1:
        raise ValueError("entropy exponent must satisfy p > 1")
    n = F.grid.n
    return float(np.sum(np.abs(F.values) ** p * np.exp(n * F.values)) * F.grid.cell_volume)


def orlicz_norm(F: ScalarField, p: float, window_length: float = 1.0) -> float:
    """``int int e^{nF} (n|F|)^p`` over a window; equals ``n^p Ent_p`` per unit time."""
    return F.grid.n**p * entropy_p(F, p) * window_length


def I_functional_values(grid, values: np.ndarray, check: bool = False) -> float:
    lam = torus.hessian_eigenvalues(grid, values)
    if check and not cone_check(lam, grid.n):
        raise ConeError("I-functional needs a cone-valid potential")
    n = grid.n
    sig = elementary_symmetric(lam)
    dens = sum(sig[..., j] / comb(n, j) for j in range(n + 1))
    return float(np.sum(values * dens) * grid.cell_volume / (n + 1))


def I_functional(phi: ScalarField) -> float:
    """``(1/(n+1)) int phi sum_j sigma_j(lambda)/binom(n, j)``."""
    return I_functional_values(phi.grid, phi.values, check=True)


def _log_integral_exp(grid, exponent: np.ndarray) -> float:
    return float(logsumexp(exponent) + math.log(grid.cell_volume))


def exp_integral(phi: SpaceTimeField, alpha: float) -> tuple[float, np.ndarray]:
    """``sup_t int e^{-alpha phi}`` and the per-slice values, evaluated with a shifted exponent."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    grid = phi.grid
    logs = np.array([_log_integral_exp(grid, -alpha * sl) for sl in phi.slices])
    with np.errstate(over="ignore"):
        vals = np.exp(logs)
    return float(vals.max()), vals


def calibrate_alpha(corpus, sweep=ALPHA_SWEEP, budget: float = ALPHA_BUDGET) -> float:
    """Largest sweep value with ``int e^{-alpha(phi - sup phi)} <= budget V`` on every slice."""
    slices = []
    for item in corpus:
        if isinstance(item, SpaceTimeField):
            slices.extend((item.grid, s) for s in item.slices)
        else:
            slices.append((item.grid, item.values))
    if not slices:
        raise ValueError("empty corpus")
    for alpha in sweep:
        ok = all(_log_integral_exp(g, -alpha * (v - v.max())) <= math.log(budget * g.volume) for g, v in slices)
        if ok:
            return float(alpha)
    raise ValueError("alpha sweep exhausted: corpus too singular")


def green_constant(grid) -> float:
    """``n ||G_shifted||_{L^1}``, the grid value of the Green bound on ``phi_tilde``."""
    return grid.n * torus.green_kernel(grid).l1_norm


def c3_constant(grid, K: float) -> float:
    """One constant covering the Green bound and the average of ``d/dt phi``."""
    return max(green_constant(grid), K / grid.volume)


def c4_constant(n: int, C3: float) -> float:
    return (n + 1) * math.exp((C3 - 1) / (n + 1))


@dataclass(frozen=True)
class Lemma23Margins:
    jensen: float  # sup_t avg(d/dt phi) + avg(nF); must be <= 0
    average_vs_K: float  # sup_t avg(d/dt phi) - K / V
    green: float  # sup phi_tilde - C3
    l1: float  # sup_t int |phi_tilde| - 2 C3 V
    green_identity: float  # max |P phi_tilde + G * lap phi|, P drops Nyquist-containing modes
    nyquist: float  # max |phi_tilde - P phi_tilde|
    C3: float

    def as_dict(self):
        return asdict(self)


def lemma23_checks(phi: SpaceTimeField, phidot: SpaceTimeField, src) -> Lemma23Margins:
    grid = phi.grid
    V = grid.volume
    kern = torus.green_kernel(grid)
    C3 = grid.n * kern.l1_norm
    cv = grid.cell_volume
    avg_dot = phidot.slices.reshape(len(phidot), -1).sum(axis=1) * cv / V
    sup_avg = float(avg_dot.max())
    tilde = phi.slices - phi.slices.reshape(len(phi), -1).mean(axis=1).reshape((-1,) + (1,) * grid.ndim_real)
    ident = 0.0
    nyq = 0.0
    for sl, tl in zip(phi.slices, tilde):
        lap = torus.laplacian(ScalarField(grid, sl))
        rebuilt = -torus.green_convolve(kern.shifted, ScalarField(grid, lap))
        proj = torus.drop_nyquist(ScalarField(grid, tl))
        ident = max(ident, float(np.max(np.abs(rebuilt - proj))))
        nyq = max(nyq, float(np.max(np.abs(tl - proj))))
    l1 = float((np.abs(tilde).reshape(len(phi), -1).sum(axis=1) * cv).max())
    return Lemma23Margins(
        jensen=sup_avg + src.int_nF / V,
        average_vs_K=sup_avg - src.K / V,
        green=float(tilde.max()) - C3,
        l1=l1 - 2 * C3 * V,
        green_identity=ident,
        nyquist=nyq,
        C3=C3,
    )


def _window(phi_tilde: SpaceTimeField, t0: float, length: float = 1.0) -> SpaceTimeField:
    t1 = min(t0 + length, float(phi_tilde.times[-1]))
    return phi_tilde.window(t0, t1)


def _st_integral(win: SpaceTimeField, values: np.ndarray) -> float:
    per = values.reshape(len(win), -1).sum(axis=1) * win.grid.cell_volume
    return float(np.dot(win.time_weights(), per))


def level_mass(phi_tilde: SpaceTimeField, F: ScalarField, s, t0: float, length: float = 1.0):
    """``int int_{-phi_tilde > s} e^{nF}`` over the window; vectorized over ``s``."""
    win = _window(phi_tilde, t0, length)
    enF = np.exp(F.grid.n * F.values)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.array([_st_integral(win, (-win.slices > si) * enF) for si in s_arr])
    return float(out[0]) if np.ndim(s) == 0 else out


def level_excess(phi_tilde: SpaceTimeField, F: ScalarField, s: float, t0: float, length: float = 1.0) -> float:
    """``A = int int (-phi_tilde - s)_+ e^{nF}`` over the window."""
    win = _window(phi_tilde, t0, length)
    enF = np.exp(F.grid.n * F.values)
    return _st_integral(win, np.maximum(-win.slices - s, 0.0) * enF)


def window_energy(phi_tilde: SpaceTimeField, F: ScalarField, t0: float, length: float = 1.0) -> float:
    """``int int (-phi_tilde)_+ e^{nF}`` over ``[t0, t0 + length]``."""
    return level_excess(phi_tilde, F, 0.0, t0, length)


def energy_N(phi_tilde: SpaceTimeField, F: ScalarField, t0: float, N_exp: float, length: float = 1.0) -> float:
    if not N_exp > 0:
        raise ValueError("energy exponent must be positive")
    win = _window(phi_tilde, t0, length)
    enF = np.exp(F.grid.n * F.values)
    return _st_integral(win, np.maximum(-win.slices, 0.0) ** N_exp * enF)


def window_starts(times: np.ndarray, length: float = 1.0) -> np.ndarray:
    T = float(times[-1])
    if T < length:
        return np.array([float(times[0])])
    return times[times <= T - length + 1e-12]


def energy_sup(phi_tilde: SpaceTimeField, F: ScalarField, length: float = 1.0) -> float:
    return max(window_energy(phi_tilde, F, float(t0), length) for t0 in window_starts(phi_tilde.times, length))


@dataclass
class ConstantsLedger:
    """Every named constant of the estimate chain for one scenario."""

    n: int
    V: float
    K: float
    ent_p: float
    C3: float
    C4: float
    C1: float | None = None
    C2: float | None = None
    C5: float | None = None
    C6: float | None = None
    C7: float | None = None
    alpha: float | None = None
    E: float | None = None
    lemma31: dict = field(default_factory=dict)
    lemma41: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

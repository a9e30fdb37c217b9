"""Explicit integration of d/dt phi = Theta(F(lambda[h_phi]) / e^{rF}).

Theta = log with the Monge-Ampere operator is the Kahler-Ricci flow; Theta =
log with a general operator is the Hessian flow; Monge-Ampere with a general
Theta is the profile flow.  Everything runs through one SSP-RK3 stepper.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from mafl import torus
from mafl.operators import (
    ConeError,
    OperatorSpec,
    ProfileDomainError,
    ThetaProfile,
    F_eval,
    F_grad,
    cone_mask,
    theta_eval,
    theta_prime,
)
from mafl.torus import ScalarField, SpaceTimeField

log = logging.getLogger(__name__)

SAFETY = 0.5
MAX_HALVINGS = 40
DT_FLOOR = 1e-10
HIGH_FREQ_LIMIT = 1e-6


class FlowError(RuntimeError):
    def __init__(self, msg: str, t: float | None = None):
        super().__init__(msg if t is None else f"{msg} (t={t:.6g})")
        self.t = t


class StepRejected(FlowError):
    """The step left the admissible cone; retry with a smaller dt."""


class DtUnderflow(FlowError):
    pass


class ResolutionError(FlowError):
    """High-frequency energy exceeded the resolution budget."""


@dataclass(frozen=True, eq=False)
class SourceData:
    F: ScalarField
    p: float
    ent_p: float
    int_nF: float
    K: float
    theta_K: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.F.grid.n

    def exp_neg(self, r: int) -> np.ndarray:
        """Cached ``e^{-rF}``."""
        if r not in self._cache:
            self._cache[r] = np.exp(-r * self.F.values)
        return self._cache[r]


def make_source(F: ScalarField, p: float, theta: ThetaProfile | None = None) -> SourceData:
    """Hypothesis data for a time-independent F.

    ``K`` is the smallest admissible bound in ``int nF >= -K``; when a profile
    is given, ``theta_K = max(0, int Theta(e^{-nF}))`` is recorded as well.
    """
    if not p > 1:
        raise ValueError("entropy exponent must satisfy p > 1")
    n = F.grid.n
    with np.errstate(over="ignore"):
        enF = np.exp(n * F.values)
        ent = float(np.sum(np.abs(F.values) ** p * enF) * F.grid.cell_volume)
    int_nF = n * torus.integrate(F)
    if not math.isfinite(ent):
        raise ValueError("entropy is not finite on this grid")
    theta_K = None
    if theta is not None:
        theta_K = max(0.0, float(np.sum(theta_eval(theta, np.exp(-n * F.values))) * F.grid.cell_volume))
    return SourceData(F, float(p), ent, int_nF, max(0.0, -int_nF), theta_K)


@dataclass(frozen=True, eq=False)
class FlowState:
    phi: ScalarField
    t: float
    phidot: np.ndarray
    min_eig: float
    diffusion_max: float
    structure_min: float
    dt_last: float = 0.0

    @property
    def phi_tilde(self) -> ScalarField:
        return torus.mean_normalize(self.phi)

    @property
    def max_phidot(self) -> float:
        return float(np.max(np.abs(self.phidot)))


@dataclass(frozen=True)
class _Eval:
    rate: np.ndarray
    min_eig: float
    diffusion_max: float
    structure_min: float


def _evaluate(values: np.ndarray, grid, src: SourceData, op: OperatorSpec, theta: ThetaProfile) -> _Eval:
    lam = torus.hessian_eigenvalues(grid, values)
    if not np.all(cone_mask(lam, op.cone_index)):
        raise ConeError(f"eigenvalues left Gamma_{op.cone_index}")
    Fv = F_eval(op, lam, check=False)
    grad = F_grad(op, lam, check=False)
    y = Fv * src.exp_neg(op.degree)
    try:
        rate = theta_eval(theta, y)
        slope = theta_prime(theta, y) * y
    except ProfileDomainError as exc:
        raise ConeError(str(exc)) from exc
    g_eigs = grad / Fv[..., None]  # eigenvalues of G = (1/F) dF/dh
    diffusion = slope * g_eigs.max(axis=-1) * torus.DDBAR_FACTOR
    structure = np.prod(g_eigs, axis=-1) * Fv ** (grid.n / op.degree)
    return _Eval(np.asarray(rate), float(lam.min()), float(diffusion.max()), float(structure.min()))


def initial_state(phi0: ScalarField, src: SourceData, op: OperatorSpec, theta: ThetaProfile, t: float = 0.0) -> FlowState:
    try:
        ev = _evaluate(phi0.values, phi0.grid, src, op, theta)
    except ConeError as exc:
        raise FlowError(f"initial potential is not admissible: {exc}", t) from exc
    return FlowState(phi0, t, ev.rate, ev.min_eig, ev.diffusion_max, ev.structure_min)


def rhs(state: FlowState, src: SourceData, op: OperatorSpec, theta: ThetaProfile) -> ScalarField:
    ev = _evaluate(state.phi.values, state.phi.grid, src, op, theta)
    return ScalarField(state.phi.grid, ev.rate)


def stable_dt(state: FlowState, src: SourceData | None = None, op: OperatorSpec | None = None, theta: ThetaProfile | None = None) -> float:
    """``SAFETY h^2 / (2 * 2n * max diffusion)``, diffusion = Theta'(y) y lambda_max(G) / 4.

    The state already carries the diffusion maximum evaluated with the
    ``(src, op, theta)`` it was built from; the extra arguments re-evaluate it.
    """
    if src is not None and op is not None and theta is not None:
        ev = _evaluate(state.phi.values, state.phi.grid, src, op, theta)
        return diffusion_dt(state.phi.grid, ev.diffusion_max)
    return diffusion_dt(state.phi.grid, state.diffusion_max)


def diffusion_dt(grid, diffusion_max: float) -> float:
    return SAFETY * grid.h**2 / (2 * grid.ndim_real * max(diffusion_max, 1e-300))


def ssp_rk3(u: np.ndarray, t: float, dt: float, rate0: np.ndarray, L):
    """Shu-Osher SSP-RK3 step; ``L(values, time)`` returns a rate array."""
    u1 = u + dt * rate0
    u2 = 0.75 * u + 0.25 * (u1 + dt * L(u1, t + dt))
    return u / 3.0 + 2.0 / 3.0 * (u2 + dt * L(u2, t + 0.5 * dt))


def step(state: FlowState, src: SourceData, op: OperatorSpec, theta: ThetaProfile, dt: float) -> FlowState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.phi.grid

    def L(v, _t):
        return _evaluate(v, grid, src, op, theta).rate

    try:
        new = ssp_rk3(state.phi.values, state.t, dt, state.phidot, L)
        if not np.all(np.isfinite(new)):
            raise ConeError("non-finite potential")
        ev = _evaluate(new, grid, src, op, theta)
    except ConeError as exc:
        raise StepRejected(f"step rejected: {exc}", state.t) from exc
    return FlowState(ScalarField(grid, new), state.t + dt, ev.rate, ev.min_eig, ev.diffusion_max, ev.structure_min, dt)


@dataclass
class FlowRun:
    """Checkpointed trajectory plus running extrema over every accepted step."""

    grid: torus.TorusGrid
    times: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    phidot: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    steps: int = 0
    rejections: int = 0
    max_phidot_seen: float = -math.inf
    min_eig_seen: float = math.inf
    structure_min_seen: float = math.inf

    def trajectory(self) -> SpaceTimeField:
        return SpaceTimeField(self.grid, np.array(self.times), np.array(self.phi))

    def normalized(self) -> SpaceTimeField:
        arr = np.array(self.phi)
        means = arr.reshape(len(arr), -1).mean(axis=1)
        return SpaceTimeField(self.grid, np.array(self.times), arr - means.reshape((-1,) + (1,) * self.grid.ndim_real))

    def phidot_field(self) -> SpaceTimeField:
        return SpaceTimeField(self.grid, np.array(self.times), np.array(self.phidot))

    def _track(self, state: FlowState):
        self.max_phidot_seen = max(self.max_phidot_seen, float(state.phidot.max()))
        self.min_eig_seen = min(self.min_eig_seen, state.min_eig)
        self.structure_min_seen = min(self.structure_min_seen, state.structure_min)


def checkpoint_diagnostics(state: FlowState, src: SourceData) -> dict:
    grid = state.phi.grid
    tilde = state.phi_tilde
    hess = torus.complex_hessian(state.phi)
    vol_form = hess.det()
    return {
        "time": state.t,
        "sup_phi_tilde": tilde.sup(),
        "inf_phi_tilde": tilde.inf(),
        "int_phidot": float(np.sum(state.phidot) * grid.cell_volume),
        "int_phidot_vol": float(np.sum(state.phidot * vol_form) * grid.cell_volume),
        "l1_phi_tilde": float(np.sum(np.abs(tilde.values)) * grid.cell_volume),
        "ent_p": src.ent_p,
        "min_eig": state.min_eig,
        "max_abs_phidot": state.max_phidot,
        "high_freq": torus.high_frequency_fraction(state.phi),
    }


def run_flow(
    phi0: ScalarField,
    src: SourceData,
    op: OperatorSpec,
    theta: ThetaProfile,
    T: float,
    checkpoint_every: float,
    high_freq_limit: float = HIGH_FREQ_LIMIT,
) -> FlowRun:
    """Integrate on [0, T], storing slices at multiples of ``checkpoint_every``."""
    if not (T > 0 and checkpoint_every > 0):
        raise ValueError("T and checkpoint_every must be positive")
    n_ck = int(round(T / checkpoint_every))
    marks = [min(T, i * checkpoint_every) for i in range(n_ck + 1)]
    if marks[-1] < T - 1e-12:
        marks.append(T)
    run = FlowRun(phi0.grid)
    state = initial_state(phi0, src, op, theta)
    run._track(state)
    _record(run, state, src, high_freq_limit)
    for target in marks[1:]:
        while state.t < target - 1e-12:
            dt = min(stable_dt(state), target - state.t)
            for _ in range(MAX_HALVINGS + 1):
                try:
                    nxt = step(state, src, op, theta, dt)
                    break
                except StepRejected:
                    run.rejections += 1
                    dt *= 0.5
                    if dt < DT_FLOOR:
                        raise DtUnderflow("dt fell below the floor", state.t)
            else:
                raise DtUnderflow("too many step rejections", state.t)
            if target - nxt.t < 1e-12:
                nxt = FlowState(nxt.phi, target, nxt.phidot, nxt.min_eig, nxt.diffusion_max, nxt.structure_min, nxt.dt_last)
            state = nxt
            run.steps += 1
            run._track(state)
        _record(run, state, src, high_freq_limit)
    log.debug("flow done: %d steps, %d rejections", run.steps, run.rejections)
    return run


def _record(run: FlowRun, state: FlowState, src: SourceData, high_freq_limit: float):
    diag = checkpoint_diagnostics(state, src)
    if diag["high_freq"] > high_freq_limit:
        raise ResolutionError(f"high-frequency energy fraction {diag['high_freq']:.3g} exceeds {high_freq_limit:g}", state.t)
    run.times.append(state.t)
    run.phi.append(state.phi.values.copy())
    run.phidot.append(state.phidot.copy())
    run.diagnostics.append(diag)

"""Inverse Monge-Ampere comparison flows driven by a normalized weight.

The flow is ``d/dt psi = -W / det(h_psi)`` with ``W = w e^{nF}`` and
``psi = 0`` at t = 0.  The weight vanishes before the window start, so the
integration starts at ``t0`` with ``psi = 0``.

The weight makes these flows much stiffer than the main flow, so they use a
damped second-order Runge-Kutta-Chebyshev step whose stage count grows like
the square root of the stiffness instead of linearly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from mafl import torus
from mafl.flow import MAX_HALVINGS, DT_FLOOR, DtUnderflow, FlowError, StepRejected, SourceData
from mafl.functionals import I_functional_values
from mafl.torus import ScalarField, SpaceTimeField

log = logging.getLogger(__name__)

WEIGHT_KINDS = ("level_set", "entropy")
EMPTY_SUPPORT_TOL = 1e-14
DIRECTIONAL_STEP = 1e-4
AUX_DT_MAX = 1.0 / 256
RKC_DAMPING = 2.0 / 13.0
RKC_SAFETY = 1.5


class EmptySupport(ValueError):
    """The level set is empty on the window, so its mass is zero."""


def smooth_plus(x, k: float):
    """``(x + sqrt(x^2 + 1/k^2)) / 2``, a smooth upper approximation of ``x_+``.

    The negative branch uses the conjugate form to avoid cancellation.
    """
    if not k >= 1:
        raise ValueError("smoothing index must satisfy k >= 1")
    x = np.asarray(x, dtype=float)
    eps2 = 1.0 / (k * k)
    r = np.sqrt(x * x + eps2)
    out = np.where(x >= 0, 0.5 * (x + r), 0.5 * eps2 / (r - np.minimum(x, 0.0)))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class AuxWeight:
    """Weight ``w`` on checkpoint slices of ``[t0, t1]``; zero outside the window.

    ``A`` is the normalizing integral so that ``int int w e^{nF} dt = 1``.
    """

    kind: str
    t0: float
    t1: float
    weights: SpaceTimeField
    enF: np.ndarray
    A: float
    s: float | None = None
    k: float | None = None
    p: float | None = None
    A_raw: float | None = None

    @property
    def grid(self):
        return self.weights.grid

    @property
    def times(self) -> np.ndarray:
        return self.weights.times

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in time of ``w``; zero outside the window."""
        times = self.weights.times
        if t < self.t0 - 1e-12 or t > self.t1 + 1e-12:
            return np.zeros(self.grid.shape)
        if times.size == 1:
            return self.weights.slices[0]
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        lam = (t - times[i]) / (times[i + 1] - times[i])
        lam = min(max(lam, 0.0), 1.0)
        return (1.0 - lam) * self.weights.slices[i] + lam * self.weights.slices[i + 1]

    def source(self, t: float) -> np.ndarray:
        """``W = w e^{nF}``, the right side of the aux flow up to ``det h``."""
        return self.at(t) * self.enF

    def mass(self) -> float:
        wt = self.weights.time_weights()
        per_slice = np.sum(self.weights.slices * self.enF, axis=tuple(range(1, self.grid.ndim_real + 1)))
        return float(np.dot(wt, per_slice) * self.grid.cell_volume)


def _space_time_integral(values: np.ndarray, times: np.ndarray, grid) -> float:
    stf = SpaceTimeField(grid, times, values)
    per_slice = values.reshape(len(times), -1).sum(axis=1) * grid.cell_volume
    return float(np.dot(stf.time_weights(), per_slice))


def build_weight(
    phi_tilde: SpaceTimeField,
    src: SourceData,
    kind: str,
    t0: float,
    s: float | None = None,
    k: float = 100.0,
    length: float = 1.0,
) -> AuxWeight:
    """Level-set weight ``smooth_plus(-phi_tilde - s, k) / A`` or entropy weight on ``[t0, t0 + length]``.

    The window end is clipped to the last stored time.
    """
    if kind not in WEIGHT_KINDS:
        raise ValueError(f"unknown weight kind {kind!r}")
    grid = phi_tilde.grid
    t_last = float(phi_tilde.times[-1])
    if t0 < phi_tilde.times[0] - 1e-12 or t0 >= t_last:
        raise ValueError(f"window start {t0} is outside the stored times")
    t1 = min(t0 + length, t_last)
    win = phi_tilde.window(t0, t1)
    if len(win) < 2:
        raise ValueError("window needs at least two stored slices")
    enF = np.exp(grid.n * src.F.values)
    if kind == "level_set":
        if s is None:
            raise ValueError("level_set weight needs a level s")
        raw = -win.slices - s
        A_raw = _space_time_integral(np.maximum(raw, 0.0) * enF, win.times, grid)
        if A_raw < EMPTY_SUPPORT_TOL:
            raise EmptySupport(f"level set {{-phi_tilde > {s:g}}} is empty on [{t0:g}, {t1:g}]")
        sm = smooth_plus(raw, k)
        A = _space_time_integral(sm * enF, win.times, grid)
        w = sm / A
        return AuxWeight("level_set", float(win.times[0]), float(win.times[-1]), SpaceTimeField(grid, win.times, w), enF, A, s=s, k=k, A_raw=A_raw)
    dens = np.abs(src.F.values) ** src.p + 1.0
    slices = np.broadcast_to(dens, win.slices.shape).copy()
    A = _space_time_integral(slices * enF, win.times, grid)
    return AuxWeight("entropy", float(win.times[0]), float(win.times[-1]), SpaceTimeField(grid, win.times, slices / A), enF, A, p=src.p)


def zero_weight(grid, t0: float, t1: float) -> AuxWeight:
    times = np.array([t0, t1], dtype=float)
    return AuxWeight("level_set", t0, t1, SpaceTimeField(grid, times, np.zeros((2, *grid.shape))), np.ones(grid.shape), 1.0)


@dataclass(frozen=True)
class _AuxEval:
    rate: np.ndarray
    min_eig: float
    diffusion_max: float


def _aux_evaluate(values: np.ndarray, W: np.ndarray, grid) -> _AuxEval:
    lam = torus.hessian_eigenvalues(grid, values)
    lmin = lam[..., 0]
    if not np.all(lmin > 0):
        raise StepRejected("aux potential left the positive cone")
    det = np.prod(lam, axis=-1)
    rate = -W / det
    diffusion = -rate / lmin * torus.DDBAR_FACTOR
    return _AuxEval(rate, float(lmin.min()), float(diffusion.max()))


@dataclass
class AuxRun:
    grid: torus.TorusGrid
    weight: AuxWeight
    times: list = field(default_factory=list)
    psi: list = field(default_factory=list)
    psidot: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    steps: int = 0
    stages: int = 0
    rejections: int = 0
    max_psidot_seen: float = -math.inf
    min_eig_seen: float = math.inf

    def trajectory(self) -> SpaceTimeField:
        return SpaceTimeField(self.grid, np.array(self.times), np.array(self.psi))

    def window_trajectory(self) -> SpaceTimeField:
        return self.trajectory().window(self.weight.t0, self.weight.t1)


def aux_diagnostics(grid, psi: np.ndarray, psidot: np.ndarray, W: np.ndarray, t: float) -> dict:
    """sup psi, I(psi), the I-gap and both sides of ``dI/dt = -int W``."""
    I = I_functional_values(grid, psi)
    int_psi = float(np.sum(psi) * grid.cell_volume)
    scale = float(np.max(np.abs(psidot)))
    if scale > 0:
        eta = DIRECTIONAL_STEP / scale
        dI = (I_functional_values(grid, psi + eta * psidot) - I_functional_values(grid, psi - eta * psidot)) / (2 * eta)
    else:
        dI = 0.0
    mass_rate = float(np.sum(W) * grid.cell_volume)
    return {
        "time": t,
        "sup_psi": float(psi.max()),
        "inf_psi": float(psi.min()),
        "I": I,
        "I_gap": int_psi - I,
        "dI_dt": dI,
        "mass_rate": mass_rate,
        "identity_residual": dI + mass_rate,
        "max_psidot": float(psidot.max()),
    }


def spectral_radius(grid, diffusion_max: float) -> float:
    """Largest eigenvalue magnitude of ``D sum_a d_a^2`` with the spectral symbols."""
    return diffusion_max * grid.ndim_real * (math.pi / grid.h) ** 2


def _chebyshev(s: int, w: float):
    T, dT, ddT = np.zeros(s + 1), np.zeros(s + 1), np.zeros(s + 1)
    T[0], T[1], dT[1] = 1.0, w, 1.0
    for j in range(2, s + 1):
        T[j] = 2 * w * T[j - 1] - T[j - 2]
        dT[j] = 2 * T[j - 1] + 2 * w * dT[j - 1] - dT[j - 2]
        ddT[j] = 4 * dT[j - 1] + 2 * w * ddT[j - 1] - ddT[j - 2]
    return T, dT, ddT


def rkc_stages(rho_dt: float) -> int:
    """Stage count whose real stability interval ``~0.65 s^2`` covers ``rho dt``."""
    beta = 2.0 / 3.0 * (1 - 2 * RKC_DAMPING / 15)
    return max(2, int(math.ceil(math.sqrt(1 + RKC_SAFETY * rho_dt / beta))))


def rkc_step(u: np.ndarray, t: float, dt: float, f0: np.ndarray, L, s: int) -> np.ndarray:
    """One damped RKC2 step with ``s`` stages; ``L(values, time)`` returns a rate."""
    w0 = 1 + RKC_DAMPING / s**2
    T, dT, ddT = _chebyshev(s, w0)
    w1 = dT[s] / ddT[s]
    b = np.zeros(s + 1)
    b[2:] = ddT[2:] / dT[2:] ** 2
    b[0] = b[1] = b[2]
    c = np.zeros(s + 1)
    c[2:] = dT[s] / ddT[s] * ddT[2:] / dT[2:]
    c[1] = c[2] / dT[2]
    y_prev2 = u
    y_prev = u + b[1] * w1 * dt * f0
    for j in range(2, s + 1):
        mu = 2 * b[j] * w0 / b[j - 1]
        nu = -b[j] / b[j - 2]
        mut = 2 * b[j] * w1 / b[j - 1]
        gam = -(1 - b[j - 1] * T[j - 1]) * mut
        y = (1 - mu - nu) * u + mu * y_prev + nu * y_prev2 + mut * dt * L(y_prev, t + c[j - 1] * dt) + gam * dt * f0
        y_prev2, y_prev = y_prev, y
    return y_prev


def run_aux(weight: AuxWeight, T: float | None = None, dt_max: float = AUX_DT_MAX) -> AuxRun:
    """Integrate from ``t0`` (where ``psi = 0``) to ``T`` (default: window end).

    Slices are stored at t = 0 (if ``t0 > 0``) and at every weight checkpoint.
    """
    grid = weight.grid
    T = weight.t1 if T is None else float(T)
    run = AuxRun(grid, weight)
    psi = np.zeros(grid.shape)
    t = weight.t0
    if t > 0:
        run.times.append(0.0)
        run.psi.append(psi.copy())
        run.psidot.append(psi.copy())
        run.diagnostics.append(aux_diagnostics(grid, psi, psi, np.zeros(grid.shape), 0.0))
    marks = [float(x) for x in weight.times if x <= T + 1e-12]
    if not marks or marks[-1] < T - 1e-12:
        marks.append(T)

    def L(v, tt):
        return _aux_evaluate(v, weight.source(tt), grid).rate

    ev = _aux_evaluate(psi, weight.source(t), grid)
    _aux_record(run, psi, ev, weight.source(t), t)
    for target in marks[1:]:
        while t < target - 1e-12:
            dt = min(dt_max, target - t)
            for _ in range(MAX_HALVINGS + 1):
                try:
                    s = rkc_stages(spectral_radius(grid, ev.diffusion_max) * dt)
                    new = rkc_step(psi, t, dt, ev.rate, L, s)
                    if not np.all(np.isfinite(new)):
                        raise StepRejected("non-finite aux potential", t)
                    t_new = target if target - (t + dt) < 1e-12 else t + dt
                    ev_new = _aux_evaluate(new, weight.source(t_new), grid)
                    break
                except StepRejected:
                    run.rejections += 1
                    dt *= 0.5
                    if dt < DT_FLOOR:
                        raise DtUnderflow("aux dt fell below the floor", t)
            else:
                raise DtUnderflow("too many aux step rejections", t)
            psi, t, ev = new, t_new, ev_new
            run.steps += 1
            run.stages += s
            run.max_psidot_seen = max(run.max_psidot_seen, float(ev.rate.max()))
            run.min_eig_seen = min(run.min_eig_seen, ev.min_eig)
        _aux_record(run, psi, ev, weight.source(t), t)
    log.debug("aux flow done: %d steps, %d stages, %d rejections", run.steps, run.stages, run.rejections)
    return run


def _aux_record(run: AuxRun, psi, ev: _AuxEval, W, t):
    if not np.all(np.isfinite(psi)):
        raise FlowError("aux potential is not finite", t)
    run.times.append(t)
    run.psi.append(psi.copy())
    run.psidot.append(ev.rate.copy())
    run.max_psidot_seen = max(run.max_psidot_seen, float(ev.rate.max()))
    run.min_eig_seen = min(run.min_eig_seen, ev.min_eig)
    run.diagnostics.append(aux_diagnostics(run.grid, psi, ev.rate, W, t))

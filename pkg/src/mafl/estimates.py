"""Executable forms of the a-priori inequalities.

Every check returns a ``CheckRecord`` with ``margin = lhs - rhs``; a check
passes when ``margin <= tolerance``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from mafl import torus
from mafl.operators import OperatorSpec, elementary_symmetric, linearization_coeffs
from mafl.torus import ScalarField, SpaceTimeField


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class CheckRecord:
    check: str
    lhs: float
    rhs: float
    tolerance: float
    params: dict = field(default_factory=dict)
    scenario: str = ""
    extra_ok: bool = True  # side conditions that are not a single inequality

    @property
    def margin(self) -> float:
        return float(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        return bool(self.margin <= self.tolerance and self.extra_ok)

    def as_dict(self) -> dict:
        return _clean(
            {
                "check": self.check,
                "scenario": self.scenario,
                "params": self.params,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "margin": self.margin,
                "pass": self.passed,
                "tolerance": self.tolerance,
            }
        )


# ---------------------------------------------------------------- level-set test function


@dataclass(frozen=True)
class KeyConstants31:
    n: int
    A: float
    C4: float
    beta: float
    eps: float
    Lam: float
    c: float
    residuals: tuple
    printed_c: float

    def as_dict(self):
        return _clean(asdict(self))


def constants31(n: int, A: float, C4: float) -> KeyConstants31:
    """Closed-form ``(beta, eps, Lambda, c)`` for the level-set test function.

    The maximum-principle step needs ``eps^{n+2} >= A (C4 / ((n+1) beta))^{n+1}``;
    taking equality fixes ``c = C4 (n+2) / (n+1)^2``, and ``beta eps Lambda^{beta-1} = 1``
    gives ``Lambda = (beta eps)^{n+2}``.  ``printed_c`` is the alternative closed form
    ``((n+1)^2 eps / ((n+2) C4))^{n+2}`` kept for comparison.
    """
    if not (A > 0 and C4 > 0):
        raise ValueError("constants31 needs A > 0 and C4 > 0")
    beta = (n + 1) / (n + 2)
    c = C4 * (n + 2) / (n + 1) ** 2
    eps = (c ** (n + 1) * A) ** (1 / (n + 2))
    Lam = (beta * eps) ** (n + 2)
    r1 = beta * eps * Lam ** (beta - 1) - 1.0
    r2 = eps ** (n + 2) / (((n + 2) / (n + 1)) ** (n + 2) * Lam) - 1.0
    r3 = eps ** (n + 2) / (c ** (n + 1) * A) - 1.0
    printed = ((n + 1) ** 2 * eps / ((n + 2) * C4)) ** (n + 2)
    return KeyConstants31(n, A, C4, beta, eps, Lam, c, (r1, r2, r3), printed)


def lemma31_tolerance(phi: SpaceTimeField) -> float:
    return 1e-4 * (1.0 + float(np.max(np.abs(phi.slices))))


def level_test_function(psi: SpaceTimeField, phi: SpaceTimeField, s: float, k: KeyConstants31) -> np.ndarray:
    _same_window(psi, phi)
    return -k.eps * (-psi.slices + k.Lam) ** k.beta - phi.slices - s


def _same_window(a: SpaceTimeField, b: SpaceTimeField):
    if a.grid != b.grid or a.times.shape != b.times.shape or not np.allclose(a.times, b.times, atol=1e-9):
        raise ValueError("trajectories do not share grid and window")


def check_lemma31(psi: SpaceTimeField, phi: SpaceTimeField, s: float, consts: KeyConstants31, scenario: str = "") -> CheckRecord:
    """``max H`` over the window against 0; per-slice maxima go into params."""
    H = level_test_function(psi, phi, s, consts)
    per_slice = H.reshape(len(H), -1).max(axis=1)
    return CheckRecord(
        "lemma31",
        float(per_slice.max()),
        0.0,
        lemma31_tolerance(phi),
        {"s": s, "t0": float(phi.times[0]), "A": consts.A, "eps": consts.eps, "Lambda": consts.Lam, "c": consts.c, "slice_max": per_slice.tolist(), "argmax_time": float(phi.times[int(per_slice.argmax())])},
        scenario,
    )


def _st_sum(win: SpaceTimeField, values: np.ndarray) -> float:
    per = values.reshape(len(win), -1).sum(axis=1) * win.grid.cell_volume
    return float(np.dot(win.time_weights(), per))


def check_exp_bound(psi: SpaceTimeField, phi: SpaceTimeField, s: float, consts: KeyConstants31, alpha: float, scenario: str = "") -> CheckRecord:
    """Exponential integrability on the level set, with ``lambda c = alpha``."""
    _same_window(psi, phi)
    n = phi.grid.n
    lam_exp = alpha / consts.c
    excess = -phi.slices - s
    omega = excess > 0
    scaled = np.where(omega, np.maximum(excess, 0.0) / consts.A ** (1 / (n + 2)), 0.0)
    lhs = _st_sum(phi, np.where(omega, np.exp(lam_exp * scaled ** ((n + 2) / (n + 1))), 0.0))
    rhs = _st_sum(phi, np.where(omega, np.exp(alpha * (-psi.slices + consts.Lam)), 0.0))
    return CheckRecord("exp_bound", lhs, rhs, 1e-6 * max(rhs, 1e-300), {"s": s, "alpha": alpha, "lambda": lam_exp}, scenario)


# ---------------------------------------------------------------- iteration inequality


def delta0_printed(n: int, p: float) -> float:
    return 1.0 + (p - n - 1) / (p * (n + 1))


def delta0_holder(n: int, p: float) -> float:
    """The exponent gain the Holder step actually delivers."""
    return (p - n - 1) / (p * (n + 1))


def check_iteration(phi: SpaceTimeField, F: ScalarField, s_grid, r_fracs=(0.25, 0.5, 1.0), delta0: float = 1.25, p: float = 4.0, scenario: str = "") -> dict:
    """Lower half ``r phi(s+r) <= A_s`` on every ``(s, r)`` and the minimal ``B0`` of the upper half."""
    n = phi.grid.n
    enF = np.exp(n * F.values)
    neg = -phi.slices
    spread = float(neg.max())
    rows = []
    worst_lower = -math.inf
    b0_min = 0.0
    b0_holder = 0.0
    q = (n + 2) * p / (n + 1)
    for s in s_grid:
        exc = neg - s
        A_s = _st_sum(phi, np.maximum(exc, 0.0) * enF)
        mass = _st_sum(phi, (exc > 0) * enF)
        if mass > 0:
            b0_min = max(b0_min, A_s / mass ** (1 + delta0))
            J = _st_sum(phi, np.maximum(exc, 0.0) ** q * enF)
            C_E = J / A_s ** (p / (n + 1))
            b0_holder = max(b0_holder, C_E ** (1 / p))
        for fr in r_fracs:
            r = fr * spread
            if r <= 0:
                continue
            mass_r = _st_sum(phi, (exc > r) * enF)
            slack = A_s - r * mass_r
            worst_lower = max(worst_lower, -slack)
            rows.append({"s": float(s), "r": float(r), "lower_lhs": r * mass_r, "A_s": A_s, "phi_s": mass})
    return _clean(
        {
            "check": "iteration",
            "scenario": scenario,
            "delta0": delta0,
            "delta0_holder": delta0_holder(n, p),
            "lower_worst_violation": worst_lower if rows else 0.0,
            "lower_pass": (worst_lower if rows else 0.0) <= 1e-12,
            "B0_min": b0_min,
            "B0_holder": b0_holder,
            "rows": rows,
        }
    )


# ---------------------------------------------------------------- De Giorgi lemma


@dataclass(frozen=True)
class DeGiorgiInput:
    s: np.ndarray
    Phi: np.ndarray
    B0: float
    delta0: float
    r_max: float = math.inf
    E: float | None = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        P = np.asarray(self.Phi, dtype=float)
        if s.ndim != 1 or s.shape != P.shape or s.size < 2:
            raise ValueError("samples must be matching 1-d arrays")
        if np.any(np.diff(s) <= 0):
            raise ValueError("levels must be strictly increasing")
        if np.any(np.diff(P) > 0) or np.any(P < 0):
            raise ValueError("Phi must be non-negative and non-increasing")
        if P[-1] != 0:
            raise ValueError("last sample must have Phi = 0")
        if not (self.B0 > 0 and self.delta0 > 0 and self.r_max > 0):
            raise ValueError("B0, delta0 and r_max must be positive")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "Phi", P)


@dataclass
class DeGiorgiResult:
    ok: bool
    s0: float | None = None
    levels: list = field(default_factory=list)
    S_inf: float | None = None
    bound: float | None = None
    Phi_at_S_inf: float | None = None
    violation: tuple | None = None

    def as_dict(self):
        return _clean(asdict(self))


def degiorgi_violation(inp: DeGiorgiInput):
    """First ``(s, r)`` breaking ``r Phi(s + r) <= B0 Phi(s)^{1 + delta0}``.

    Samples are read as a right-continuous step function, so the worst ``r``
    for a pair of samples ``s_i <= s_j`` is ``s_{j+1} - s_i``.
    """
    s, P = inp.s, inp.Phi
    rhs = inp.B0 * P ** (1 + inp.delta0)
    right = np.append(s[1:], s[-1])
    r = right[None, :] - s[:, None]
    lhs = np.minimum(r, inp.r_max) * P[None, :]
    bad = np.triu(lhs > rhs[:, None] * (1 + 1e-12) + 1e-300)
    if not bad.any():
        return None
    i, j = np.argwhere(bad)[0]
    return float(s[i]), float(min(r[i, j], inp.r_max))


def minimal_B0(s, Phi, delta0: float, r_max: float = math.inf) -> float:
    s = np.asarray(s, dtype=float)
    P = np.asarray(Phi, dtype=float)
    right = np.append(s[1:], s[-1])
    r = np.minimum(right[None, :] - s[:, None], r_max)
    lhs = np.triu(r * P[None, :])
    base = P ** (1 + delta0)
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(base[:, None] > 0, lhs / base[:, None], np.where(lhs > 0, np.inf, 0.0))
    return float(need.max())


def degiorgi_s_infinity(inp: DeGiorgiInput) -> DeGiorgiResult:
    viol = degiorgi_violation(inp)
    if viol is not None:
        return DeGiorgiResult(False, violation=viol)
    s, P = inp.s, inp.Phi
    thresh = (1.0 / (2 * inp.B0)) ** (1 / inp.delta0)
    if inp.E is not None:
        s0 = max(float(s[0]), (2 * inp.B0) ** (1 / inp.delta0) * inp.E)
        i0 = int(np.searchsorted(s, s0, side="left"))
    else:
        below = np.nonzero(P < thresh)[0]
        i0 = int(below[0])
    i0 = min(i0, s.size - 1)
    levels = [i0]
    while P[levels[-1]] > 0:
        j = levels[-1]
        nxt = np.nonzero(P[j + 1 :] <= 0.5 * P[j])[0]
        levels.append(j + 1 + int(nxt[0]))
    S_inf = float(s[levels[-1]])
    spacing = float(np.max(np.diff(s)))
    bound = float(s[i0]) + 1.0 / (1.0 - 2.0 ** (-inp.delta0)) + spacing
    return DeGiorgiResult(True, float(s[i0]), [float(s[i]) for i in levels], S_inf, bound, float(P[levels[-1]]))


def degiorgi_scan_oracle(s, Phi, B0: float, delta0: float) -> list:
    """Plain sequential scan producing the same level sequence."""
    thresh = (1.0 / (2 * B0)) ** (1 / delta0)
    i = 0
    while Phi[i] >= thresh:
        i += 1
    out = [float(s[i])]
    while Phi[i] > 0:
        half = Phi[i] / 2
        i += 1
        while Phi[i] > half:
            i += 1
        out.append(float(s[i]))
    return out


# ---------------------------------------------------------------- Young inequality


def young_constant(p: float) -> float:
    """``sup_{x>=0} x^p e^{-2x} e^2 + 1``."""
    return (p / 2) ** p * math.exp(-p) * math.e**2 + 1.0


def young_constant_sharp(p: float) -> float:
    """Smallest ``C`` with ``v^p a <= a |log a|^p + C e^{2v}`` for ``v >= 0, a > 0``.

    With ``a = e^y`` the worst case is ``y = v`` shifted; maximizing
    ``(v^p - |y|^p) e^{y - 2v}`` over ``y <= v`` gives a one-variable problem in ``v``.
    """
    from scipy.optimize import minimize_scalar

    def worst(v):
        if v <= 0:
            return 0.0
        res = minimize_scalar(lambda y: -(v**p - abs(y) ** p) * math.exp(y - 2 * v), bounds=(0.0, v), method="bounded", options={"xatol": 1e-12})
        return -res.fun

    res = minimize_scalar(lambda v: -worst(v), bounds=(0.0, 10 * p), method="bounded", options={"xatol": 1e-10})
    return max(0.0, -res.fun)


def check_young(v: np.ndarray, win: SpaceTimeField, F: ScalarField, omega: np.ndarray, p: float, C_p: float | None = None, scenario: str = "") -> CheckRecord:
    """``int_Omega v^p e^{nF} <= ||e^{nF}||_{L^1 (log L)^p} + C_p int_Omega e^{2v}`` over the window."""
    n = F.grid.n
    if np.any(v[omega] < 0):
        raise ValueError("v must be non-negative on the level set")
    C_p = young_constant(p) if C_p is None else C_p
    enF = np.exp(n * F.values)
    length = float(win.times[-1] - win.times[0])
    lhs = _st_sum(win, np.where(omega, np.maximum(v, 0.0) ** p, 0.0) * enF)
    orlicz = float(np.sum(enF * (n * np.abs(F.values)) ** p) * F.grid.cell_volume) * length
    rhs = orlicz + C_p * _st_sum(win, np.where(omega, np.exp(2 * v), 0.0))
    return CheckRecord("young", lhs, rhs, 1e-12 * max(1.0, rhs), {"p": p, "C_p": C_p, "orlicz": orlicz}, scenario)


# ---------------------------------------------------------------- weighted test function


@dataclass(frozen=True)
class KeyConstants41:
    n: int
    p: float
    beta: float
    eps: float
    Lam: float
    C5: float
    Psi: float
    alpha: float
    b: float
    r_inj: float
    residuals: tuple

    def theta(self, M_val: float) -> float:
        r = self.r_inj
        return min(r * r * self.beta * self.Lam ** (self.beta - 1) / (100 * M_val ** (1 / self.b)), r * r / (100 * self.n))

    def as_dict(self):
        return _clean(asdict(self))


TORUS_INJECTIVITY = 0.5


def beta41(n: int, p: float, N_cap: float = 10.0, rule: str = "capped") -> float:
    """``(1 - beta)(n + 1) = p`` for ``p < n + 1``; otherwise ``(n + 1)(1 - 1/N_cap)`` ("capped")
    or ``p (1 - 1/N_cap)`` ("literal")."""
    if p < n + 1:
        val = p
    elif rule == "capped":
        val = (n + 1) * (1 - 1 / N_cap)
    elif rule == "literal":
        val = p * (1 - 1 / N_cap)
    else:
        raise ValueError(f"unknown beta rule {rule!r}")
    return 1.0 - val / (n + 1)


class InfeasibleConstants(ValueError):
    pass


def constants41(n: int, p: float, Psi: float, alpha: float, N_cap: float = 10.0, rule: str = "capped") -> KeyConstants41:
    """``beta eps Lambda^{beta-1} = 1/4`` and ``Lambda = C5 Psi^{1/((n+1)(1-beta))}``.

    ``C5`` makes ``Psi^{1/p} (beta eps)^{-(n+1)/p} = alpha / 2``, so that the
    weight bound on the positive set turns into ``|F| <= alpha/2 (...)``.
    """
    beta = beta41(n, p, N_cap, rule)
    if not 0 < beta < 1:
        raise InfeasibleConstants(f"beta = {beta:g} is outside (0, 1) for n={n}, p={p:g}")
    if not (Psi > 0 and alpha > 0):
        raise ValueError("Psi and alpha must be positive")
    be = (2 / alpha) ** (p / (n + 1)) * Psi ** (1 / (n + 1))
    Lam = (4 * be) ** (1 / (1 - beta))
    eps = be / beta
    C5 = 4 ** (1 / (1 - beta)) * (2 / alpha) ** (p / ((n + 1) * (1 - beta)))
    r1 = beta * eps * Lam ** (beta - 1) / 0.25 - 1
    r2 = Lam / (C5 * Psi ** (1 / ((n + 1) * (1 - beta)))) - 1
    r3 = Psi ** (1 / p) * (beta * eps) ** (-(n + 1) / p) / (alpha / 2) - 1
    b = 1 + 1 / (2 * n + 2)
    return KeyConstants41(n, p, beta, eps, Lam, C5, Psi, alpha, b, min(1.0, TORUS_INJECTIVITY), (r1, r2, r3))


def h_smooth(rho, s: float):
    """``rho + sqrt(rho^2 + s)``; tends to ``2 rho_+`` as ``s -> 0``."""
    rho = np.asarray(rho, dtype=float)
    r = np.sqrt(rho * rho + s)
    out = np.where(rho >= 0, rho + r, s / (r - np.minimum(rho, 0.0)))
    return out if out.ndim else float(out)


def check_lemma41(psi: SpaceTimeField, phi: SpaceTimeField, consts: KeyConstants41, C_target: float = 10.0, scenario: str = "") -> CheckRecord:
    _same_window(psi, phi)
    rho = -consts.eps * (-psi.slices + consts.Lam) ** consts.beta - phi.slices
    rho_max = float(rho.max())
    limit = (2 * np.maximum(rho, 0.0)) ** consts.b
    gaps = {}
    for s in (1e-2, 1e-4):
        gaps[f"{s:g}"] = float(np.max(np.abs(h_smooth(rho, s) ** consts.b - limit)))
    return CheckRecord(
        "lemma41",
        rho_max,
        C_target,
        0.0,
        {"t0": float(phi.times[0]), "beta": consts.beta, "eps": consts.eps, "Lambda": consts.Lam, "C5": consts.C5, "Psi": consts.Psi, "alpha": consts.alpha, "h_gap": gaps, "h_converges": gaps["0.0001"] < gaps["0.01"]},
        scenario,
    )


# ---------------------------------------------------------------- cut-off function

CUTOFF_GRAD_NOMINAL = 10.0
CUTOFF_HESS_NOMINAL = 10.0
CUTOFF_GRAD_BOUND = 16.0
CUTOFF_HESS_BOUND = 32.0


def smoothstep5(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10 - 15 * u + 6 * u * u)


@dataclass(frozen=True, eq=False)
class Cutoff:
    eta: ScalarField
    theta: float
    r: float
    grad_const: float  # r^2 max |d eta|^2_{omega_0} / theta^2
    hess_const: float  # r^2 max |ddbar eta| / theta
    eta_min: float
    eta_max: float

    def bounds_ok(self, grad_bound: float = CUTOFF_GRAD_BOUND, hess_bound: float = CUTOFF_HESS_BOUND) -> bool:
        return self.grad_const <= grad_bound and self.hess_const <= hess_bound and self.eta_min >= 0.9 and self.eta_max <= 1.0 + 1e-12


class CutoffResolutionError(ValueError):
    pass


def build_cutoff(grid, x0, theta: float, r: float = TORUS_INJECTIVITY) -> Cutoff:
    """``eta = 1`` on ``B(x0, r/2)``, ``1 - theta`` outside ``B(x0, 3r/4)``, quintic radial ramp.

    Gradient and complex Hessian are measured in the flat Kahler metric
    (``|d eta|^2 = |grad eta|^2 / 4``).
    """
    if not 0 < theta <= 0.1:
        raise ValueError("theta must lie in (0, 0.1]")
    if grid.N * r / 4 < 4:
        raise CutoffResolutionError(f"N={grid.N} resolves the ramp of width {r / 4:g} with fewer than 4 points")
    d = torus.torus_distance(grid, x0)
    eta = 1.0 - theta * smoothstep5((d - r / 2) / (r / 4))
    field_ = ScalarField(grid, eta)
    grad2 = sum(torus.real_derivative(field_, (a,)) ** 2 for a in range(grid.ndim_real)) * torus.DDBAR_FACTOR
    hess = torus.hermitian_eigvals(torus.ddbar_matrix(field_))
    return Cutoff(field_, theta, r, float(grad2.max()) * r * r / theta**2, float(np.abs(hess).max()) * r * r / theta, float(eta.min()), float(eta.max()))


# ---------------------------------------------------------------- parabolic ABP


@dataclass(frozen=True)
class Patch:
    """``u[t, x_1, ..., x_m]`` on a rectangular patch with uniform spacings."""

    u: np.ndarray
    dx: float
    dt: float
    diam: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim < 2 or min(u.shape) < 4:
            raise ValueError("patch too small: need at least 4 points per axis")
        object.__setattr__(self, "u", u)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != u.shape[1:]:
                raise ValueError("mask must match the spatial shape")
            object.__setattr__(self, "mask", m)

    @property
    def m(self) -> int:
        return self.u.ndim - 1

    def save(self, path):
        extra = {} if self.mask is None else {"mask": self.mask}
        np.savez(path, u=self.u, dx=self.dx, dt=self.dt, diam=self.diam, **extra)

    @classmethod
    def load(cls, path) -> "Patch":
        with np.load(path) as z:
            mask = z["mask"] if "mask" in z.files else None
            return cls(z["u"], float(z["dx"]), float(z["dt"]), float(z["diam"]), mask)


def unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def abp_constant(m: int) -> float:
    """Frozen dimensional constant ``2^m |B_1|^{-1/(m+1)}``."""
    return 2.0**m * unit_ball_volume(m) ** (-1.0 / (m + 1))


def quadratic_patch(m: int = 2, points: int = 33, T: float = 1.0) -> Patch:
    """``u = t (1 - |x|^2)`` on the unit ball inside ``[-1, 1]^m``."""
    x = np.linspace(-1.0, 1.0, points)
    t = np.linspace(0.0, T, points)
    grids = np.meshgrid(*([x] * m), indexing="ij")
    r2 = sum(g * g for g in grids)
    u = t.reshape((-1,) + (1,) * m) * (1 - r2)[None]
    return Patch(u, float(x[1] - x[0]), float(t[1] - t[0]), 2.0, r2 <= 1.0 + 1e-12)


@dataclass(frozen=True)
class ABPResult:
    lhs: float
    integral: float
    rhs_no_const: float
    C_dim: float
    contact_fraction: float

    @property
    def rhs(self) -> float:
        return self.C_dim * self.rhs_no_const

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs_no_const if self.rhs_no_const > 0 else math.inf

    def record(self, scenario: str = "") -> CheckRecord:
        return CheckRecord("abp", self.lhs, self.rhs, 1e-12, {"integral": self.integral, "C_dim": self.C_dim, "contact_fraction": self.contact_fraction, "ratio": self.ratio}, scenario)


def _interior(mask: np.ndarray) -> np.ndarray:
    inner = mask.copy()
    for ax in range(mask.ndim):
        for sh in (1, -1):
            inner &= np.roll(mask, sh, axis=ax)
        edge = [slice(None)] * mask.ndim
        edge[ax] = 0
        inner[tuple(edge)] = False
        edge[ax] = -1
        inner[tuple(edge)] = False
    return inner


def abp_check(patch: Patch, C_dim: float | None = None) -> ABPResult:
    """Both sides of the parabolic ABP bound on the upper contact set
    ``{u_t >= 0, D^2_x u <= 0}`` with second-order finite differences."""
    u = patch.u
    m = patch.m
    C_dim = abp_constant(m) if C_dim is None else C_dim
    mask = np.ones(u.shape[1:], dtype=bool) if patch.mask is None else patch.mask
    inner = _interior(mask)
    ut = np.gradient(u, patch.dt, axis=0, edge_order=2)
    first = [np.gradient(u, patch.dx, axis=1 + a, edge_order=2) for a in range(m)]
    hess = np.empty(u.shape + (m, m))
    for a in range(m):
        for b in range(m):
            hess[..., a, b] = np.gradient(first[a], patch.dx, axis=1 + b, edge_order=2)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    eig = np.linalg.eigvalsh(hess)
    contact = (ut >= 0) & np.all(eig <= 1e-12, axis=-1) & mask[None]
    integrand = np.where(contact, np.abs(ut * np.prod(eig, axis=-1)), 0.0)
    tw = np.full(u.shape[0], patch.dt)
    tw[0] = tw[-1] = patch.dt / 2
    integral = float(np.tensordot(tw, integrand, axes=(0, 0)).sum() * patch.dx**m)
    boundary_vals = np.concatenate([u[0][mask], u[1:][:, mask & ~inner].ravel()])
    lhs = float(u[:, mask].max() - boundary_vals.max())
    rhs0 = patch.diam ** (m / (m + 1)) * integral ** (1 / (m + 1))
    return ABPResult(lhs, integral, rhs0, C_dim, float(contact.sum() / (u.shape[0] * mask.sum())))


# ---------------------------------------------------------------- general operators


def h_min_formula(n: int, r: float, C3: float) -> float:
    return -(r * (n + 1) / n) * math.exp((n * C3 - r) / (r * (n + 1)))


def h_min_oracle(n: int, r: float, C3: float) -> float:
    """Minimum of ``(x - r - C3) exp(n x / (r (n+1)))`` from its critical point."""
    from scipy.optimize import brentq

    k = n / (r * (n + 1))
    x = brentq(lambda x: 1 + k * (x - r - C3), -1e3, 1e3, xtol=1e-15)
    return (x - r - C3) * math.exp(k * x)


def A_max_formula(a: float, l: float) -> float:
    return a**a / ((a + 1) ** (a + 1) * l**a)


def A_argmax(a: float, l: float) -> float:
    return (a / (l * (a + 1))) ** a


def A_max_oracle(a: float, l: float) -> float:
    """``max_y y - l y^{1+1/a}`` located by bracketing the derivative."""
    from scipy.optimize import brentq

    def dA(y):
        return 1 - l * (1 + 1 / a) * y ** (1 / a)

    hi = 1.0
    while dA(hi) > 0:
        hi *= 2
    y = brentq(dA, 0.0, hi, xtol=1e-15, rtol=1e-15)
    return y - l * y ** (1 + 1 / a)


def C7_constant(n: int, gamma: float) -> float:
    return (n + 1) * gamma ** (1 / (n + 1))


def check_generalized_chain(phi: ScalarField, phidot: np.ndarray, op: OperatorSpec, psi: ScalarField, psidot: np.ndarray, weight: np.ndarray, F: ScalarField) -> dict:
    """Point-wise chain ``-psi' + tr_G h_psi >= (n+1)(f e^{nF} det G)^{1/(n+1)}
    >= C7 f^{1/(n+1)} (e^{rF}/F)^{n/(r(n+1))} = C7 f^{1/(n+1)} e^{-n phi'/(r(n+1))}``
    (the last equality for the log profile).  Returns the worst slack of each link.
    """
    n = phi.grid.n
    r = op.degree
    hess_phi = torus.complex_hessian(phi)
    G, struct_min = linearization_coeffs(op, hess_phi)
    hpsi = torus.complex_hessian(psi).matrices
    trG = np.real(np.trace(G @ hpsi, axis1=-2, axis2=-1))
    lhs = -psidot + trG
    detG = np.real(torus.hermitian_det(G))
    enF = np.exp(n * F.values)
    link1 = (n + 1) * np.maximum(weight * enF * detG, 0.0) ** (1 / (n + 1))
    Fv = elementary_symmetric(hess_phi.eigenvalues)[..., op.k]
    C7 = C7_constant(n, op.gamma)
    link2 = C7 * weight ** (1 / (n + 1)) * (np.exp(r * F.values) / Fv) ** (n / (r * (n + 1)))
    link3 = C7 * weight ** (1 / (n + 1)) * np.exp(-n * phidot / (r * (n + 1)))
    scale = max(1.0, float(np.abs(lhs).max()))
    return _clean(
        {
            "structure_min": struct_min,
            "gamma": op.gamma,
            "amgm_slack": float((lhs - link1).min()) / scale,
            "det_slack": float((link1 - link2).min()) / scale,
            "log_identity_gap": float(np.abs(link2 - link3).max()) / scale,
            "C7": C7,
        }
    )

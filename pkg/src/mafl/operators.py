"""Monotone profiles Theta and Hessian operators F(lambda).

Eigenvalue vectors live on the last axis, so every function here works
point-wise on whole grids as well as on single vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from mafl.torus import hermitian_det, hermitian_eigvals

THETA_KINDS = ("log", "neg_inverse", "linear", "cube_root", "power")
OPERATOR_KINDS = ("monge_ampere", "sigma_k")


class ProfileDomainError(ValueError):
    """Theta evaluated at a non-positive argument."""


class ConeError(ValueError):
    """Eigenvalues left the admissible cone of the operator."""


@dataclass(frozen=True)
class ThetaProfile:
    kind: str = "log"
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in THETA_KINDS:
            raise ValueError(f"unknown Theta kind {self.kind!r}")
        if self.kind == "power" and not self.a > 0:
            raise ValueError("power profile needs a > 0")

    @property
    def label(self) -> str:
        return f"power({self.a:g})" if self.kind == "power" else self.kind


def _positive(y):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise ProfileDomainError("Theta needs y > 0 (metric positivity lost upstream)")
    return y


def theta_eval(profile: ThetaProfile, y):
    y = _positive(y)
    k = profile.kind
    if k == "log":
        out = np.log(y)
    elif k == "neg_inverse":
        out = -1.0 / y
    elif k == "linear":
        out = y.copy()
    elif k == "cube_root":
        out = np.cbrt(y)
    else:
        out = y**profile.a
    return out if out.ndim else float(out)


def theta_prime(profile: ThetaProfile, y):
    y = _positive(y)
    k = profile.kind
    if k == "log":
        out = 1.0 / y
    elif k == "neg_inverse":
        out = 1.0 / y**2
    elif k == "linear":
        out = np.ones_like(y)
    elif k == "cube_root":
        out = np.cbrt(y) / (3.0 * y)
    else:
        out = profile.a * y ** (profile.a - 1.0)
    return out if out.ndim else float(out)


def elementary_symmetric(lam) -> np.ndarray:
    """``sigma_0 .. sigma_n`` of the last axis, stacked on the last axis."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    sig = [np.ones(lam.shape[:-1])] + [np.zeros(lam.shape[:-1]) for _ in range(n)]
    for i in range(n):
        x = lam[..., i]
        for j in range(i + 1, 0, -1):
            sig[j] = sig[j] + x * sig[j - 1]
    return np.stack(sig, axis=-1)


def cone_mask(lam, k: int) -> np.ndarray:
    """Point-wise membership in Gamma_k: ``sigma_j > 0`` for ``1 <= j <= k``."""
    sig = elementary_symmetric(lam)
    return np.all(sig[..., 1 : k + 1] > 0, axis=-1)


def cone_check(lam, k: int) -> bool:
    return bool(np.all(cone_mask(lam, k)))


@dataclass(frozen=True)
class OperatorSpec:
    """``monge_ampere`` is ``prod(lambda)`` (degree n); ``sigma_k`` is ``sigma_k`` (degree k)."""

    kind: str
    n: int
    k: int | None = None
    gamma: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "monge_ampere":
            object.__setattr__(self, "k", self.n)
        elif self.k is None or not 1 <= self.k <= self.n:
            raise ValueError(f"sigma_k needs 1 <= k <= n, got k={self.k}")
        if self.gamma is None:
            object.__setattr__(self, "gamma", default_gamma(self))

    @property
    def degree(self) -> int:
        return self.k

    @property
    def cone_index(self) -> int:
        return self.n if self.kind == "monge_ampere" else self.k

    @property
    def label(self) -> str:
        return "MA" if self.kind == "monge_ampere" else f"sigma_{self.k}"


def F_eval(op: OperatorSpec, lam, check: bool = True):
    lam = np.asarray(lam, dtype=float)
    if check and not cone_check(lam, op.cone_index):
        raise ConeError(f"eigenvalues outside Gamma_{op.cone_index}")
    out = elementary_symmetric(lam)[..., op.k]
    return out if out.ndim else float(out)


def F_grad(op: OperatorSpec, lam, check: bool = True) -> np.ndarray:
    """``dF/dlambda_j = sigma_{k-1}(lambda without lambda_j)``."""
    lam = np.asarray(lam, dtype=float)
    if check and not cone_check(lam, op.cone_index):
        raise ConeError(f"eigenvalues outside Gamma_{op.cone_index}")
    n = lam.shape[-1]
    if op.k == 1:
        return np.ones_like(lam)
    if n == 2:
        return lam[..., ::-1].copy()
    cols = []
    for j in range(n):
        rest = np.delete(lam, j, axis=-1)
        cols.append(elementary_symmetric(rest)[..., op.k - 1])
    return np.stack(cols, axis=-1)


def structural_ratio(op: OperatorSpec, lam) -> np.ndarray:
    """``prod_j dF/dlambda_j / F^{n(1 - 1/r)}``; condition (4) asks this to be >= gamma."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    r = op.degree
    return np.prod(F_grad(op, lam, check=False), axis=-1) / F_eval(op, lam, check=False) ** (n * (1 - 1 / r))


def sample_cone(n: int, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random points of Gamma_k by rejection from a box around the positive orthant."""
    out = []
    while sum(len(o) for o in out) < size:
        lam = rng.uniform(-1.0, 4.0, size=(4 * size, n)) * rng.uniform(0.1, 3.0, size=(4 * size, 1))
        out.append(lam[cone_mask(lam, k)])
    return np.concatenate(out)[:size]


def default_gamma(op: OperatorSpec) -> float:
    if op.kind == "monge_ampere":
        # prod dF/dlambda_j = F^{n-1} identically, so condition (4) is an equality
        return 1.0
    probe = OperatorSpec(op.kind, op.n, op.k, gamma=1.0)
    lam = sample_cone(op.n, op.k, 2000, np.random.default_rng(0))
    return 0.5 * float(np.min(structural_ratio(probe, lam)))


def sigma_matrix_derivative(mat: np.ndarray, k: int) -> np.ndarray:
    """``d sigma_k(h) / dh = sum_j (-1)^j sigma_{k-1-j}(h) h^j`` for Hermitian ``h``."""
    n = mat.shape[-1]
    lam = hermitian_eigvals(mat)
    sig = elementary_symmetric(lam)
    eye = np.broadcast_to(np.eye(n, dtype=complex), mat.shape)
    power = eye.copy()
    out = np.zeros_like(mat, dtype=complex)
    for j in range(k):
        out = out + ((-1) ** j) * sig[..., k - 1 - j][..., None, None] * power
        power = power @ mat
    return out


def linearization_coeffs(op: OperatorSpec, hess) -> tuple[np.ndarray, float]:
    """``G = (1/F) dF/dh`` per point and ``min(det G * F^{n/r})``.

    The second value must stay above ``gamma`` (condition (4) rewritten on G).
    """
    lam = hess.eigenvalues
    if not cone_check(lam, op.cone_index):
        raise ConeError(f"eigenvalues outside Gamma_{op.cone_index}")
    Fv = F_eval(op, lam, check=False)
    G = sigma_matrix_derivative(hess.matrices, op.k) / Fv[..., None, None]
    n = lam.shape[-1]
    detG = hermitian_det(G)
    return G, float(np.min(detG * Fv ** (n / op.degree)))


def mixed_density(lam, j: int) -> np.ndarray:
    """Point-wise density of ``omega_0^{n-j} ^ omega_phi^j / omega_0^n``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    return elementary_symmetric(lam)[..., j] / comb(n, j)

"""Flat complex torus discretization.

The torus is ``C^n / Z^{2n}`` with side length 1 along each of the ``2n``
real axes, ordered ``(x_1, y_1, ..., x_n, y_n)`` so that
``z_j = x_j + i y_j``.  The background Kahler metric is the flat one with
``g_{j kbar} = delta_{jk}``; with this convention

    d_j dbar_k = 1/4 [(dx_j dx_k + dy_j dy_k) + i (dx_j dy_k - dy_j dx_k)]

and the complex Laplacian ``tr(ddbar)`` is a quarter of the real one.

All derivatives are exact derivatives of the trigonometric interpolant with
the Nyquist mode discarded, so every symbol is consistent (Hermitian, mixed
partials commute, null Lagrangians integrate to zero on the grid).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

#: d dbar = DDBAR_FACTOR * (real second derivatives) on the flat torus.
DDBAR_FACTOR = 0.25

#: Modes with max |k_a| above ``N * HIGH_FREQ_CUTOFF`` count as high frequency.
HIGH_FREQ_CUTOFF = 1.0 / 3.0


class GridError(ValueError):
    """Invalid grid parameters or mismatched grids."""


class FieldError(ValueError):
    """Non-finite or mis-shaped field values."""


@dataclass(frozen=True)
class TorusGrid:
    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise GridError(f"unsupported dimension n={self.n} (expected 1 or 2)")
        if self.N < 8 or self.N & (self.N - 1):
            raise GridError(f"N={self.N} must be a power of two >= 8")

    @property
    def ndim_real(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.ndim_real

    @property
    def npoints(self) -> int:
        return self.N**self.ndim_real

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.ndim_real

    @property
    def volume(self) -> float:
        return self.cell_volume * self.npoints

    def axis(self) -> np.ndarray:
        return np.arange(self.N) * self.h

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per real axis."""
        return list(np.meshgrid(*([self.axis()] * self.ndim_real), indexing="ij", sparse=True))

    def wavenumbers(self) -> list[np.ndarray]:
        """Integer wavenumbers in ``rfftn`` layout, broadcastable."""
        full = np.fft.fftfreq(self.N, d=1.0 / self.N)
        half = np.fft.rfftfreq(self.N, d=1.0 / self.N)
        ks = []
        for a in range(self.ndim_real):
            k = half if a == self.ndim_real - 1 else full
            shp = [1] * self.ndim_real
            shp[a] = k.size
            ks.append(k.reshape(shp))
        return ks

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    def constant(self, c: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(c)))

    def field(self, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` on the grid."""
        vals = np.broadcast_to(np.asarray(fn(*self.coords()), dtype=float), self.shape)
        return ScalarField(self, np.array(vals))


def make_grid(n: int, N: int) -> TorusGrid:
    return TorusGrid(int(n), int(N))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise FieldError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise FieldError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def sup(self) -> float:
        return float(self.values.max())

    def inf(self) -> float:
        return float(self.values.min())


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """A stack of time slices on one grid; ``slices[i]`` lives at ``times[i]``."""

    grid: TorusGrid
    times: np.ndarray
    slices: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        slices = np.asarray(self.slices, dtype=float)
        if times.ndim != 1 or slices.shape != (times.size, *self.grid.shape):
            raise FieldError("slice count must equal time count and match the grid")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise FieldError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "slices", slices)

    def __len__(self):
        return self.times.size

    def slice(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.slices[i])

    def window(self, t0: float, t1: float, atol: float = 1e-9) -> "SpaceTimeField":
        sel = (self.times >= t0 - atol) & (self.times <= t1 + atol)
        if sel.sum() < 1:
            raise FieldError(f"window [{t0}, {t1}] has no stored slices")
        return SpaceTimeField(self.grid, self.times[sel], self.slices[sel])

    def time_weights(self) -> np.ndarray:
        """Trapezoid weights in time (a single slice gets weight 0)."""
        t = self.times
        w = np.zeros_like(t)
        if t.size > 1:
            dt = np.diff(t)
            w[:-1] += dt / 2
            w[1:] += dt / 2
        return w


@dataclass(frozen=True, eq=False)
class HermitianHessianField:
    """Per-point ``I + ddbar(phi)`` and its ascending eigenvalues."""

    grid: TorusGrid
    matrices: np.ndarray  # (*shape, n, n) complex
    eigenvalues: np.ndarray  # (*shape, n) real

    def det(self) -> np.ndarray:
        return hermitian_det(self.matrices)

    def trace(self) -> np.ndarray:
        return np.real(np.trace(self.matrices, axis1=-2, axis2=-1))


def _check(f: ScalarField) -> None:
    if not np.all(np.isfinite(f.values)):
        raise FieldError("field contains non-finite values")


@functools.lru_cache(maxsize=None)
def _symbols(grid: TorusGrid) -> tuple[np.ndarray, ...]:
    """First-derivative symbols ``2 pi i k`` with the Nyquist mode zeroed."""
    out = []
    for k in grid.wavenumbers():
        s = 2j * np.pi * k
        s = np.where(np.abs(k) == grid.N // 2, 0.0, s)
        out.append(s)
    return tuple(out)


def _fft(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    return sfft.rfftn(values, axes=tuple(range(grid.ndim_real)))


def _ifft(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    return sfft.irfftn(coeffs, s=grid.shape, axes=tuple(range(grid.ndim_real)))


def real_derivative(f: ScalarField, axes: tuple[int, ...]) -> np.ndarray:
    """Spectral derivative of ``f`` along the given real axes (repeats allowed)."""
    grid = f.grid
    sym = _symbols(grid)
    coeff = _fft(grid, f.values)
    for a in axes:
        coeff = coeff * sym[a]
    return _ifft(grid, coeff)


def _ddbar_coeffs(grid: TorusGrid, phat: np.ndarray):
    """Fourier coefficients of the real and imaginary parts of ``d_j dbar_k``."""
    sym = _symbols(grid)
    n = grid.n
    re, im = {}, {}
    for j in range(n):
        xj, yj = sym[2 * j], sym[2 * j + 1]
        for k in range(j, n):
            xk, yk = sym[2 * k], sym[2 * k + 1]
            re[j, k] = DDBAR_FACTOR * (xj * xk + yj * yk) * phat
            if k != j:
                im[j, k] = DDBAR_FACTOR * (xj * yk - yj * xk) * phat
    return re, im


def ddbar_matrix(f: ScalarField) -> np.ndarray:
    """Per-point ``ddbar f`` as an ``(n, n)`` Hermitian matrix (no identity)."""
    _check(f)
    grid = f.grid
    n = grid.n
    re, im = _ddbar_coeffs(grid, _fft(grid, f.values))
    mat = np.zeros(grid.shape + (n, n), dtype=complex)
    for (j, k), c in re.items():
        part = _ifft(grid, c)
        mat[..., j, k] += part
        if k != j:
            mat[..., k, j] += part
    for (j, k), c in im.items():
        part = _ifft(grid, c)
        mat[..., j, k] += 1j * part
        mat[..., k, j] -= 1j * part
    return mat


def hermitian_eigvals(mat: np.ndarray) -> np.ndarray:
    """Closed-form ascending eigenvalues of 1x1 or 2x2 Hermitian matrices."""
    n = mat.shape[-1]
    if n == 1:
        return np.real(mat[..., 0, :])
    a = np.real(mat[..., 0, 0])
    d = np.real(mat[..., 1, 1])
    c2 = np.abs(mat[..., 0, 1]) ** 2
    mid = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + c2)
    return np.stack([mid - rad, mid + rad], axis=-1)


def hermitian_det(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[-1]
    if n == 1:
        return np.real(mat[..., 0, 0])
    return np.real(mat[..., 0, 0]) * np.real(mat[..., 1, 1]) - np.abs(mat[..., 0, 1]) ** 2


@functools.lru_cache(maxsize=None)
def _lap_symbol(grid: TorusGrid) -> np.ndarray:
    return DDBAR_FACTOR * np.real(sum(s * s for s in _symbols(grid)))


def hessian_eigenvalues(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of ``I + ddbar phi`` without forming the matrices."""
    phat = _fft(grid, values)
    if grid.n == 1:
        return (1.0 + _ifft(grid, _lap_symbol(grid) * phat))[..., None]
    re, im = _ddbar_coeffs(grid, phat)
    a = 1.0 + _ifft(grid, re[0, 0])
    d = 1.0 + _ifft(grid, re[1, 1])
    c2 = _ifft(grid, re[0, 1]) ** 2 + _ifft(grid, im[0, 1]) ** 2
    mid = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + c2)
    return np.stack([mid - rad, mid + rad], axis=-1)


def complex_hessian(phi: ScalarField) -> HermitianHessianField:
    mat = ddbar_matrix(phi)
    idx = np.arange(phi.grid.n)
    mat[..., idx, idx] += 1.0
    return HermitianHessianField(phi.grid, mat, hermitian_eigvals(mat))


def laplacian(f: ScalarField) -> np.ndarray:
    """Complex Laplacian ``tr_{omega_0} ddbar f`` (a quarter of the real one)."""
    grid = f.grid
    return _ifft(grid, _lap_symbol(grid) * _fft(grid, f.values))


def integrate(f, w=None) -> float:
    """Grid quadrature ``sum f w dV``; accepts fields or raw arrays on the grid of ``f``."""
    grid = f.grid
    vals = f.values
    if w is not None:
        if isinstance(w, ScalarField):
            if w.grid != grid:
                raise GridError("integrand and weight live on different grids")
            w = w.values
        vals = vals * w
    return float(np.sum(vals) * grid.cell_volume)


def mean(f: ScalarField) -> float:
    return integrate(f) / f.grid.volume


def mean_normalize(phi: ScalarField) -> ScalarField:
    _check(phi)
    return phi.with_values(phi.values - mean(phi))


def high_frequency_fraction(f: ScalarField) -> float:
    """Share of the non-mean spectral energy carried by modes above ``N/3``."""
    grid = f.grid
    coeff = np.abs(_fft(grid, f.values)) ** 2
    # rfft stores the half-spectrum; weight interior last-axis modes twice
    k_last = grid.wavenumbers()[-1]
    mult = np.where((k_last == 0) | (k_last == grid.N // 2), 1.0, 2.0)
    energy = coeff * mult
    kmax = np.zeros(energy.shape)
    for k in grid.wavenumbers():
        kmax = np.maximum(kmax, np.abs(k))
    energy = np.where(kmax == 0, 0.0, energy)
    total = energy.sum()
    if total == 0.0:
        return 0.0
    return float(energy[kmax > grid.N * HIGH_FREQ_CUTOFF].sum() / total)


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """Discrete Green kernel of the complex Laplacian.

    ``values`` satisfies ``u = -integral(G(x - y) lap u(y))`` for mean-zero
    band-limited ``u``; ``shifted = values - min(values) >= 0`` and
    ``l1_norm`` is its integral (equal to ``-min(values) * V``).
    """

    grid: TorusGrid
    values: np.ndarray
    shifted: np.ndarray
    l1_norm: float


@functools.lru_cache(maxsize=None)
def _nyquist(grid: TorusGrid) -> np.ndarray:
    nyq = np.zeros(np.broadcast_shapes(*[k.shape for k in grid.wavenumbers()]), dtype=bool)
    for k in grid.wavenumbers():
        nyq = nyq | (np.abs(k) == grid.N // 2)
    return nyq


@functools.lru_cache(maxsize=None)
def _invertible(grid: TorusGrid) -> np.ndarray:
    """Modes on which the Laplacian is inverted: nonzero and free of any Nyquist index.

    A mode such as ``(N/2, 1)`` keeps a small symbol from its other axes; inverting
    it would give the kernel a spurious checkerboard part.
    """
    return (_lap_symbol(grid) < 0) & ~_nyquist(grid)


@functools.lru_cache(maxsize=None)
def green_kernel(grid: TorusGrid) -> GreenKernel:
    lap_sym = _lap_symbol(grid)
    ok = _invertible(grid)
    ghat = np.where(ok, -1.0 / np.where(ok, lap_sym, -1.0), 0.0)
    # G(x) = sum_k ghat_k e^{2 pi i k x}; irfftn divides by npoints
    g = _ifft(grid, ghat.astype(complex)) * grid.npoints
    shifted = g - g.min()
    l1 = float(shifted.sum() * grid.cell_volume)
    return GreenKernel(grid, g, shifted, l1)


def green_solve(f: ScalarField) -> ScalarField:
    """Mean-zero ``u`` with ``lap u = f - mean(f)`` (Nyquist-containing modes dropped)."""
    _check(f)
    grid = f.grid
    lap_sym = _lap_symbol(grid)
    ok = _invertible(grid)
    coeff = _fft(grid, f.values)
    uhat = np.where(ok, coeff / np.where(ok, lap_sym, -1.0), 0.0)
    return ScalarField(grid, _ifft(grid, uhat))


def green_convolve(kernel: np.ndarray, f: ScalarField) -> np.ndarray:
    """``integral K(x - y) f(y) dV_y`` by periodic convolution."""
    grid = f.grid
    conv = _ifft(grid, _fft(grid, kernel) * _fft(grid, f.values))
    return conv * grid.cell_volume


def torus_distance(grid: TorusGrid, center) -> np.ndarray:
    """Flat quotient distance to ``center`` (minimum over lattice translates)."""
    center = np.asarray(center, dtype=float)
    if center.size != grid.ndim_real:
        raise GridError(f"center needs {grid.ndim_real} coordinates")
    sq = 0.0
    for x, c in zip(grid.coords(), center):
        d = np.abs(x - c) % 1.0
        d = np.minimum(d, 1.0 - d)
        sq = sq + d * d
    return np.broadcast_to(np.sqrt(sq), grid.shape).copy()


def chordal_distance(grid: TorusGrid, center) -> np.ndarray:
    """Smooth periodic distance ``sqrt(sum sin^2(pi dx)) / pi``.

    Agrees with :func:`torus_distance` up to third order at ``center`` but has
    no kink on the cut locus, so fields built from it stay spectrally resolved.
    """
    center = np.asarray(center, dtype=float)
    if center.size != grid.ndim_real:
        raise GridError(f"center needs {grid.ndim_real} coordinates")
    sq = 0.0
    for x, c in zip(grid.coords(), center):
        sq = sq + np.sin(np.pi * (x - c)) ** 2
    return np.broadcast_to(np.sqrt(sq) / np.pi, grid.shape).copy()


def drop_nyquist(f: ScalarField) -> np.ndarray:
    """``f`` with every Nyquist-containing Fourier mode removed."""
    grid = f.grid
    keep = _invertible(grid) | (_lap_symbol(grid) == 0) & ~_nyquist(grid)
    return _ifft(grid, np.where(keep, _fft(grid, f.values), 0.0))

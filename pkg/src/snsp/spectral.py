"""Periodic field arithmetic on the 3-torus.

Fields are real samples on a uniform ``M**3`` grid over ``[origin, origin + L)**3``.
Spectral coefficients use the real-to-complex layout of :func:`scipy.fft.rfftn`
(last axis halved). Grid values are the source of truth; the transform is
cached on the (immutable) field object.

Odd derivatives drop the Nyquist planes so that ``gradient`` and
``divergence`` stay mutually adjoint in the discrete inner product; the
Laplacian keeps the true symbol ``-|k|**2`` so that it is invertible on every
non-constant mode.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "Field",
    "ScalarField",
    "VectorField",
    "ParameterError",
    "project_galerkin",
    "gradient",
    "divergence",
    "laplacian",
    "inv_laplacian",
    "grad_inv_lap_div",
    "dealias",
    "integrate",
    "inner",
    "l2_norm",
]

_AXES = (-3, -2, -1)


class ParameterError(ValueError):
    """Raised for out-of-range discretisation parameters."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``M`` points per axis on a cube of side ``L``.

    ``N`` is the Galerkin cut-off: ``H_N`` is spanned by the Fourier modes
    with integer multi-index ``|n|_inf <= N``.
    """

    M: int
    L: float = 2 * np.pi
    N: int | None = None
    origin: float = 0.0

    def __post_init__(self):
        if self.M <= 0 or self.M % 2:
            raise ParameterError(f"points per axis must be a positive even integer, got {self.M}")
        if not self.L > 0:
            raise ParameterError(f"side length must be positive, got {self.L}")
        if self.N is None:
            object.__setattr__(self, "N", self.M // 3)
        if not 1 <= self.N or 3 * self.N > self.M:
            raise ParameterError(f"Galerkin cut-off N={self.N} must satisfy 1 <= N <= M/3 (M={self.M})")

    # -- geometry -----------------------------------------------------------
    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.M, self.M, self.M)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.M, self.M, self.M // 2 + 1)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.origin + self.dx * np.arange(self.M)
        return tuple(np.meshgrid(x, x, x, indexing="ij"))

    # -- wavenumbers --------------------------------------------------------
    @cached_property
    def modes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer multi-index components, broadcastable to the spectral shape."""
        n = np.fft.fftfreq(self.M, 1.0 / self.M).round().astype(int)
        nr = np.arange(self.M // 2 + 1)
        return n[:, None, None], n[None, :, None], nr[None, None, :]

    @cached_property
    def mode_sup(self) -> np.ndarray:
        n0, n1, n2 = self.modes
        return np.maximum(np.maximum(np.abs(n0), np.abs(n1)), np.abs(n2))

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = 2 * np.pi / self.L
        return tuple(c * n for n in self.modes)

    @cached_property
    def _dk(self) -> tuple[np.ndarray, ...]:
        # i*k with Nyquist planes removed
        c = 2 * np.pi / self.L
        out = []
        for n in self.modes:
            k = c * n.astype(float)
            k = np.where(np.abs(n) == self.M // 2, 0.0, k)
            out.append(1j * k)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        k0, k1, k2 = self.wavevector
        return k0**2 + k1**2 + k2**2

    @cached_property
    def _inv_k2(self) -> np.ndarray:
        k2 = self.k2.copy()
        k2[0, 0, 0] = 1.0
        inv = 1.0 / k2
        inv[0, 0, 0] = 0.0
        return inv

    @cached_property
    def _rfft_weight(self) -> np.ndarray:
        # multiplicity of each stored half-spectrum column in the full spectrum
        w = np.full(self.M // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w[None, None, :]

    def galerkin_mask(self, N: int | None = None) -> np.ndarray:
        N = self.N if N is None else N
        return self.mode_sup <= N

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return 3 * self.mode_sup <= self.M

    # -- array-level transforms -------------------------------------------
    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.rfftn(a, axes=_AXES, workers=1)

    def ifft(self, ah: np.ndarray) -> np.ndarray:
        return sfft.irfftn(ah, s=self.shape, axes=_AXES, workers=1)

    def filter(self, a: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(a) * mask)

    def project(self, a: np.ndarray, N: int | None = None) -> np.ndarray:
        return self.filter(a, self.galerkin_mask(N))

    def truncate(self, a: np.ndarray) -> np.ndarray:
        return self.filter(a, self.dealias_mask)

    def grad(self, a: np.ndarray) -> np.ndarray:
        ah = self.fft(a)
        return self.ifft(np.stack([d * ah for d in self._dk]))

    def div(self, v: np.ndarray) -> np.ndarray:
        vh = self.fft(v)
        return self.ifft(sum(d * vh[i] for i, d in enumerate(self._dk)))

    def lap(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(a))

    def inv_lap(self, a: np.ndarray) -> np.ndarray:
        """Zero-mean solution of ``lap g = a - mean(a)``."""
        return self.ifft(-self._inv_k2 * self.fft(a))

    def grad_grad(self, a: np.ndarray) -> np.ndarray:
        """Hessian ``(3, 3, M, M, M)`` with the same Nyquist rule as ``grad``."""
        ah = self.fft(a)
        d = self._dk
        return self.ifft(np.stack([np.stack([d[i] * d[j] * ah for j in range(3)]) for i in range(3)]))

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        """``J[i, j] = d v_i / d x_j``."""
        vh = self.fft(v)
        return self.ifft(np.stack([np.stack([d * vh[i] for d in self._dk]) for i in range(3)]))

    def heat(self, a: np.ndarray, t: float) -> np.ndarray:
        """Exact heat semigroup ``exp(t lap)`` applied to ``a``."""
        return self.ifft(np.exp(-t * self.k2) * self.fft(a))

    def integral(self, a: np.ndarray) -> float:
        return float(np.sum(a) * self.cell_volume)

    def l2_spectral(self, ah: np.ndarray) -> float:
        """``||f||_{L^2}^2`` from half-spectrum coefficients (Parseval)."""
        return float(np.sum(self._rfft_weight * np.abs(ah) ** 2) * self.volume / self.M**6)


class Field:
    """Immutable real field on a :class:`GridSpec`."""

    ncomp: int | None = None

    def __init__(self, grid: GridSpec, values):
        values = np.array(values, dtype=float)
        expected = grid.shape if self.ncomp is None else (self.ncomp, *grid.shape)
        if values.shape != expected:
            raise ValueError(f"{type(self).__name__} expects shape {expected}, got {values.shape}")
        values.setflags(write=False)
        self._grid = grid
        self._values = values

    @property
    def grid(self) -> GridSpec:
        return self._grid

    @property
    def values(self) -> np.ndarray:
        return self._values

    @cached_property
    def hat(self) -> np.ndarray:
        h = self._grid.fft(self._values)
        h.setflags(write=False)
        return h

    def with_values(self, values):
        return type(self)(self._grid, values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._values, dtype=dtype)

    def __repr__(self):
        return f"{type(self).__name__}(M={self._grid.M}, L={self._grid.L:g})"


class ScalarField(Field):
    ncomp = None


class VectorField(Field):
    ncomp = 3


def _wrap(grid: GridSpec, values: np.ndarray) -> Field:
    return VectorField(grid, values) if values.ndim == 4 else ScalarField(grid, values)


def project_galerkin(field: Field, N: int) -> Field:
    """L2-orthogonal projection onto the span of modes with ``|n|_inf <= N``."""
    grid = field.grid
    if not 0 <= N <= grid.M // 2:
        raise ParameterError(f"projection cut-off N={N} outside [0, M/2={grid.M // 2}]")
    return type(field)(grid, grid.ifft(field.hat * grid.galerkin_mask(N)))


def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, f.grid.grad(f.values))


def divergence(v: VectorField) -> ScalarField:
    return ScalarField(v.grid, v.grid.div(v.values))


def laplacian(f: Field) -> Field:
    return type(f)(f.grid, f.grid.ifft(-f.grid.k2 * f.hat))


def inv_laplacian(f: ScalarField) -> tuple[ScalarField, float]:
    """Return the zero-mean ``g`` with ``lap g = f - mean(f)`` and the subtracted mean."""
    grid = f.grid
    mean = float(f.hat[0, 0, 0].real / grid.M**3)
    return ScalarField(grid, grid.ifft(-grid._inv_k2 * f.hat)), mean


def grad_inv_lap_div(m: VectorField) -> VectorField:
    """Gradient part of ``m``: ``grad lap^-1 div m`` applied mode-wise."""
    grid = m.grid
    d = grid._dk
    s = sum(d[i] * m.hat[i] for i in range(3)) * (-grid._inv_k2)
    return VectorField(grid, grid.ifft(np.stack([di * s for di in d])))


def dealias(field: Field) -> Field:
    """Two-thirds rule: zero every mode with ``|n|_inf > M/3``."""
    grid = field.grid
    return type(field)(grid, grid.ifft(field.hat * grid.dealias_mask))


def integrate(field: Field) -> float | np.ndarray:
    v = field.values
    if v.ndim == 4:
        return v.sum(axis=(1, 2, 3)) * field.grid.cell_volume
    return field.grid.integral(v)


def inner(a: Field, b: Field) -> float:
    return float(np.sum(a.values * b.values) * a.grid.cell_volume)


def l2_norm(field: Field) -> float:
    return float(np.sqrt(inner(field, field)))

"""Stationary Poisson coupling ``sigma lap V = rho - f`` on the torus.

Only the zero-mean part of ``rho - f`` can be matched on a periodic domain;
the subtracted mean is returned alongside the potential.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import GridSpec, ScalarField
from .thermodynamics import PressureLaw, pressure_reg

__all__ = [
    "BackgroundProfile",
    "Potential",
    "solve_potential",
    "potential_energy",
    "poisson_pressure_identity",
]


def _values(x):
    return x.values if hasattr(x, "values") else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class BackgroundProfile:
    """Nonnegative background density ``f`` with upper bound ``f_bar``."""

    f: ScalarField
    f_bar: float | None = None

    def __post_init__(self):
        v = self.f.values
        if np.any(v < 0):
            raise ValueError("background profile must be nonnegative")
        if self.f_bar is None:
            object.__setattr__(self, "f_bar", float(v.max()))
        elif np.any(v > self.f_bar):
            raise ValueError(f"background profile exceeds its bound {self.f_bar:g}")

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "BackgroundProfile":
        return cls(ScalarField(grid, np.full(grid.shape, float(value))))


@dataclass(frozen=True)
class Potential:
    V: ScalarField
    sigma: int
    mean: float

    @property
    def values(self) -> np.ndarray:
        return self.V.values

    @property
    def grid(self) -> GridSpec:
        return self.V.grid


def solve_potential(rho, f, sigma: int = 1, grid: GridSpec | None = None) -> Potential:
    """Zero-mean ``V`` with ``sigma lap V = (rho - f) - mean(rho - f)``."""
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    grid = grid or getattr(rho, "grid", None) or getattr(f, "grid", None)
    if grid is None:
        raise ValueError("a grid is needed when both inputs are plain arrays")
    src = _values(rho) - _values(f)
    sh = grid.fft(src)
    mu = float(sh[0, 0, 0].real / grid.M**3)
    V = grid.ifft(-sigma * grid._inv_k2 * sh)
    return Potential(ScalarField(grid, V), sigma, mu)


def potential_energy(V, theta: float, sigma: int, grid: GridSpec | None = None) -> float:
    """``sigma theta int |grad V|^2``."""
    grid = grid or V.grid
    g = grid.grad(_values(V))
    return float(sigma * theta * grid.integral(np.sum(g**2, axis=0)))


def poisson_pressure_identity(state, law: PressureLaw, delta: float = 0.0, Gamma: float = 6.0,
                              potential: Potential | None = None):
    """Compare ``int p(rho) sigma lap V`` with ``int p(rho) (rho - f - mu)``.

    ``state`` needs ``grid``, ``rho_values``, ``f_values`` and (unless
    ``potential`` is given) ``V``. Returns ``(lhs, rhs, residual)``.
    """
    grid = state.grid
    pot = potential if potential is not None else state.V
    rho = state.rho_values
    p = pressure_reg(rho, law, delta, Gamma)
    lhs = grid.integral(p * pot.sigma * grid.lap(pot.values))
    rhs = grid.integral(p * (rho - state.f_values - pot.mean))
    return lhs, rhs, lhs - rhs

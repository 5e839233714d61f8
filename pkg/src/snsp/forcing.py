"""Truncated cylindrical Wiener process and the noise coefficients ``g_k``.

The Brownian increments come from a counter-based Philox stream keyed by
``(seed, path)`` with the step index in the counter, so any increment can be
regenerated without replaying the stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .spectral import GridSpec
from .thermodynamics import chi

__all__ = [
    "Stream",
    "WienerIncrement",
    "wiener_increments",
    "NoiseModel",
    "eval_g",
    "eval_g_eps",
    "apply_noise",
    "ito_correction",
    "NoiseReport",
    "validate_noise_model",
]

_MASK64 = (1 << 64) - 1


class Stream(NamedTuple):
    """Identifies one block of Brownian increments."""

    seed: int
    path: int = 0
    step: int = 0
    sub: int = 0

    def at(self, step: int, sub: int = 0) -> "Stream":
        return self._replace(step=step, sub=sub)


@dataclass(frozen=True)
class WienerIncrement:
    h: float
    values: np.ndarray
    stream: Stream

    @property
    def K(self) -> int:
        return len(self.values)


def wiener_increments(h: float, K: int, stream: Stream) -> WienerIncrement:
    """``K`` independent ``N(0, h)`` draws, a pure function of ``stream``."""
    if h < 0:
        raise ValueError("time step must be nonnegative")
    bitgen = np.random.Philox(
        key=np.array([stream.seed & _MASK64, stream.path & _MASK64], dtype=np.uint64),
        counter=np.array([0, stream.sub & _MASK64, stream.step & _MASK64, 0], dtype=np.uint64),
    )
    z = np.random.Generator(bitgen).standard_normal(K)
    values = np.sqrt(h) * z
    values.setflags(write=False)
    return WienerIncrement(h, values, stream)


def _shape_functions(kind: str, K: int, grid: GridSpec, support=None):
    """Bounded spatial profiles ``phi_k`` with ``|phi_k| <= 1``."""
    x = grid.coords
    c = 2 * np.pi / grid.L
    out = np.empty((K, *grid.shape))
    for k in range(K):
        if kind == "constant":
            out[k] = 1.0
        elif kind == "fourier":
            # low-mode cosines cycling through the axes
            axis, freq = k % 3, 1 + (k // 3) % max(1, grid.N)
            out[k] = np.cos(c * freq * (x[axis] - grid.origin))
        else:
            raise ValueError(f"unknown shape function {kind!r}")
    if support is not None:
        out *= _box_bump(grid, support)
    return out


def _box_bump(grid, support):
    """Smooth bump, 1 on the inner half of ``support`` and 0 outside it."""
    lo, hi = np.asarray(support[0], float), np.asarray(support[1], float)
    b = np.ones(grid.shape)
    for i, xi in enumerate(grid.coords):
        mid, half = 0.5 * (lo[i] + hi[i]), 0.5 * (hi[i] - lo[i])
        s = np.abs(xi - mid) / half
        tau = np.clip((s - 0.5) / 0.5, 0.0, 1.0)
        b *= 1.0 - tau**3 * (10 - 15 * tau + 6 * tau**2)
    return b


@dataclass(frozen=True)
class NoiseModel:
    """Finite family ``g_k(x, rho, f, m) = c_k (alpha_k rho + beta_k f + eta_k m) phi_k(x)``.

    ``alpha`` and ``beta`` are ``(K, 3)``, ``eta`` is ``(K,)``; with
    ``|alpha_k|**2 + eta_k**2 <= 1`` and ``|beta_k| <= 1`` every growth
    condition holds by construction. ``g`` overrides the family with an
    arbitrary callable ``g(k, x, rho, f, m) -> (3, ...)`` (``k`` is 1-based);
    ``c`` must then be given explicitly.
    """

    K: int
    C: float = 0.1
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    eta: np.ndarray | None = None
    shape: str = "constant"
    support: tuple | None = None
    eps: float = 0.0
    c: np.ndarray | None = None
    g: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        K = self.K
        if self.c is None:
            if self.g is not None:
                raise ValueError("custom coefficient families need explicit decay weights c")
            object.__setattr__(self, "c", self.C * np.arange(1, K + 1, dtype=float) ** -2.0)
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(K))
        defaults = {"alpha": np.zeros((K, 3)), "beta": np.zeros((K, 3)), "eta": np.ones(K)}
        for name, default in defaults.items():
            val = getattr(self, name)
            val = default if val is None else np.asarray(val, dtype=float).reshape(default.shape)
            object.__setattr__(self, name, val)
        if np.any(self.c < 0):
            raise ValueError("decay weights must be nonnegative")

    def shape_functions(self, grid: GridSpec) -> np.ndarray:
        return _shape_functions(self.shape, self.K, grid, self.support)


def eval_g(k: int, x, rho, f, m, model: NoiseModel, phi=None) -> np.ndarray:
    """Coefficient ``g_k`` (``k`` 1-based) evaluated pointwise, shape ``(3, ...)``.

    ``phi`` is the precomputed shape-function value at ``x``; when omitted it
    is taken as 1 (constant shapes) or read from a grid passed as ``x``.
    """
    rho = np.asarray(rho, dtype=float)
    f = np.asarray(f, dtype=float)
    m = np.asarray(m, dtype=float)
    if model.g is not None:
        return np.asarray(model.g(k, x, rho, f, m), dtype=float)
    i = k - 1
    if phi is None:
        phi = model.shape_functions(x)[i] if isinstance(x, GridSpec) else 1.0
    a, b, e = model.alpha[i], model.beta[i], model.eta[i]
    expand = (slice(None),) + (None,) * rho.ndim
    return model.c[i] * (a[expand] * rho + b[expand] * f + e * m) * phi


def noise_cutoff(rho, m, eps: float):
    """Pointwise factor ``chi(eps/rho - 1) chi(|u| - 1/eps)``; zero at vacuum."""
    rho = np.asarray(rho, dtype=float)
    if eps <= 0:
        return np.ones_like(rho)
    floor = np.finfo(float).tiny * 1e6
    safe = np.where(rho > floor, rho, 1.0)
    speed = np.sqrt(np.sum(np.asarray(m, dtype=float) ** 2, axis=0)) / safe
    out = chi(eps / safe - 1.0) * chi(speed - 1.0 / eps)
    return np.where(rho > floor, out, 0.0)


def eval_g_eps(k: int, x, rho, f, m, eps: float, model: NoiseModel, phi=None) -> np.ndarray:
    """``g_{k,eps} = chi(eps/rho - 1) chi(|m/rho| - 1/eps) g_k``."""
    return noise_cutoff(rho, m, eps) * eval_g(k, x, rho, f, m, model, phi)


def projected_coefficients(grid: GridSpec, rho, f, m, model: NoiseModel, eps: float, N: int | None = None):
    """Stack ``(K, 3, M, M, M)`` of ``Pi_N g_{k,eps}`` on the grid."""
    phi = model.shape_functions(grid)
    cut = noise_cutoff(rho, m, eps)
    out = np.empty((model.K, 3, *grid.shape))
    for i in range(model.K):
        gk = cut * eval_g(i + 1, grid, rho, f, m, model, phi[i])
        out[i] = grid.project(gk, N)
    return out


def apply_noise(state, increment: WienerIncrement, model: NoiseModel, N: int | None = None,
                eps: float | None = None, rho_outer=None) -> np.ndarray:
    """Momentum kick ``sum_k Pi_N[rho Pi_N g_{k,eps}(rho, f, rho u)] dbeta_k``.

    ``rho_outer`` replaces the density multiplying the projected coefficient
    (the stepper passes the end-of-window density there).
    """
    grid = state.grid
    eps = model.eps if eps is None else eps
    rho = state.rho_values
    m_phys = rho * state.u_values
    pg = projected_coefficients(grid, rho, state.f_values, m_phys, model, eps, N)
    outer = rho if rho_outer is None else np.asarray(rho_outer)
    acc = np.tensordot(increment.values, pg, axes=(0, 0))
    return grid.project(outer * acc, N)


def ito_correction(state, model: NoiseModel, N: int | None = None, eps: float | None = None) -> float:
    """``1/2 int rho sum_k |Pi_N g_{k,eps}|^2 dx``."""
    grid = state.grid
    eps = model.eps if eps is None else eps
    rho = state.rho_values
    pg = projected_coefficients(grid, rho, state.f_values, rho * state.u_values, model, eps, N)
    return 0.5 * grid.integral(rho * np.sum(pg**2, axis=(0, 1)))


@dataclass
class NoiseReport:
    passed: bool
    growth_ratio: float
    derivative_ratio: float
    summability: float
    budget: float
    violations: list[str]


def validate_noise_model(model: NoiseModel, samples, budget: float = 10.0, tol: float = 1e-6,
                         h: float = 1e-6) -> NoiseReport:
    """Check the growth, derivative and summability conditions on samples.

    ``samples`` is an iterable of ``(x, rho, f, m)`` with ``m`` a 3-vector;
    ``x`` is passed through to custom coefficient callables. Ratios are the
    worst observed ``|g_k| / (c_k (rho + f + |m|))`` and
    ``|grad_{rho,m} g_k| / c_k`` (spectral norm of the finite-difference
    Jacobian).
    """
    growth = 0.0
    deriv = 0.0
    for x, rho, f, m in samples:
        m = np.asarray(m, dtype=float)
        bound = rho + f + np.linalg.norm(m)
        for k in range(1, model.K + 1):
            ck = model.c[k - 1]
            g = eval_g(k, x, rho, f, m, model)
            if ck == 0:
                if np.any(g != 0):
                    growth = np.inf
                continue
            if bound > 0:
                growth = max(growth, float(np.linalg.norm(g) / (ck * bound)))
            elif np.any(g != 0):
                growth = np.inf
            jac = np.empty((3, 4))
            step = h * max(1.0, rho)
            lo = max(rho - step, 0.0)
            jac[:, 0] = (eval_g(k, x, rho + step, f, m, model) - eval_g(k, x, lo, f, m, model)) / (rho + step - lo)
            for j in range(3):
                e = np.zeros(3)
                e[j] = h * max(1.0, abs(m[j]))
                jac[:, j + 1] = (eval_g(k, x, rho, f, m + e, model) - eval_g(k, x, rho, f, m - e, model)) / (2 * e[j])
            deriv = max(deriv, float(np.linalg.norm(jac, 2) / ck))
    summ = float(np.sum(model.c**2))
    violations = []
    if growth > 1 + tol:
        violations.append(f"growth bound exceeded (ratio {growth:.4g})")
    if deriv > 1 + tol:
        violations.append(f"derivative bound exceeded (ratio {deriv:.4g})")
    if summ > budget:
        violations.append(f"sum c_k^2 = {summ:.4g} exceeds budget {budget:g}")
    return NoiseReport(not violations, growth, deriv, summ, budget, violations)

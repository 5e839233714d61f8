"""Initial data: analytic profiles and the increasing-torus family for whole-space runs."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..spectral import GridSpec
from ..stepper import SimState, initial_state
from ..thermodynamics import PressureLaw, relative_potential
from .config import ConfigError, RunConfig
from .io import read_snapshot

__all__ = [
    "InitialData",
    "smooth_profile",
    "eta_cutoff",
    "build_whole_space_data",
    "whole_space_energy_check",
    "whole_space_profiles",
    "build_initial",
]

log = logging.getLogger(__name__)


@dataclass
class InitialData:
    grid: GridSpec
    rho0: np.ndarray
    m0: np.ndarray
    f: np.ndarray
    f_bar: float | None = None
    discarded_mass: float = 0.0
    eta: np.ndarray | None = None

    def validate(self, eps: float = 0.0, bound: float | None = None):
        """Check positivity, the optional ``bound <= rho <= 1/bound`` window and ``f <= f_bar``."""
        e = []
        if np.any(self.rho0 < 0):
            e.append("initial.rho: density must be nonnegative")
        vac = self.rho0 == 0
        if np.any(vac):
            if np.any(self.m0[:, vac] != 0):
                e.append("initial.m: momentum must vanish where the density does")
            if eps <= 0:
                e.append("initial.rho: vacuum regions need eps > 0")
        if bound is not None and (self.rho0.min() < bound or self.rho0.max() > 1 / bound):
            e.append(f"initial.rho: outside [{bound:g}, {1 / bound:g}]")
        if np.any(self.f < 0):
            e.append("background.f: must be nonnegative")
        if self.f_bar is not None and np.any(self.f > self.f_bar):
            e.append(f"background.f: exceeds f_bar={self.f_bar:g}")
        if e:
            raise ConfigError(e)
        return self

    def state(self, sigma: int = 1, N: int | None = None, **kw) -> SimState:
        return initial_state(self.grid, self.rho0, f=self.f, sigma=sigma, N=N, m=self.m0, **kw)


# -- analytic profiles ---------------------------------------------------------

def smooth_profile(grid: GridSpec, rho_mean=1.0, amplitude=0.1, velocity=0.1):
    """Low-mode density and velocity, exactly representable on any grid with ``M >= 6``."""
    c = 2 * np.pi / grid.L
    x, y, z = (c * (xi - grid.origin) for xi in grid.coords)
    s = 0.5 * np.cos(x) * np.sin(y) + 0.3 * np.cos(z) + 0.2 * np.sin(x + z)
    rho = rho_mean * (1 + amplitude * s)
    u = velocity * np.stack([np.sin(y), np.sin(z), np.sin(x)])
    return rho, u


def bump(grid: GridSpec, width: float):
    r2 = sum(xi**2 for xi in grid.coords)
    return np.exp(-r2 / width**2)


def eta_cutoff(grid: GridSpec, L: float) -> np.ndarray:
    """Product cut-off: 1 on ``[-L/2, L/2]^3``, 0 outside ``(-3L/4, 3L/4)^3``, C2 quintic ramp."""
    out = np.ones(grid.shape)
    for xi in grid.coords:
        tau = np.clip((np.abs(xi) - L / 2) / (L / 4), 0.0, 1.0)
        out *= 1.0 - tau**3 * (10 - 15 * tau + 6 * tau**2)
    return out


def _on_grid(data, grid, ncomp=None):
    if callable(data):
        return np.asarray(data(*grid.coords), dtype=float)
    arr = np.asarray(data, dtype=float)
    shape = grid.shape if ncomp is None else (ncomp, *grid.shape)
    return np.broadcast_to(arr, shape).astype(float)


def build_whole_space_data(rho0, m0, f, rho_bar: float, L: float, M: int, N: int | None = None,
                           noise_support=None) -> InitialData:
    """Periodise whole-space data onto the torus ``[-L, L)^3`` with ``M`` points per axis.

    ``rho0``, ``m0`` and ``f`` are callables of the coordinate arrays (or
    arrays already sampled on the target grid). The background ``f`` is
    restricted by the same cut-off; the mass it loses is reported.
    """
    if rho_bar < 1:
        raise ConfigError([f"physics.rho_bar: far-field density must be >= 1 (got {rho_bar})"])
    if noise_support is not None:
        lo, hi = np.asarray(noise_support[0], float), np.asarray(noise_support[1], float)
        if np.any(lo < -L) or np.any(hi > L):
            raise ConfigError([f"noise.support: {noise_support} is not contained in [-{L}, {L}]^3"])
    grid = GridSpec(M, 2 * L, N, origin=-L)
    r0 = _on_grid(rho0, grid)
    m = _on_grid(m0, grid, 3)
    f0 = _on_grid(f, grid)
    if np.any(r0 < 0):
        raise ConfigError(["initial.rho: density must be nonnegative"])
    if np.any((r0 == 0) & np.any(m != 0, axis=0)):
        raise ConfigError(["initial.m: momentum must vanish where the density does"])
    eta = eta_cutoff(grid, L)
    rho_L = eta * r0 + (1 - eta) * rho_bar
    safe = np.where(r0 > 0, r0, 1.0)
    factor = np.where(r0 > 0, eta * np.sqrt(rho_L / safe), 0.0)
    m_L = factor * m
    f_L = eta * f0
    discarded = grid.integral(f0 - f_L)
    if discarded > 0:
        log.info("background restricted to the torus: discarded mass %.6g", discarded)
    f_bar = float(f0.max()) if f0.size else None
    return InitialData(grid, rho_L, m_L, f_L, f_bar, discarded, eta)


def whole_space_energy_check(data: InitialData, rho0, m0, law: PressureLaw, rho_bar: float,
                             delta: float = 0.0, Gamma: float = 6.0, tol: float = 1e-12) -> dict:
    """Compare kinetic + relative-potential energy of built data with the original data.

    Returns pointwise and integrated comparisons over the torus box. Both
    follow from convexity, so both should hold to rounding.
    """
    grid = data.grid
    r0 = _on_grid(rho0, grid)
    m = _on_grid(m0, grid, 3)

    def density(r, mm):
        safe = np.where(r > 0, r, 1.0)
        kin = np.where(r > 0, 0.5 * np.sum(mm**2, axis=0) / safe, 0.0)
        return kin + relative_potential(r, rho_bar, law, delta, Gamma)

    built = density(data.rho0, data.m0)
    orig = density(r0, m)
    scale = np.maximum(1.0, np.abs(orig))
    pointwise = float(np.max((built - orig) / scale))
    E_built, E_orig = grid.integral(built), grid.integral(orig)
    return {
        "E_built": E_built,
        "E_original": E_orig,
        "max_pointwise_excess": pointwise,
        "passed": bool(pointwise <= tol and E_built <= E_orig * (1 + tol) + tol),
    }


# -- config-driven construction ------------------------------------------------

def _background(cfg: RunConfig, grid: GridSpec) -> np.ndarray:
    b = cfg.background
    if b.profile == "snapshot":
        arr, _ = read_snapshot(b.path, grid=grid)
        return arr
    base = cfg.initial.rho_mean if b.value is None else b.value
    if b.profile == "constant":
        return np.full(grid.shape, float(base))
    c = 2 * np.pi / grid.L
    return base * (1 + b.amplitude * np.cos(c * (grid.coords[0] - grid.origin)))


def whole_space_profiles(cfg: RunConfig):
    """Callables ``(rho0, m0, f)`` on R^3: Gaussian perturbations of the far field."""
    ic, rb, w = cfg.initial, cfg.physics.rho_bar, cfg.initial.width

    def rho0(x, y, z):
        return rb + ic.amplitude * rb * np.exp(-(x**2 + y**2 + z**2) / w**2)

    def m0(x, y, z):
        g = np.exp(-(x**2 + y**2 + z**2) / w**2)
        return ic.velocity * rho0(x, y, z) * np.stack([g * np.sin(y), g * np.sin(z), g * np.sin(x)])

    def f(x, y, z):
        if cfg.background.value is not None:
            return np.full_like(x, cfg.background.value)
        return rb * np.exp(-(x**2 + y**2 + z**2) / (4 * w**2))

    return rho0, m0, f


def build_initial(cfg: RunConfig) -> tuple[SimState, InitialData]:
    """Initial state for ``cfg`` (torus or increasing-torus whole-space data)."""
    ic = cfg.initial
    params = cfg.params()
    if cfg.whole_space is not None:
        ws = cfg.whole_space
        rho0, m0, f = whole_space_profiles(cfg)
        noise = cfg.noise
        data = build_whole_space_data(rho0, m0, f, cfg.physics.rho_bar, ws.L, cfg.grid.M, cfg.grid.N,
                                      noise_support=noise.support if noise.K else None)
    else:
        grid = cfg.grid_spec()
        if ic.profile == "smooth":
            rho, u = smooth_profile(grid, ic.rho_mean, ic.amplitude, ic.velocity)
        elif ic.profile == "constant":
            rho = np.full(grid.shape, ic.rho_mean)
            u = np.zeros((3, *grid.shape))
            u[0] = ic.velocity
        else:
            centred = GridSpec(grid.M, grid.L, grid.N, origin=-grid.L / 2)
            rho = ic.rho_mean * (1 + ic.amplitude * bump(centred, ic.width))
            u = ic.velocity * np.stack([np.sin(c) for c in grid.coords[::-1]])
        data = InitialData(grid, rho, rho * u, _background(cfg, grid))
    data.validate(eps=params.eps)
    grid = data.grid
    if cfg.whole_space is None:
        # torus profiles are specified by velocity; keep u exactly in the Galerkin space
        u = data.m0 / np.where(data.rho0 > 0, data.rho0, 1.0)
        state = initial_state(grid, data.rho0, u, data.f, cfg.physics.sigma)
    else:
        state = data.state(cfg.physics.sigma, tol=cfg.stepping.mass_tol)
    return state, data
